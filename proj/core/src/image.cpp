#include "melfill/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>

#include "melfill/error.hpp"

namespace melfill {

namespace {

// Dark purple -> orange -> pale yellow, similar to common spectrogram maps.
constexpr std::array<std::array<float, 3>, 5> kPalette{{
    {0.00f, 0.00f, 0.02f},
    {0.32f, 0.07f, 0.45f},
    {0.72f, 0.21f, 0.47f},
    {0.99f, 0.56f, 0.26f},
    {0.99f, 0.99f, 0.75f},
}};

std::array<png_byte, 3> colour(float u) {
  u = std::clamp(u, 0.0f, 1.0f) * (kPalette.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(u), kPalette.size() - 2);
  const float f = u - static_cast<float>(i);
  std::array<png_byte, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const float v = kPalette[i][c] + f * (kPalette[i + 1][c] - kPalette[i][c]);
    rgb[c] = static_cast<png_byte>(v * 255.0f + 0.5f);
  }
  return rgb;
}

constexpr int kSeparator = 2;

}  // namespace

void write_spectrogram_png(const std::filesystem::path& path,
                           const std::vector<const MelSpectrogram*>& panels, int scale) {
  require(!panels.empty() && scale >= 1, ErrorCode::kInvalidArgument,
          "write_spectrogram_png: nothing to draw");
  int width = 0, height = 0;
  for (const auto* p : panels) {
    width = std::max(width, p->frames * scale);
    height += p->n_mels * scale + kSeparator;
  }
  height -= kSeparator;
  std::vector<png_byte> pixels(static_cast<std::size_t>(width) * height * 3, 255);

  int y0 = 0;
  for (const auto* p : panels) {
    float lo = -1.0f, hi = 1.0f;
    if (p->state != MelState::kNormalized && !p->values.empty()) {
      const auto [mn, mx] = std::minmax_element(p->values.begin(), p->values.end());
      lo = *mn;
      hi = std::max(*mx, *mn + 1e-6f);
    }
    for (int r = 0; r < p->n_mels; ++r) {
      for (int t = 0; t < p->frames; ++t) {
        const auto rgb = colour((p->at(r, t) - lo) / (hi - lo));
        for (int dy = 0; dy < scale; ++dy) {
          const int y = y0 + (p->n_mels - 1 - r) * scale + dy;
          for (int dx = 0; dx < scale; ++dx) {
            png_byte* px = &pixels[(static_cast<std::size_t>(y) * width + t * scale + dx) * 3];
            std::copy(rgb.begin(), rgb.end(), px);
          }
        }
      }
    }
    y0 += p->n_mels * scale + kSeparator;
  }

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), std::fclose);
  require(file != nullptr, ErrorCode::kIo, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, &pixels[static_cast<std::size_t>(y) * width * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace melfill
