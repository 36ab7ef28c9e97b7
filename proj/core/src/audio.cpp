#include "melfill/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "melfill/error.hpp"

namespace melfill {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

WavInfo probe_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open wav " + path.string());
  unsigned char head[12];
  in.read(reinterpret_cast<char*>(head), 12);
  require(in && std::memcmp(head, "RIFF", 4) == 0 && std::memcmp(head + 8, "WAVE", 4) == 0,
          ErrorCode::kFormat, path.string() + ": not a RIFF/WAVE file");
  WavInfo info;
  std::size_t data_size = 0;
  bool have_data = false;
  unsigned char chunk[8];
  while (in.read(reinterpret_cast<char*>(chunk), 8)) {
    const std::uint32_t size = read_u32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      unsigned char fmt[16];
      in.read(reinterpret_cast<char*>(fmt), 16);
      info.channels = read_u16(fmt + 2);
      info.sample_rate = static_cast<int>(read_u32(fmt + 4));
      info.bits_per_sample = read_u16(fmt + 14);
      in.seekg(size - 16 + (size & 1), std::ios::cur);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data_size = size;
      have_data = true;
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  require(info.channels > 0 && info.bits_per_sample >= 8 && have_data, ErrorCode::kFormat,
          path.string() + ": missing fmt or data chunk");
  info.frames = data_size / (static_cast<std::size_t>(info.bits_per_sample / 8) * info.channels);
  return info;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound,
          "cannot open wav " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorCode::kFormat, path.string() + ": not a RIFF/WAVE file");

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = static_cast<int>(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  require(channels > 0 && rate > 0 && data != nullptr, ErrorCode::kFormat,
          path.string() + ": missing fmt or data chunk");
  require((format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
              (format == 3 && bits == 32),
          ErrorCode::kFormat,
          path.string() + ": unsupported sample format " + std::to_string(format) +
              "/" + std::to_string(bits) + " bit");

  const int bytes_per = bits / 8;
  const std::size_t frames = data_size / (static_cast<std::size_t>(bytes_per) * channels);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * bytes_per;
      double v = 0.0;
      if (format == 3) {
        float fv;
        std::memcpy(&fv, p, 4);
        v = fv;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[f] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (float s : clip.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0 && clip.sample_rate > 0, ErrorCode::kInvalidArgument,
          "resample: rates must be positive");
  if (target_rate == clip.sample_rate) return clip;

  constexpr int kZeroCrossings = 32;
  constexpr double kBeta = 8.6;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  constexpr int kTable = 4096;
  std::vector<double> kaiser(kTable + 2);
  for (int i = 0; i <= kTable + 1; ++i) {
    const double r = std::min(1.0, static_cast<double>(i) / kTable);
    kaiser[i] = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
  }

  const auto in_len = static_cast<long>(clip.samples.size());
  const auto out_len = static_cast<long>(
      std::floor(static_cast<double>(in_len) * target_rate / clip.sample_rate));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(std::max(0L, out_len)));
  for (long n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * clip.sample_rate / target_rate;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(in_len - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double x = t - static_cast<double>(k);
      const double pos = std::abs(x) / half_width * kTable;
      const auto idx = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(idx);
      const double window = kaiser[idx] + frac * (kaiser[idx + 1] - kaiser[idx]);
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace melfill
