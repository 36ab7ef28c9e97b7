#include "melfill/mel_cache.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "melfill/digest.hpp"
#include "melfill/error.hpp"

namespace melfill {

namespace {

static_assert(std::endian::native == std::endian::little,
              "mel cache I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'M', 'E', 'L', 'C'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void write_mel_cache(const std::filesystem::path& path, const MelSpectrogram& mel,
                     const std::string& stats_hash) {
  require(mel.values.size() == static_cast<std::size_t>(mel.n_mels) * mel.frames,
          ErrorCode::kShapeMismatch, "write_mel_cache: inconsistent spectrogram");
  require(stats_hash.size() <= kMelCacheHashBytes, ErrorCode::kInvalidArgument,
          "write_mel_cache: stats hash longer than 64 bytes");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kMelCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(mel.n_mels));
  put_u32(out, static_cast<std::uint32_t>(mel.frames));
  put_u32(out, static_cast<std::uint32_t>(mel.state));
  std::array<char, kMelCacheHashBytes> hash{};
  std::memcpy(hash.data(), stats_hash.data(), stats_hash.size());
  out.write(hash.data(), hash.size());
  out.write(reinterpret_cast<const char*>(mel.values.data()),
            static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

CachedMel read_mel_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  require(in && magic == kMagic, ErrorCode::kFormat, path.string() + ": bad magic");
  const std::uint32_t version = get_u32(in);
  require(version == kMelCacheVersion, ErrorCode::kFormat,
          path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t mels = get_u32(in);
  const std::uint32_t frames = get_u32(in);
  const std::uint32_t state = get_u32(in);
  require(in && state <= 2 && mels > 0, ErrorCode::kFormat,
          path.string() + ": corrupt header");
  std::array<char, kMelCacheHashBytes> hash{};
  in.read(hash.data(), hash.size());

  CachedMel out;
  out.mel = MelSpectrogram(static_cast<int>(mels), static_cast<int>(frames),
                           static_cast<MelState>(state));
  in.read(reinterpret_cast<char*>(out.mel.values.data()),
          static_cast<std::streamsize>(out.mel.values.size() * sizeof(float)));
  require(static_cast<bool>(in), ErrorCode::kFormat, path.string() + ": truncated payload");
  out.stats_hash.assign(hash.data(), strnlen(hash.data(), hash.size()));
  return out;
}

void write_stats(const std::filesystem::path& path, const NormStats& stats) {
  nlohmann::json j{{"mu", stats.mu},
                   {"sigma", stats.sigma},
                   {"std_min", stats.std_min},
                   {"std_max", stats.std_max},
                   {"train_split_hash", stats.train_split_hash}};
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

NormStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    NormStats s;
    s.mu = j.at("mu").get<double>();
    s.sigma = j.at("sigma").get<double>();
    s.std_min = j.at("std_min").get<double>();
    s.std_max = j.at("std_max").get<double>();
    s.train_split_hash = j.at("train_split_hash").get<std::string>();
    require(s.sigma > 0.0 && s.std_min < s.std_max, ErrorCode::kFormat,
            path.string() + ": invalid statistics");
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

std::string stats_digest(const NormStats& stats) {
  // %a keeps the exact binary value of each double.
  char buf[256];
  std::snprintf(buf, sizeof buf, "%a|%a|%a|%a|", stats.mu, stats.sigma,
                stats.std_min, stats.std_max);
  return sha256_hex(std::string(buf) + stats.train_split_hash);
}

}  // namespace melfill
