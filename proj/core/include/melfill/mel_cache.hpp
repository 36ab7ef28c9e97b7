#pragma once

#include <filesystem>

#include "melfill/dsp.hpp"

namespace melfill {

// Binary layout (little-endian):
//   char[4] magic "MELC" | u32 version | u32 n_mels | u32 n_frames |
//   u32 state | char[64] stats hash (NUL padded) | f32[n_mels * n_frames]
inline constexpr std::uint32_t kMelCacheVersion = 1;
inline constexpr std::size_t kMelCacheHashBytes = 64;

void write_mel_cache(const std::filesystem::path& path, const MelSpectrogram& mel,
                     const std::string& stats_hash);

struct CachedMel {
  MelSpectrogram mel;
  std::string stats_hash;
};

CachedMel read_mel_cache(const std::filesystem::path& path);

/// Stats file: JSON object {mu, sigma, std_min, std_max, train_split_hash}.
void write_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_stats(const std::filesystem::path& path);

/// Content digest of the stats, used to tag derived artefacts.
std::string stats_digest(const NormStats& stats);

}  // namespace melfill
