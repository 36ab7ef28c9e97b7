#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "melfill/audio.hpp"

namespace melfill {

inline constexpr int kPesqSampleRate = 16000;
inline constexpr double kPesqMinSeconds = 0.25;

/// Locates tools/pesq_score.py ($MELFILL_PESQ_SCRIPT overrides).
std::filesystem::path pesq_script();

/// True when python3 can import the `pesq` package. Cached after first call.
bool pesq_available();

/// Wideband P.862.2 MOS-LQO of `degraded` against `reference`. Both clips are
/// resampled to 16 kHz and truncated to the shorter length.
double pesq_mos(const AudioClip& reference, const AudioClip& degraded);

/// Batched form; one external process for all pairs. Failed pairs are NaN.
std::vector<double> pesq_mos_batch(
    const std::vector<std::pair<const AudioClip*, const AudioClip*>>& pairs);

}  // namespace melfill
