#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "melfill/audio.hpp"

namespace melfill {

/// Analysis parameters shared by the whole pipeline.
struct MelConfig {
  int sample_rate = kCorpusSampleRate;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 80;
  double fmin = 80.0;
  double fmax = 7600.0;

  int n_bins() const { return n_fft / 2 + 1; }
  bool operator==(const MelConfig&) const = default;
};

inline constexpr float kLogFloor = 1e-10f;
inline constexpr float kLogFloorValue = -10.0f;  // log10(kLogFloor)
inline constexpr int kStandardFrames = 256;

enum class MelState { kPowerMel = 0, kLogMel = 1, kNormalized = 2 };

std::string_view to_string(MelState state);

/// n_mels x frames, stored row-major (one row per mel channel).
struct MelSpectrogram {
  int n_mels = 0;
  int frames = 0;
  MelState state = MelState::kLogMel;
  std::vector<float> values;

  MelSpectrogram() = default;
  MelSpectrogram(int mels, int n_frames, MelState s, float fill = 0.0f)
      : n_mels(mels), frames(n_frames), state(s),
        values(static_cast<std::size_t>(mels) * n_frames, fill) {}

  float& at(int mel, int frame) {
    return values[static_cast<std::size_t>(mel) * frames + frame];
  }
  float at(int mel, int frame) const {
    return values[static_cast<std::size_t>(mel) * frames + frame];
  }
};

struct MelFilterbank {
  MelConfig config;
  Eigen::MatrixXf weights;    // n_mels x n_bins
  Eigen::MatrixXf pseudo_inverse;  // n_bins x n_mels
  std::vector<double> band_edges_hz;  // n_mels + 2 points; row r spans [r, r+2]

  double center_hz(int row) const { return band_edges_hz[row + 1]; }
};

/// Corpus normalisation statistics. `train_split_hash` ties them to the split
/// they were computed on.
struct NormStats {
  double mu = 0.0;
  double sigma = 1.0;
  double std_min = -1.0;
  double std_max = 1.0;
  std::string train_split_hash;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// 1 + floor((N - n_fft) / hop) for N >= n_fft, else 0.
int frame_count(std::size_t samples, const MelConfig& config = {});

/// Periodic Hann window of the given length.
std::vector<float> hann_window(int length);

AudioClip trim_silence(const AudioClip& clip, double threshold_db = 60.0,
                       const MelConfig& config = {});

/// Area-normalised triangular filters on the (Slaney) mel scale.
MelFilterbank build_mel_filterbank(const MelConfig& config = {});

/// Squared-magnitude STFT, frames x n_bins, row-major. No centre padding.
std::vector<float> power_spectrogram(std::span<const float> samples,
                                     const MelConfig& config);

MelSpectrogram mel_analyze(const AudioClip& clip, const MelFilterbank& fb);

NormStats compute_corpus_stats(std::span<const MelSpectrogram> log_mels,
                               std::string train_split_hash);

MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats);
MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats);

/// Truncates or right-pads with the silence value of the mel's state.
MelSpectrogram fix_length(const MelSpectrogram& mel,
                          int target_frames = kStandardFrames);

AudioClip griffin_lim_invert(const MelSpectrogram& log_mel,
                             const MelFilterbank& fb, int iterations = 60);

}  // namespace melfill
