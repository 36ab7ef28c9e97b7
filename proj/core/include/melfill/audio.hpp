#pragma once

#include <filesystem>
#include <vector>

namespace melfill {

inline constexpr int kCorpusSampleRate = 22050;

/// Mono waveform, amplitudes nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kCorpusSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::size_t frames = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0;
  }
};

/// Parses only the RIFF chunk headers.
WavInfo probe_wav(const std::filesystem::path& path);

/// Reads a PCM WAV (8/16/24/32-bit integer or 32-bit float). Multi-channel
/// input is mixed down to mono.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono; samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Band-limited rational resampling (windowed sinc, Kaiser window).
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace melfill
