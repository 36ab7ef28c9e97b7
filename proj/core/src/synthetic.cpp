#include "melfill/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "melfill/error.hpp"

namespace melfill {

AudioClip synth_harmonic_clip(std::mt19937_64& rng, double seconds, int sample_rate) {
  require(seconds > 0.0, ErrorCode::kInvalidArgument, "synth_harmonic_clip: seconds <= 0");
  std::uniform_real_distribution<double> f0_draw(110.0, 220.0);
  std::uniform_real_distribution<double> glide_draw(0.4, 1.0);  // octaves per second
  std::uniform_real_distribution<double> tilt_draw(0.7, 1.3);
  std::uniform_real_distribution<double> phase_draw(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double f0_start = f0_draw(rng);
  const double glide = (rng() & 1 ? 1.0 : -1.0) * glide_draw(rng);
  const double tilt = tilt_draw(rng);
  const int harmonics = 6 + static_cast<int>(rng() % 5);
  std::vector<double> phase(harmonics);
  for (auto& p : phase) p = phase_draw(rng);

  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  const double nyquist_guard = 0.45 * sample_rate;
  // Phase of the fundamental is the integral of f0(t) = f0_start * 2^(glide t).
  const double k_ln2 = glide * std::numbers::ln2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = f0_start * std::exp2(glide * t);
    const double cycles = std::abs(k_ln2) < 1e-12 ? f0_start * t
                                                  : f0_start * (std::exp2(glide * t) - 1.0) / k_ln2;
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      if (h * f0 > nyquist_guard) break;
      s += std::pow(static_cast<double>(h), -tilt) *
           std::sin(2.0 * std::numbers::pi * h * cycles + phase[h - 1]);
    }
    clip.samples[i] = static_cast<float>(0.25 * s + 1e-3 * noise(rng));
  }
  return clip;
}

void write_synthetic_corpus(const std::filesystem::path& root, int n_clips, std::uint64_t seed,
                            double seconds) {
  require(n_clips >= 0, ErrorCode::kInvalidArgument, "write_synthetic_corpus: n_clips < 0");
  std::filesystem::create_directories(root / "wavs");
  std::ofstream meta(root / "metadata.csv");
  require(static_cast<bool>(meta), ErrorCode::kIo, "cannot write " + (root / "metadata.csv").string());
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n_clips; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "SYN-%04d", i);
    write_wav(root / "wavs" / (std::string(id) + ".wav"), synth_harmonic_clip(rng, seconds));
    meta << id << "|harmonic glide " << i << "|harmonic glide " << i << '\n';
  }
}

}  // namespace melfill
