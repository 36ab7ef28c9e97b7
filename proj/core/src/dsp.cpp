#include "melfill/dsp.hpp"

#include <fftw3.h>

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "melfill/error.hpp"

namespace melfill {

namespace {

std::mutex g_fftw_planner;

// Single-size real FFT pair. FFTW's planner is not re-entrant, execution is.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard lock(g_fftw_planner);
    time_ = fftwf_alloc_real(n);
    freq_ = fftwf_alloc_complex(n / 2 + 1);
    forward_ = fftwf_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftwf_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(g_fftw_planner);
    fftwf_destroy_plan(forward_);
    fftwf_destroy_plan(inverse_);
    fftwf_free(time_);
    fftwf_free(freq_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  float* time() { return time_; }
  std::complex<float>* freq() { return reinterpret_cast<std::complex<float>*>(freq_); }
  void forward() { fftwf_execute(forward_); }
  // Unnormalised: the caller divides by n.
  void inverse() { fftwf_execute(inverse_); }
  int size() const { return n_; }

 private:
  int n_;
  float* time_;
  fftwf_complex* freq_;
  fftwf_plan forward_;
  fftwf_plan inverse_;
};

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMelLogStartHz = 1000.0;
constexpr double kMelLogStartMel = kMelLogStartHz / kMelLinearStep;
const double kMelLogStep = std::log(6.4) / 27.0;

// Complex STFT with the analysis window applied; frames x bins.
std::vector<std::complex<float>> complex_stft(std::span<const float> samples,
                                              const MelConfig& config,
                                              const std::vector<float>& window,
                                              RealFft& fft) {
  const int frames = frame_count(samples.size(), config);
  const int bins = config.n_bins();
  std::vector<std::complex<float>> out(static_cast<std::size_t>(frames) * bins);
  for (int t = 0; t < frames; ++t) {
    const float* src = samples.data() + static_cast<std::size_t>(t) * config.hop;
    for (int i = 0; i < config.n_fft; ++i) fft.time()[i] = src[i] * window[i];
    fft.forward();
    std::copy_n(fft.freq(), bins, out.begin() + static_cast<std::ptrdiff_t>(t) * bins);
  }
  return out;
}

// Weighted overlap-add inverse of complex_stft.
std::vector<float> inverse_stft(const std::vector<std::complex<float>>& spec,
                                int frames, const MelConfig& config,
                                const std::vector<float>& window,
                                RealFft& fft) {
  const int bins = config.n_bins();
  const std::size_t length =
      frames > 0 ? static_cast<std::size_t>(frames - 1) * config.hop + config.n_fft : 0;
  std::vector<double> acc(length, 0.0), norm(length, 0.0);
  const float scale = 1.0f / static_cast<float>(config.n_fft);
  for (int t = 0; t < frames; ++t) {
    std::copy_n(spec.begin() + static_cast<std::ptrdiff_t>(t) * bins, bins, fft.freq());
    fft.inverse();
    const std::size_t base = static_cast<std::size_t>(t) * config.hop;
    for (int i = 0; i < config.n_fft; ++i) {
      acc[base + i] += static_cast<double>(fft.time()[i]) * scale * window[i];
      norm[base + i] += static_cast<double>(window[i]) * window[i];
    }
  }
  // Near the ends the summed squared window falls towards zero and acc/norm
  // turns into y/w; flooring the divisor tapers those samples instead.
  if (length == 0) return {};
  const double floor = 0.1 * *std::max_element(norm.begin(), norm.end());
  std::vector<float> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = static_cast<float>(acc[i] / std::max(norm[i], floor));
  }
  return out;
}

void require_state(const MelSpectrogram& mel, MelState expected, const char* op) {
  if (mel.state != expected) {
    fail(ErrorCode::kStateMismatch,
         std::string(op) + ": expected " + std::string(to_string(expected)) +
             " input, got " + std::string(to_string(mel.state)));
  }
}

// Order-independent sum: per-item partials are sorted before combining.
long double sorted_sum(std::vector<long double> parts) {
  std::sort(parts.begin(), parts.end());
  long double s = 0.0L;
  for (long double p : parts) s += p;
  return s;
}

}  // namespace

std::string_view to_string(MelState state) {
  switch (state) {
    case MelState::kPowerMel: return "power-mel";
    case MelState::kLogMel: return "log-mel";
    case MelState::kNormalized: return "normalized";
  }
  return "unknown";
}

double hz_to_mel(double hz) {
  if (hz < kMelLogStartHz) return hz / kMelLinearStep;
  return kMelLogStartMel + std::log(hz / kMelLogStartHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelLogStartMel) return mel * kMelLinearStep;
  return kMelLogStartHz * std::exp(kMelLogStep * (mel - kMelLogStartMel));
}

int frame_count(std::size_t samples, const MelConfig& config) {
  if (samples < static_cast<std::size_t>(config.n_fft)) return 0;
  return 1 + static_cast<int>((samples - config.n_fft) / config.hop);
}

std::vector<float> hann_window(int length) {
  std::vector<float> w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length));
  }
  return w;
}

AudioClip trim_silence(const AudioClip& clip, double threshold_db,
                       const MelConfig& config) {
  require(!clip.samples.empty(), ErrorCode::kInvalidArgument,
          "trim_silence: empty clip");
  const std::size_t n = clip.samples.size();
  const int frames = std::max(1, frame_count(n, config));

  std::vector<double> rms(frames);
  for (int t = 0; t < frames; ++t) {
    const std::size_t begin = static_cast<std::size_t>(t) * config.hop;
    const std::size_t end = std::min(n, begin + config.n_fft);
    double sq = 0.0;
    for (std::size_t i = begin; i < end; ++i) sq += static_cast<double>(clip.samples[i]) * clip.samples[i];
    rms[t] = std::sqrt(sq / config.n_fft);
  }
  const double peak = *std::max_element(rms.begin(), rms.end());
  require(peak > 0.0, ErrorCode::kAllSilent, "trim_silence: all-silent clip");

  const double floor = peak * std::pow(10.0, -threshold_db / 20.0);
  int first = 0;
  while (rms[first] < floor) ++first;
  int last = frames - 1;
  while (rms[last] < floor) --last;

  // A frame that turns loud contains the onset within its final hop; a frame
  // that goes quiet afterwards saw the offset within its first hop.
  std::size_t begin = 0;
  if (first > 0) {
    begin = static_cast<std::size_t>(first) * config.hop + config.n_fft - config.hop;
  }
  std::size_t end = n;
  if (last < frames - 1) {
    end = static_cast<std::size_t>(last) * config.hop + config.hop;
  }
  if (end <= begin) {
    // Isolated burst shorter than one hop: keep the loud frame itself.
    begin = static_cast<std::size_t>(first) * config.hop;
    end = std::min(n, begin + config.n_fft);
  }

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

MelFilterbank build_mel_filterbank(const MelConfig& config) {
  require(config.fmin >= 0.0 && config.fmax > config.fmin &&
              config.fmax <= config.sample_rate / 2.0 && config.n_mels > 0,
          ErrorCode::kInvalidArgument, "build_mel_filterbank: invalid band");
  MelFilterbank fb;
  fb.config = config;
  const int bins = config.n_bins();

  const double mel_lo = hz_to_mel(config.fmin);
  const double mel_hi = hz_to_mel(config.fmax);
  fb.band_edges_hz.resize(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    fb.band_edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (config.n_mels + 1));
  }
  // The outermost points land on fmin/fmax up to rounding; pin them exactly.
  fb.band_edges_hz.front() = config.fmin;
  fb.band_edges_hz.back() = config.fmax;

  fb.weights = Eigen::MatrixXf::Zero(config.n_mels, bins);
  for (int r = 0; r < config.n_mels; ++r) {
    const double lo = fb.band_edges_hz[r];
    const double mid = fb.band_edges_hz[r + 1];
    const double hi = fb.band_edges_hz[r + 2];
    const double area_norm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.n_fft;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(rising, falling));
      fb.weights(r, k) = static_cast<float>(w * area_norm);
    }
  }

  const Eigen::MatrixXd w = fb.weights.cast<double>();
  fb.pseudo_inverse = w.completeOrthogonalDecomposition().pseudoInverse().cast<float>();
  return fb;
}

std::vector<float> power_spectrogram(std::span<const float> samples,
                                     const MelConfig& config) {
  RealFft fft(config.n_fft);
  const auto window = hann_window(config.n_fft);
  const auto spec = complex_stft(samples, config, window, fft);
  std::vector<float> power(spec.size());
  std::transform(spec.begin(), spec.end(), power.begin(),
                 [](std::complex<float> z) { return std::norm(z); });
  return power;
}

MelSpectrogram mel_analyze(const AudioClip& clip, const MelFilterbank& fb) {
  const MelConfig& config = fb.config;
  require(clip.sample_rate == config.sample_rate, ErrorCode::kInvalidArgument,
          "mel_analyze: sample rate " + std::to_string(clip.sample_rate) +
              " != " + std::to_string(config.sample_rate));
  require(clip.samples.size() >= static_cast<std::size_t>(config.n_fft),
          ErrorCode::kTooShort,
          "mel_analyze: too-short clip (" + std::to_string(clip.samples.size()) +
              " samples < " + std::to_string(config.n_fft) + ")");

  const int frames = frame_count(clip.samples.size(), config);
  const int bins = config.n_bins();
  const auto power = power_spectrogram(clip.samples, config);
  using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const MatR> pw(power.data(), frames, bins);

  MelSpectrogram mel(config.n_mels, frames, MelState::kLogMel);
  Eigen::Map<MatR> out(mel.values.data(), config.n_mels, frames);
  out.noalias() = fb.weights * pw.transpose();
  for (float& v : mel.values) v = std::log10(std::max(v, kLogFloor));
  return mel;
}

NormStats compute_corpus_stats(std::span<const MelSpectrogram> log_mels,
                               std::string train_split_hash) {
  require(!log_mels.empty(), ErrorCode::kInvalidArgument,
          "compute_corpus_stats: no spectrograms");
  std::vector<long double> sums, counts;
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (const auto& m : log_mels) {
    require_state(m, MelState::kLogMel, "compute_corpus_stats");
    long double s = 0.0L;
    for (float v : m.values) s += v;
    sums.push_back(s);
    counts.push_back(static_cast<long double>(m.values.size()));
    const auto [mn, mx] = std::minmax_element(m.values.begin(), m.values.end());
    if (mn != m.values.end()) {
      lo = std::min(lo, *mn);
      hi = std::max(hi, *mx);
    }
  }
  const long double count = sorted_sum(counts);
  require(count > 0, ErrorCode::kInvalidArgument, "compute_corpus_stats: empty spectrograms");
  const long double mean = sorted_sum(sums) / count;

  std::vector<long double> squares;
  for (const auto& m : log_mels) {
    long double s = 0.0L;
    for (float v : m.values) {
      const long double d = v - mean;
      s += d * d;
    }
    squares.push_back(s);
  }
  const long double var = sorted_sum(squares) / count;
  require(var > 0.0L, ErrorCode::kZeroVariance,
          "compute_corpus_stats: zero variance corpus");

  NormStats stats;
  stats.mu = static_cast<double>(mean);
  stats.sigma = static_cast<double>(std::sqrt(var));
  stats.std_min = (lo - stats.mu) / stats.sigma;
  stats.std_max = (hi - stats.mu) / stats.sigma;
  stats.train_split_hash = std::move(train_split_hash);
  return stats;
}

MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats) {
  require_state(mel, MelState::kLogMel, "normalize");
  const double range = stats.std_max - stats.std_min;
  MelSpectrogram out = mel;
  out.state = MelState::kNormalized;
  for (float& v : out.values) {
    const double z = (v - stats.mu) / stats.sigma;
    const double y = 2.0 * (z - stats.std_min) / range - 1.0;
    v = static_cast<float>(std::clamp(y, -1.0, 1.0));
  }
  return out;
}

MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats) {
  require_state(mel, MelState::kNormalized, "denormalize");
  const double range = stats.std_max - stats.std_min;
  MelSpectrogram out = mel;
  out.state = MelState::kLogMel;
  for (float& v : out.values) {
    const double z = (static_cast<double>(v) + 1.0) * 0.5 * range + stats.std_min;
    v = static_cast<float>(z * stats.sigma + stats.mu);
  }
  return out;
}

MelSpectrogram fix_length(const MelSpectrogram& mel, int target_frames) {
  require(target_frames >= 1, ErrorCode::kInvalidArgument,
          "fix_length: target must be >= 1 frame");
  float fill = 0.0f;
  switch (mel.state) {
    case MelState::kNormalized: fill = -1.0f; break;
    case MelState::kLogMel: fill = kLogFloorValue; break;
    case MelState::kPowerMel: fill = kLogFloor; break;
  }
  MelSpectrogram out(mel.n_mels, target_frames, mel.state, fill);
  const int keep = std::min(mel.frames, target_frames);
  for (int r = 0; r < mel.n_mels; ++r) {
    std::copy_n(mel.values.begin() + static_cast<std::ptrdiff_t>(r) * mel.frames, keep,
                out.values.begin() + static_cast<std::ptrdiff_t>(r) * target_frames);
  }
  return out;
}

AudioClip griffin_lim_invert(const MelSpectrogram& log_mel,
                             const MelFilterbank& fb, int iterations) {
  require_state(log_mel, MelState::kLogMel, "griffin_lim_invert");
  const MelConfig& config = fb.config;
  require(log_mel.n_mels == config.n_mels, ErrorCode::kShapeMismatch,
          "griffin_lim_invert: " + std::to_string(log_mel.n_mels) +
              " channels, filterbank has " + std::to_string(config.n_mels));
  require(iterations >= 0, ErrorCode::kInvalidArgument,
          "griffin_lim_invert: negative iteration count");
  const int frames = log_mel.frames;
  const int bins = config.n_bins();

  using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  MatR mel_power(config.n_mels, frames);
  for (int r = 0; r < config.n_mels; ++r)
    for (int t = 0; t < frames; ++t)
      mel_power(r, t) = std::pow(10.0f, log_mel.at(r, t));
  MatR linear = (fb.pseudo_inverse * mel_power).transpose();  // frames x bins

  std::vector<float> magnitude(static_cast<std::size_t>(frames) * bins);
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < bins; ++k)
      magnitude[static_cast<std::size_t>(t) * bins + k] = std::sqrt(std::max(0.0f, linear(t, k)));

  RealFft fft(config.n_fft);
  const auto window = hann_window(config.n_fft);
  std::vector<std::complex<float>> spec(magnitude.begin(), magnitude.end());  // zero phase
  std::vector<float> signal = inverse_stft(spec, frames, config, window, fft);
  for (int it = 0; it < iterations; ++it) {
    const auto estimate = complex_stft(signal, config, window, fft);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const float mag = std::abs(estimate[i]);
      spec[i] = mag > 0.0f ? estimate[i] * (magnitude[i] / mag)
                           : std::complex<float>(magnitude[i], 0.0f);
    }
    signal = inverse_stft(spec, frames, config, window, fft);
  }

  AudioClip out;
  out.sample_rate = config.sample_rate;
  out.samples = std::move(signal);
  for (float& s : out.samples) s = std::clamp(s, -1.0f, 1.0f);
  return out;
}

}  // namespace melfill
