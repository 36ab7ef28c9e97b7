#include "melfill/vocoder.hpp"

#include <yaml-cpp/yaml.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "melfill/error.hpp"

namespace melfill {

namespace {

class GriffinLimVocoder final : public VocoderBackend {
 public:
  GriffinLimVocoder(int iterations, const MelConfig& config)
      : iterations_(iterations), fb_(build_mel_filterbank(config)) {
    require(iterations >= 1, ErrorCode::kInvalidArgument, "griffin-lim: iterations must be >= 1");
  }
  VocoderKind kind() const override { return VocoderKind::kGriffinLim; }
  const MelConfig& mel_config() const override { return fb_.config; }
  std::size_t output_length(int frames) const override {
    return frames <= 0 ? 0
                       : static_cast<std::size_t>(frames - 1) * fb_.config.hop + fb_.config.n_fft;
  }
  std::string describe() const override {
    return "griffin-lim (" + std::to_string(iterations_) + " iterations)";
  }

 protected:
  AudioClip render(const MelSpectrogram& log_mel) const override {
    return griffin_lim_invert(log_mel, fb_, iterations_);
  }

 private:
  int iterations_;
  MelFilterbank fb_;
};

std::string describe_mel(const MelConfig& c) {
  std::ostringstream os;
  os << "sr=" << c.sample_rate << " fft=" << c.n_fft << " hop=" << c.hop << " mels=" << c.n_mels
     << " fmin=" << c.fmin << " fmax=" << c.fmax;
  return os.str();
}

void write_npy(const std::filesystem::path& path, const MelSpectrogram& mel) {
  // Transposed to frames x mels, the upstream decoder's layout.
  std::ostringstream header;
  header << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << mel.frames << ", "
         << mel.n_mels << "), }";
  std::string h = header.str();
  const std::size_t unpadded = 10 + h.size() + 1;
  h.append((64 - unpadded % 64) % 64, ' ');
  h.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(h.size());
  out.put(static_cast<char>(len & 0xff));
  out.put(static_cast<char>(len >> 8));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (int t = 0; t < mel.frames; ++t)
    for (int r = 0; r < mel.n_mels; ++r) {
      const float v = mel.at(r, t);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

class NeuralVocoder final : public VocoderBackend {
 public:
  NeuralVocoder(std::filesystem::path checkpoint, MelConfig config)
      : checkpoint_(std::move(checkpoint)), config_(config) {}
  VocoderKind kind() const override { return VocoderKind::kNeural; }
  const MelConfig& mel_config() const override { return config_; }
  std::size_t output_length(int frames) const override {
    return frames <= 0 ? 0 : static_cast<std::size_t>(frames) * config_.hop;
  }
  std::string describe() const override { return "neural (" + checkpoint_.string() + ")"; }

 protected:
  AudioClip render(const MelSpectrogram& log_mel) const override {
    const char* cmd = std::getenv("MELFILL_NEURAL_DECODE");
    require(cmd != nullptr && *cmd != '\0', ErrorCode::kUnavailable,
            "neural vocoder: set MELFILL_NEURAL_DECODE to a decode command");
    static std::atomic<unsigned> counter{0};
    const auto tmp = std::filesystem::temp_directory_path() /
                     ("melfill_voc_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(tmp);
    const auto npy = tmp / "mel.npy";
    const auto wav = tmp / "out.wav";
    write_npy(npy, log_mel);
    const std::string command = std::string(cmd) + " --checkpoint " +
                                shell_quote(checkpoint_.string()) + " --mel " +
                                shell_quote(npy.string()) + " --out " + shell_quote(wav.string());
    const int status = std::system(command.c_str());
    if (status != 0 || !std::filesystem::exists(wav)) {
      std::filesystem::remove_all(tmp);
      fail(ErrorCode::kIo, "neural vocoder: decode command failed (status " +
                               std::to_string(status) + "): " + command);
    }
    AudioClip clip = read_wav(wav);
    std::filesystem::remove_all(tmp);
    require(clip.sample_rate == config_.sample_rate, ErrorCode::kConfigMismatch,
            "neural vocoder: decoder produced " + std::to_string(clip.sample_rate) + " Hz audio");
    clip.samples.resize(output_length(log_mel.frames), 0.0f);
    return clip;
  }

 private:
  std::filesystem::path checkpoint_;
  MelConfig config_;
};

}  // namespace

std::string_view to_string(VocoderKind kind) {
  return kind == VocoderKind::kGriffinLim ? "griffin_lim" : "neural";
}

std::unique_ptr<VocoderBackend> make_griffin_lim(int iterations, const MelConfig& config) {
  return std::make_unique<GriffinLimVocoder>(iterations, config);
}

std::unique_ptr<VocoderBackend> load_neural_vocoder(const std::filesystem::path& checkpoint) {
  require(std::filesystem::exists(checkpoint), ErrorCode::kNotFound,
          "neural vocoder checkpoint not found: " + checkpoint.string());
  const auto config_path = checkpoint.parent_path() / "config.yml";
  require(std::filesystem::exists(config_path), ErrorCode::kNotFound,
          "neural vocoder config not found: " + config_path.string());
  MelConfig found;
  try {
    const YAML::Node y = YAML::LoadFile(config_path.string());
    found.sample_rate = y["sampling_rate"].as<int>();
    found.n_fft = y["fft_size"].as<int>();
    found.hop = y["hop_size"].as<int>();
    found.n_mels = y["num_mels"].as<int>();
    found.fmin = y["fmin"].as<double>();
    found.fmax = y["fmax"].as<double>();
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::kFormat, config_path.string() + ": " + e.what());
  }
  const MelConfig expected;
  if (!(found == expected)) {
    fail(ErrorCode::kConfigMismatch, "neural vocoder mel config mismatch\n  checkpoint: " +
                                         describe_mel(found) + "\n  pipeline:   " +
                                         describe_mel(expected));
  }
  return std::make_unique<NeuralVocoder>(checkpoint, found);
}

std::unique_ptr<VocoderBackend> make_vocoder(std::string_view spec) {
  if (spec == "griffin-lim" || spec == "griffin_lim") return make_griffin_lim();
  constexpr std::string_view kNeural = "neural:";
  if (spec.substr(0, kNeural.size()) == kNeural) {
    return load_neural_vocoder(std::filesystem::path(std::string(spec.substr(kNeural.size()))));
  }
  fail(ErrorCode::kInvalidArgument,
       "unknown vocoder '" + std::string(spec) + "' (griffin-lim | neural:<path>)");
}

AudioClip synthesize(const VocoderBackend& backend, const MelSpectrogram& log_mel) {
  require(log_mel.state == MelState::kLogMel, ErrorCode::kStateMismatch,
          "synthesize: expected a log-mel spectrogram, got " +
              std::string(to_string(log_mel.state)) + " (denormalize first)");
  require(log_mel.n_mels == backend.mel_config().n_mels, ErrorCode::kConfigMismatch,
          "synthesize: " + std::to_string(log_mel.n_mels) + " mel channels, backend expects " +
              std::to_string(backend.mel_config().n_mels));
  AudioClip clip = backend.render(log_mel);
  for (float& s : clip.samples) s = std::clamp(s, -1.0f, 1.0f);
  return clip;
}

AudioClip splice_audio(const AudioClip& original, const AudioClip& generated, const GapSpec& gap,
                       const MelConfig& config, double crossfade_ms) {
  require(original.sample_rate == config.sample_rate &&
              generated.sample_rate == config.sample_rate,
          ErrorCode::kInvalidArgument, "splice_audio: both clips must be at " +
                                           std::to_string(config.sample_rate) + " Hz");
  if (gap.frame_len == 0) return original;
  const std::size_t n = original.samples.size();
  const std::size_t start = std::min(n, static_cast<std::size_t>(gap.frame_start) * config.hop);
  // The last gap frame's window reaches n_fft - hop samples past its hop.
  const std::size_t end = std::min(
      n, static_cast<std::size_t>(gap.frame_end()) * config.hop + (config.n_fft - config.hop));
  require(generated.samples.size() >= end, ErrorCode::kTooShort,
          "splice_audio: generated clip has " + std::to_string(generated.samples.size()) +
              " samples, gap span needs " + std::to_string(end));
  const auto fade = std::min<std::size_t>(
      start, static_cast<std::size_t>(std::lround(crossfade_ms * config.sample_rate / 1000.0)));

  AudioClip out = original;
  for (std::size_t i = 0; i < fade; ++i) {
    const std::size_t k = start - fade + i;
    const float w = static_cast<float>(i + 1) / static_cast<float>(fade + 1);
    out.samples[k] = (1.0f - w) * original.samples[k] + w * generated.samples[k];
  }
  std::copy(generated.samples.begin() + static_cast<std::ptrdiff_t>(start),
            generated.samples.begin() + static_cast<std::ptrdiff_t>(end),
            out.samples.begin() + static_cast<std::ptrdiff_t>(start));
  return out;
}

}  // namespace melfill
