#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "melfill/dsp.hpp"
#include "melfill/masking.hpp"

namespace melfill {

enum class VocoderKind { kGriffinLim, kNeural };
std::string_view to_string(VocoderKind kind);

/// Mel-to-waveform backend. Implementations are immutable after construction.
class VocoderBackend {
 public:
  virtual ~VocoderBackend() = default;
  virtual VocoderKind kind() const = 0;
  virtual const MelConfig& mel_config() const = 0;
  /// Output sample count for a spectrogram of `frames` columns.
  virtual std::size_t output_length(int frames) const = 0;
  virtual std::string describe() const = 0;

 protected:
  friend AudioClip synthesize(const VocoderBackend&, const MelSpectrogram&);
  /// Called by synthesize() after state and shape checks.
  virtual AudioClip render(const MelSpectrogram& log_mel) const = 0;
};

std::unique_ptr<VocoderBackend> make_griffin_lim(int iterations = 60, const MelConfig& config = {});

/// Adapter around externally supplied pretrained Parallel-WaveGAN weights.
/// Expects `config.yml` next to the checkpoint (upstream layout); its mel
/// parameters must match the pipeline's (80 mels, 80-7600 Hz, hop 256,
/// 22,050 Hz). Decoding runs the command in $MELFILL_NEURAL_DECODE as
///   <cmd> --checkpoint <ckpt> --mel <in.npy> --out <out.wav>
/// where in.npy is a float32 frames x 80 log10-mel array.
std::unique_ptr<VocoderBackend> load_neural_vocoder(const std::filesystem::path& checkpoint);

/// "griffin-lim" or "neural:<checkpoint path>".
std::unique_ptr<VocoderBackend> make_vocoder(std::string_view spec);

/// log-mel in, clamped waveform out. Rejects normalized input.
AudioClip synthesize(const VocoderBackend& backend, const MelSpectrogram& log_mel);

inline constexpr double kCrossfadeMs = 5.0;

/// Original up to the gap, generated samples from the gap to the end of the
/// original, with a linear crossfade that ends where the gap starts. Both
/// clips share a time origin.
AudioClip splice_audio(const AudioClip& original, const AudioClip& generated, const GapSpec& gap,
                       const MelConfig& config = {}, double crossfade_ms = kCrossfadeMs);

}  // namespace melfill
