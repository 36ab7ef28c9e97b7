#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include "melfill/audio.hpp"

namespace melfill {

/// Voiced-speech stand-in: a harmonic stack whose fundamental glides
/// exponentially, with a fixed spectral tilt and a faint noise floor.
AudioClip synth_harmonic_clip(std::mt19937_64& rng, double seconds,
                              int sample_rate = kCorpusSampleRate);

/// Writes an LJSpeech-layout corpus (metadata.csv + wavs/) of synthetic clips.
void write_synthetic_corpus(const std::filesystem::path& root, int n_clips, std::uint64_t seed,
                            double seconds);

}  // namespace melfill
