#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "melfill/vocoder.hpp"
#include "support.hpp"

using namespace melfill;

namespace {

void write_config_yml(const std::filesystem::path& dir, int hop) {
  std::ofstream(dir / "config.yml") << "sampling_rate: 22050\nfft_size: 1024\nhop_size: " << hop
                                    << "\nnum_mels: 80\nfmin: 80\nfmax: 7600\n";
}

// Stand-in decoder: reads the .npy header for the frame count and writes a
// quiet tone of frames * 256 samples.
constexpr const char* kFakeDecoder = R"py(#!/usr/bin/env python3
import math, re, struct, sys, wave
args = dict(zip(sys.argv[1::2], sys.argv[2::2]))
head = open(args['--mel'], 'rb').read(256).decode('latin1')
frames = int(re.search(r"'shape': \((\d+), 80\)", head).group(1))
with wave.open(args['--out'], 'wb') as w:
    w.setnchannels(1); w.setsampwidth(2); w.setframerate(22050)
    n = frames * 256
    w.writeframes(b''.join(struct.pack('<h', int(3000 * math.sin(i * 0.1))) for i in range(n)))
)py";

}  // namespace

TEST_SUITE("vocoder") {

TEST_CASE("griffin-lim rejects normalized input and reports its length") {
  auto v = make_griffin_lim(2);
  CHECK(v->kind() == VocoderKind::kGriffinLim);
  CHECK(v->output_length(10) == 9u * 256u + 1024u);
  MelSpectrogram norm(80, 10, MelState::kNormalized);
  CHECK(support::error_code_of([&] { synthesize(*v, norm); }) == ErrorCode::kStateMismatch);
  MelSpectrogram narrow(64, 10, MelState::kLogMel, -4.0f);
  CHECK(support::error_code_of([&] { synthesize(*v, narrow); }) == ErrorCode::kConfigMismatch);
  const AudioClip out = synthesize(*v, MelSpectrogram(80, 10, MelState::kLogMel, -1.0f));
  CHECK(out.samples.size() == v->output_length(10));
  CHECK(std::all_of(out.samples.begin(), out.samples.end(), [](float s) { return s >= -1.0f && s <= 1.0f; }));
  CHECK(support::error_code_of([] { make_griffin_lim(0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("vocoder spec parsing") {
  CHECK(make_vocoder("griffin-lim")->kind() == VocoderKind::kGriffinLim);
  CHECK(support::error_code_of([] { make_vocoder("wavenet"); }) == ErrorCode::kInvalidArgument);
  CHECK(support::error_code_of([] { make_vocoder("neural:/nonexistent/ckpt.pkl"); }) == ErrorCode::kNotFound);
}

TEST_CASE("neural adapter checks the checkpoint's mel configuration") {
  support::TempDir dir("neural_cfg");
  std::ofstream(dir / "ckpt.pkl") << "weights";
  CHECK(support::error_code_of([&] { load_neural_vocoder(dir / "ckpt.pkl"); }) == ErrorCode::kNotFound);
  write_config_yml(dir.path(), 300);
  CHECK(support::error_code_of([&] { load_neural_vocoder(dir / "ckpt.pkl"); }) == ErrorCode::kConfigMismatch);
  std::ofstream(dir / "config.yml") << "sampling_rate: [unclosed\n";
  CHECK(support::error_code_of([&] { load_neural_vocoder(dir / "ckpt.pkl"); }) == ErrorCode::kFormat);
  write_config_yml(dir.path(), 256);
  CHECK(load_neural_vocoder(dir / "ckpt.pkl")->kind() == VocoderKind::kNeural);
}

TEST_CASE("neural adapter runs the external decoder") {
  support::TempDir dir("neural_run");
  std::ofstream(dir / "ckpt.pkl") << "weights";
  write_config_yml(dir.path(), 256);
  const auto script = dir / "decode.py";
  std::ofstream(script) << kFakeDecoder;
  ::chmod(script.c_str(), 0755);
  auto v = make_vocoder("neural:" + (dir / "ckpt.pkl").string());

  ::unsetenv("MELFILL_NEURAL_DECODE");
  const MelSpectrogram mel(80, 12, MelState::kLogMel, -3.0f);
  CHECK(support::error_code_of([&] { synthesize(*v, mel); }) == ErrorCode::kUnavailable);

  ::setenv("MELFILL_NEURAL_DECODE", script.c_str(), 1);
  const AudioClip out = synthesize(*v, mel);
  CHECK(out.samples.size() == 12u * 256u);
  CHECK(out.samples[10] == doctest::Approx(3000.0 / 32768 * std::sin(1.0)).epsilon(1e-3));

  ::setenv("MELFILL_NEURAL_DECODE", "false", 1);
  CHECK(support::error_code_of([&] { synthesize(*v, mel); }) == ErrorCode::kIo);
  ::unsetenv("MELFILL_NEURAL_DECODE");
}

TEST_CASE("audio splice: original before the crossfade, generated from the gap") {
  AudioClip orig, gen;
  orig.samples.assign(40 * 256 + 768, 0.25f);
  gen.samples.assign(orig.samples.size(), -0.5f);
  const GapSpec gap = make_gap_spec(3, 40);  // frames 30..39
  const AudioClip out = splice_audio(orig, gen, gap);
  const std::size_t start = 30 * 256;
  const std::size_t fade = static_cast<std::size_t>(std::lround(5.0 * 22050 / 1000));
  REQUIRE(out.samples.size() == orig.samples.size());
  for (std::size_t i = 0; i < start - fade; ++i) REQUIRE(out.samples[i] == 0.25f);
  for (std::size_t i = start - fade; i < start; ++i) {
    CHECK(out.samples[i] < 0.25f);
    CHECK(out.samples[i] > -0.5f);
    if (i > start - fade) CHECK(out.samples[i] < out.samples[i - 1]);
  }
  for (std::size_t i = start; i < out.samples.size(); ++i) REQUIRE(out.samples[i] == -0.5f);

  CHECK(splice_audio(orig, gen, make_gap_spec(0, 40)).samples == orig.samples);
  gen.samples.resize(start + 10);
  CHECK(support::error_code_of([&] { splice_audio(orig, gen, gap); }) == ErrorCode::kTooShort);
}

}  // TEST_SUITE
