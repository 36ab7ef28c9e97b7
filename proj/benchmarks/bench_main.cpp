#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "melfill/dsp.hpp"
#include "melfill/masking.hpp"
#include "melfill/models.hpp"
#include "melfill/nn/autograd.hpp"
#include "melfill/vocoder.hpp"

using namespace melfill;

namespace {

AudioClip tone(double seconds) {
  AudioClip clip;
  clip.samples.resize(static_cast<std::size_t>(seconds * clip.sample_rate));
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = 0.3f * static_cast<float>(std::sin(2.0 * M_PI * 220.0 * i / clip.sample_rate));
  return clip;
}

nn::Tensor noise(nn::Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  nn::Tensor t(s);
  for (float& v : t.values()) v = u(rng);
  return t;
}

void BM_MelAnalyze(benchmark::State& state) {
  const auto fb = build_mel_filterbank();
  const AudioClip clip = tone(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mel_analyze(clip, fb));
}
BENCHMARK(BM_MelAnalyze)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const nn::Var x(noise({1, c, 64, 128}, 1));
  const nn::Var w(noise({c * 2, c, 4, 4}, 2));
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, nn::Var(), {2, 2, 1, 1}));
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& state) {
  const auto variant = static_cast<GeneratorVariant>(state.range(0));
  auto g = build_generator(GeneratorConfig::for_variant(variant, 64), 1);
  const nn::Tensor in(nn::Shape{1, 1, g->config().input_height, g->config().input_frames}, -0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(generate(*g, in));
  state.SetLabel(std::string(to_string(variant)));
}
BENCHMARK(BM_GeneratorForward)
    ->Arg(static_cast<int>(GeneratorVariant::kUnet256x128))
    ->Arg(static_cast<int>(GeneratorVariant::kUnet128x128))
    ->Unit(benchmark::kMillisecond);

void BM_GriffinLim(benchmark::State& state) {
  const auto fb = build_mel_filterbank();
  const MelSpectrogram mel = mel_analyze(tone(1.0), fb);
  const auto voc = make_griffin_lim(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(synthesize(*voc, mel));
}
BENCHMARK(BM_GriffinLim)->Arg(8)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
