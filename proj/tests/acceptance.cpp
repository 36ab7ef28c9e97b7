// Acceptance harness: one PASS/FAIL/SKIP line per criterion, with timings.
// Exit status is nonzero if any criterion fails.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "melfill/checkpoint.hpp"
#include "melfill/dataset.hpp"
#include "melfill/error.hpp"
#include "melfill/evaluation.hpp"
#include "melfill/losses.hpp"
#include "melfill/mel_cache.hpp"
#include "melfill/pesq.hpp"
#include "melfill/run_config.hpp"
#include "melfill/synthetic.hpp"
#include "melfill/training.hpp"
#include "melfill/vocoder.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace melfill;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail_with(std::move(d)); }

fs::path g_work;

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

AudioClip tone(double hz, double seconds, float amp = 0.5f) {
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * c.sample_rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = amp * static_cast<float>(std::sin(2.0 * std::numbers::pi * hz * i / c.sample_rate));
  }
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// 1

Outcome dsp_round_trips() {
  std::mt19937_64 rng(1);
  const MelFilterbank fb = build_mel_filterbank();
  std::vector<MelSpectrogram> logs;
  for (int i = 0; i < 3; ++i) logs.push_back(mel_analyze(synth_harmonic_clip(rng, 1.0), fb));
  const NormStats stats = compute_corpus_stats(logs, "acceptance");

  MelSpectrogram y(80, 256, MelState::kNormalized);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : y.values) v = u(rng);
  const MelSpectrogram back = normalize(denormalize(y, stats), stats);
  double err = 0.0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    err = std::max(err, static_cast<double>(std::abs(back.values[i] - y.values[i])));
  }

  const fs::path cache = g_work / "c1.mel";
  write_mel_cache(cache, y, stats_digest(stats));
  const CachedMel read = read_mel_cache(cache);
  const bool bit_exact = read.mel.values.size() == y.values.size() &&
                         std::memcmp(read.mel.values.data(), y.values.data(),
                                     y.values.size() * sizeof(float)) == 0 &&
                         read.mel.state == y.state && read.stats_hash == stats_digest(stats);

  std::vector<std::size_t> lengths;
  for (std::size_t n = 1024; n <= 1034; ++n) lengths.push_back(n);
  lengths.push_back(61952);
  int frame_mismatches = 0;
  for (std::size_t n : lengths) {
    AudioClip c = tone(300.0, 1.0);
    c.samples.resize(n);
    const int expect = oracle::frame_count(n);
    if (frame_count(n) != expect || mel_analyze(c, fb).frames != expect) ++frame_mismatches;
  }
  return check(err <= 1e-6 && bit_exact && frame_mismatches == 0,
               "max |normalize(denormalize(y)) - y| = " + fmt(err) + ", cache bit-exact " +
                   (bit_exact ? "yes" : "no") + ", frame-count mismatches " +
                   std::to_string(frame_mismatches) + "/12");
}

// ---------------------------------------------------------------------------
// 2

Outcome filterbank_oracle() {
  const MelFilterbank fb = build_mel_filterbank();
  const auto ref = oracle::filterbank(22050, 1024, 80, 80.0, 7600.0);
  double diff = 0.0, peak = 0.0;
  for (int m = 0; m < 80; ++m) {
    for (int k = 0; k < 513; ++k) {
      diff = std::max(diff, std::abs(static_cast<double>(fb.weights(m, k)) - ref.rows[m][k]));
      peak = std::max(peak, ref.rows[m][k]);
    }
  }
  const bool weights_ok = diff <= 1e-5 * peak;
  std::string detail = "weights max rel diff " + fmt(diff / peak);
  bool tones_ok = true;
  for (double hz : {200.0, 1000.0, 4000.0}) {
    const MelSpectrogram mel = mel_analyze(tone(hz, 1.0), fb);
    int best = 0;
    double best_energy = -1e300;
    for (int m = 0; m < mel.n_mels; ++m) {
      double e = 0.0;
      for (int t = 0; t < mel.frames; ++t) e += std::pow(10.0, mel.at(m, t));
      if (e > best_energy) best_energy = e, best = m;
    }
    int nearest = 0;
    for (int m = 1; m < 80; ++m) {
      if (std::abs(ref.centers_hz[m] - hz) < std::abs(ref.centers_hz[nearest] - hz)) nearest = m;
    }
    tones_ok = tones_ok && best == nearest;
    detail += "; " + fmt(hz) + " Hz -> ch " + std::to_string(best) + " (oracle " +
              std::to_string(nearest) + ")";
  }
  return check(weights_ok && tones_ok, detail);
}

// ---------------------------------------------------------------------------
// 3

Outcome masking_exactness() {
  const std::array<int, 9> expected{0, 3, 7, 10, 14, 17, 21, 24, 28};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  MelSpectrogram mel(80, kStandardFrames, MelState::kNormalized);
  for (float& v : mel.values) v = u(rng);
  std::string bad;
  for (int p = 0; p <= 8; ++p) {
    const int frames = packets_to_frames(p);
    if (frames != expected[p] || frames != oracle::packets_to_frames(p)) {
      bad += " frames(" + std::to_string(p) + ")=" + std::to_string(frames);
    }
    const MelSpectrogram out = apply_gap(mel, make_gap_spec(p));
    std::size_t changed = 0, outside = 0;
    for (int m = 0; m < 80; ++m) {
      for (int t = 0; t < kStandardFrames; ++t) {
        if (out.at(m, t) == mel.at(m, t)) continue;
        ++changed;
        if (t < kStandardFrames - frames) ++outside;
      }
    }
    if (changed != static_cast<std::size_t>(frames) * 80 || outside != 0) {
      bad += " cells(" + std::to_string(p) + ")=" + std::to_string(changed);
    }
  }
  return check(bad.empty(), bad.empty() ? "frames {0,3,7,10,14,17,21,24,28}, trailing cells only"
                                        : "mismatch:" + bad);
}

// ---------------------------------------------------------------------------
// 4

Outcome loss_gradients() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  const nn::Shape shape{1, 1, 8, 8};
  nn::Tensor x(shape), target(shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    target.data()[i] = u(rng);
    // Keep |x - target| away from the L1 kink.
    const float d = 0.1f + 0.5f * std::abs(u(rng));
    x.data()[i] = target.data()[i] + (rng() & 1 ? d : -d);
  }
  nn::Tensor scores(shape);
  std::uniform_real_distribution<float> s(0.05f, 0.95f);
  for (float& v : scores.values()) v = s(rng);

  const FeatureExtractor toy = FeatureExtractor::toy();
  const nn::Var tv(target);
  GapSpec gap;
  gap.frame_start = 5;
  gap.frame_len = 3;

  // Quadratic losses are differenced exactly at any step, so LSGAN takes a
  // wide one to keep float rounding of the loss out of the quotient.
  struct Case {
    std::string name;
    std::function<nn::Var(const nn::Var&)> f;
    const nn::Tensor* input;
    float eps;
  };
  const std::vector<Case> cases{
      {"l1", [&](const nn::Var& v) { return l1_loss(v, tv); }, &x, 1e-2f},
      {"lsgan(real)", [&](const nn::Var& v) { return adversarial_loss_lsgan(v, 1.0f); }, &scores, 4e-2f},
      {"lsgan(fake)", [&](const nn::Var& v) { return adversarial_loss_lsgan(v, 0.0f); }, &scores, 4e-2f},
      {"feature", [&](const nn::Var& v) { return vgg_feature_loss(toy, v, tv); }, &x, 1e-2f},
      {"chunk", [&](const nn::Var& v) { return chunk_loss(toy, v, tv, gap); }, &x, 1e-2f},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto r = gradcheck::check(c.f, *c.input, c.eps);
    ok = ok && r.normwise_rel_error <= 1e-3 && r.checked > 0;
    detail += c.name + " " + fmt(r.normwise_rel_error, 2);
    if (r.refined > 0) detail += " (" + std::to_string(r.refined) + " refined)";
    detail += "; ";
  }
  GapSpec all;
  all.frame_start = 0;
  all.frame_len = 8;
  const float chunk = chunk_loss(toy, nn::Var(x), tv, all).value().item();
  const float feature = vgg_feature_loss(toy, nn::Var(x), tv).value().item();
  ok = ok && chunk == feature;
  detail += "chunk(all)=" + fmt(chunk, 7) + " feature=" + fmt(feature, 7);
  return check(ok, "normwise rel err: " + detail);
}

// ---------------------------------------------------------------------------
// 5

Outcome overfit_one_sample() {
  std::mt19937_64 rng(5);
  const MelFilterbank fb = build_mel_filterbank();
  const MelSpectrogram log_mel = preprocess_clip(synth_harmonic_clip(rng, 3.2), fb);
  const std::vector<MelSpectrogram> corpus{log_mel};
  const NormStats stats = compute_corpus_stats(corpus, "overfit");

  TrainConfig config;  // paper defaults: 256x128 U-Net, base 64, Adam 1e-4 / 0.5
  config.seed = 5;
  const int frames = config.generator.input_frames;
  const TrainingPair pair = make_pair("one", fix_length(normalize(log_mel, stats), frames),
                                      make_gap_spec(6, frames));
  auto run = [&] {
    Trainer trainer(config, nullptr);
    std::vector<StepRecord> records;
    for (int i = 0; i < 50; ++i) records.push_back(trainer.step(pair));
    return records;
  };
  const auto a = run();
  const auto b = run();
  const double drop = 1.0 - a.back().rec / a.front().rec;
  return check(drop >= 0.5 && a == b,
               "rec " + fmt(a.front().rec) + " -> " + fmt(a.back().rec) + " (" +
                   fmt(100.0 * drop, 3) + "% lower), runs identical: " + (a == b ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 6 and 7 share one toy corpus and recipe.

struct ToyData {
  NormStats stats;
  std::vector<TrainingPair> train_fixed6;
  std::vector<TrainingPair> train_variative;
  std::vector<TestClip> test;
};

constexpr int kToyFrames = 128;
constexpr int kToyTrain = 64;
constexpr int kToyTest = 32;

const ToyData& toy_data() {
  static const ToyData data = [] {
    const fs::path root = g_work / "toy_corpus";
    write_synthetic_corpus(root, kToyTrain + kToyTest, 11, 1.6);
    PrepareResult r = prepare_corpus({root, g_work / "toy_prepared", kToyTrain + kToyTest,
                                      kToyTrain, 42});
    ToyData d;
    d.stats = r.stats;
    const MelLoader load = cache_loader(g_work / "toy_prepared" / "mels", r.stats);
    d.train_fixed6 = make_pairs(r.split.train_ids, load, r.stats, r.split.train_hash(),
                                FixedGap{6}, 5, kToyFrames).drain();
    d.train_variative = make_pairs(r.split.train_ids, load, r.stats, r.split.train_hash(),
                                   VariativeGap{}, 5, kToyFrames).drain();
    for (const auto& id : r.split.test_ids) {
      d.test.push_back({id, fix_length(load(id), kToyFrames), std::nullopt});
    }
    return d;
  }();
  return data;
}

TrainConfig toy_recipe(GapMode mode) {
  TrainConfig c;
  c.epochs = 5;
  c.seed = 5;
  c.gap_mode = mode;
  c.adam.lr = 5e-4f;
  c.generator = GeneratorConfig::for_variant(GeneratorVariant::kUnet128x128, 16);
  c.discriminator_base = 16;
  return c;
}

std::unique_ptr<Generator> train_toy(const TrainConfig& config,
                                     const std::vector<TrainingPair>& pairs,
                                     const std::string& dir) {
  TrainRunOptions opt;
  opt.out_dir = g_work / dir;
  const TrainRunResult r = train_run(config, pairs, nullptr, opt);
  return load_generator(r.checkpoints.back());
}

Outcome toy_pipeline() {
  const ToyData& d = toy_data();
  if (d.train_fixed6.size() != kToyTrain) {
    return fail_with("expected 64 training pairs, got " + std::to_string(d.train_fixed6.size()));
  }
  auto model = train_toy(toy_recipe(FixedGap{6}), d.train_fixed6, "toy_fixed6");
  const GapSpec gap = make_gap_spec(6, kToyFrames);
  double model_l1 = 0.0, baseline_l1 = 0.0;
  for (const auto& clip : d.test) {
    const MelSpectrogram masked = apply_gap(clip.target, gap);
    model_l1 += gap_l1(inpaint(*model, masked, gap), clip.target, gap);
    baseline_l1 += gap_l1(hold_last_frame_baseline(masked, gap), clip.target, gap);
  }
  model_l1 /= d.test.size();
  baseline_l1 /= d.test.size();
  return check(model_l1 < baseline_l1, "test gap L1: model " + fmt(model_l1) +
                                           " vs hold-last-frame " + fmt(baseline_l1) + " over " +
                                           std::to_string(d.test.size()) + " clips");
}

Outcome gap_sweep_trend() {
  const ToyData& d = toy_data();
  auto model = train_toy(toy_recipe(VariativeGap{}), d.train_variative, "toy_variative");
  SweepOptions opt;
  opt.trained_max_packets = kMaxPackets;
  const FeatureExtractor extractor = FeatureExtractor::test_double();
  const EvalReport report = evaluate_gap_sweep(*model, d.test, extractor, nullptr, opt);
  int nondecreasing = 0;
  std::string values;
  for (std::size_t i = 0; i < report.aggregates.size(); ++i) {
    values += (i ? " " : "") + fmt(report.aggregates[i].vgg_mse, 3);
    if (i > 0 && report.aggregates[i].vgg_mse >= report.aggregates[i - 1].vgg_mse) ++nondecreasing;
  }
  return check(report.aggregates.size() == 8 && report.errors == 0 && nondecreasing >= 6,
               std::to_string(nondecreasing) + "/7 adjacent pairs nondecreasing; feature MSE " +
                   values);
}

// ---------------------------------------------------------------------------
// 8

int dominant_bin(const AudioClip& clip) {
  std::vector<double> acc(513, 0.0);
  const std::size_t frames = (clip.samples.size() - 1024) / 256 + 1;
  for (std::size_t f = 0; f < frames; f += 4) {
    const auto p = oracle::frame_power(clip.samples.data() + f * 256, 1024);
    for (int k = 0; k < 513; ++k) acc[k] += p[k];
  }
  return static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
}

Outcome vocoder_fallback() {
  const MelFilterbank fb = build_mel_filterbank();
  const auto gl = make_griffin_lim(60);
  const AudioClip in = tone(440.0, 1.0);
  const MelSpectrogram mel = mel_analyze(in, fb);
  const AudioClip out1 = synthesize(*gl, mel);
  const AudioClip out2 = synthesize(*gl, mel);
  const int expect = static_cast<int>(std::lround(440.0 * 1024 / 22050));
  const int got = dominant_bin(out1);

  AudioClip silence;
  silence.samples.assign(22050, 0.0f);
  const AudioClip quiet = synthesize(*gl, mel_analyze(silence, fb));
  float peak = 0.0f;
  for (float v : quiet.samples) peak = std::max(peak, std::abs(v));
  const bool deterministic = out1.samples == out2.samples;
  return check(std::abs(got - expect) <= 1 && peak < 1e-4f && deterministic,
               "440 Hz -> bin " + std::to_string(got) + " (expected " + std::to_string(expect) +
                   "), silence peak " + fmt(peak, 3) + ", deterministic " +
                   (deterministic ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 9

Outcome pesq_adapter() {
  if (!pesq_available()) {
    return {Outcome::kSkip, "python pesq package not importable"};
  }
  constexpr double kWidebandMax = 4.644;  // P.862.2 mapping of the best raw score
  std::mt19937_64 rng(9);
  const AudioClip ref = synth_harmonic_clip(rng, 3.0);
  AudioClip noisy = ref, noise = ref, quieter, louder;
  std::normal_distribution<float> n(0.0f, 1.0f);
  double rms = 0.0;
  for (float v : ref.samples) rms += v * v;
  rms = std::sqrt(rms / ref.samples.size());
  for (std::size_t i = 0; i < ref.samples.size(); ++i) {
    const float e = n(rng);
    noisy.samples[i] += static_cast<float>(0.05 * rms) * e;
    noise.samples[i] = static_cast<float>(rms) * n(rng);
  }
  quieter = noisy;
  louder = noisy;
  for (float& v : quieter.samples) v *= 0.5f;
  for (float& v : louder.samples) v *= 1.5f;
  const auto s = pesq_mos_batch({{&ref, &ref}, {&ref, &noise}, {&ref, &noisy}, {&ref, &quieter},
                                 {&ref, &louder}});
  const double spread = std::max({s[2], s[3], s[4]}) - std::min({s[2], s[3], s[4]});
  return check(std::abs(s[0] - kWidebandMax) <= 0.01 && s[1] < 1.5 && spread <= 0.05,
               "self " + fmt(s[0]) + " (max " + fmt(kWidebandMax) + "), white noise " + fmt(s[1]) +
                   ", gain x0.5/x1/x1.5 " + fmt(s[3]) + "/" + fmt(s[2]) + "/" + fmt(s[4]));
}

// ---------------------------------------------------------------------------
// 10

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MELFILL_CLI) + " " + args + " > " +
                          (g_work / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> differing_files(const fs::path& a, const fs::path& b) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (rel == "run_config.json") continue;  // records its own output dir
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) out.push_back(rel.string());
  }
  return out;
}

Outcome reproducibility() {
  const fs::path dir = g_work / "repro";
  fs::create_directories(dir);
  if (run_cli("make-toy-corpus --out " + (dir / "corpus").string() +
              " --clips 24 --seconds 1.6 --seed 9") != 0) {
    return fail_with("make-toy-corpus failed");
  }
  RunConfig cfg;
  cfg.corpus_root = dir / "corpus";
  cfg.subset_size = 24;
  cfg.n_train = 16;
  cfg.split_seed = 42;
  cfg.train = toy_recipe(FixedGap{6});
  cfg.train.generator = GeneratorConfig::for_variant(GeneratorVariant::kUnet128x128, 8);
  cfg.train.discriminator_base = 8;
  cfg.train.epochs = 1;
  cfg.train.seed = 3;
  write_run_config(dir / "config.json", cfg);

  const std::string a = (dir / "prep_a").string(), b = (dir / "prep_b").string();
  if (run_cli("prepare --config " + (dir / "config.json").string() + " --out " + a) != 0 ||
      run_cli("prepare --config " + a + "/run_config.json --out " + b) != 0) {
    return fail_with("prepare failed: " + slurp(g_work / "cli.log"));
  }
  const auto prep_diff = differing_files(a, b);

  const std::string ra = (dir / "run_a").string(), rb = (dir / "run_b").string();
  if (run_cli("train --config " + (dir / "config.json").string() + " --prepared " + a +
              " --out-dir " + ra) != 0 ||
      run_cli("train --config " + ra + "/run_config.json --out-dir " + rb) != 0) {
    return fail_with("train failed: " + slurp(g_work / "cli.log"));
  }
  const auto train_diff = differing_files(ra, rb);
  const bool has_ckpt = fs::exists(fs::path(ra) / "checkpoints" / "epoch_0001.ckpt");
  std::string detail = "prepare: " + std::to_string(prep_diff.size()) +
                       " differing files; train: " + std::to_string(train_diff.size()) +
                       " differing files";
  for (const auto& f : prep_diff) detail += " " + f;
  for (const auto& f : train_diff) detail += " " + f;
  return check(prep_diff.empty() && train_diff.empty() && has_ckpt, detail);
}

}  // namespace

// usage: melfill_acceptance [work_dir] [ids, e.g. 4,5,8]
int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "melfill_acceptance";
  std::set<int> only;
  if (argc > 2) {
    std::stringstream ids(argv[2]);
    for (std::string id; std::getline(ids, id, ',');) only.insert(std::stoi(id));
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "DSP round trips", 10, dsp_round_trips},
      {2, "filterbank oracle", 30, filterbank_oracle},
      {3, "masking exactness", 5, masking_exactness},
      {4, "loss gradient checks", 120, loss_gradients},
      {5, "overfit one sample", 300, overfit_one_sample},
      {6, "toy pipeline end-to-end", 600, toy_pipeline},
      {7, "gap-sweep trend", 600, gap_sweep_trend},
      {8, "vocoder fallback", 60, vocoder_fallback},
      {9, "PESQ adapter", 60, pesq_adapter},
      {10, "reproducibility", 600, reproducibility},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail_with(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.kind != Outcome::kSkip && secs > c.limit_s) {
      o.kind = Outcome::kFail;
      o.detail += "; over the " + fmt(c.limit_s) + " s limit";
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kSkip ? "SKIP" : "FAIL";
    if (o.kind == Outcome::kFail) ++failures;
    std::printf("%s %2d %-26s %8.2f s (limit %4.0f s)  %s\n", tag, c.id, c.name, secs, c.limit_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, only.empty() ? criteria.size() : only.size());
  return failures == 0 ? 0 : 1;
}
