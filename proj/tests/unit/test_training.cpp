#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "melfill/training.hpp"
#include "support.hpp"

using namespace melfill;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.seed = 13;
  c.generator = GeneratorConfig::for_variant(GeneratorVariant::kUnet128x128, 8);
  c.discriminator_base = 8;
  return c;
}

std::vector<TrainingPair> tiny_pairs(int n, int frames = 128) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < n; ++i) {
    MelSpectrogram m(80, frames, MelState::kNormalized);
    for (float& v : m.values) v = u(rng);
    pairs.push_back(make_pair("p" + std::to_string(i), m, make_gap_spec(3, frames)));
  }
  return pairs;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("train config json round trip") {
  TrainConfig c = tiny_config();
  c.gap_mode = VariativeGap{2, 7};
  c.weights.rec_mode = RecMode::kVggFeature;
  c.weights.lambda_chunk = 3.5f;
  c.adam.lr = 5e-4f;
  const TrainConfig r = train_config_from_json(to_json(c));
  CHECK(to_json(r) == to_json(c));
  CHECK(std::get<VariativeGap>(r.gap_mode).max_packets == 7);
  CHECK(support::error_code_of([] { gap_mode_from_json({{"kind", "bursty"}}); }) == ErrorCode::kFormat);
}

TEST_CASE("config validation") {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  CHECK(support::error_code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument);
  c = tiny_config();
  c.batch_size = 4;
  CHECK(support::error_code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument);
  c = tiny_config();
  c.weights.rec_mode = RecMode::kVggFeature;
  CHECK(support::error_code_of([&] { Trainer(c, nullptr); }) == ErrorCode::kUnavailable);
}

TEST_CASE("one step updates both models") {
  Trainer t(tiny_config(), nullptr);
  auto snapshot = [](const nn::ParameterSet& ps) {
    std::vector<float> all;
    for (const auto& p : ps.parameters()) {
      const auto v = p.var.value().values();
      all.insert(all.end(), v.begin(), v.end());
    }
    return all;
  };
  const auto g0 = snapshot(t.generator().parameters());
  const auto d0 = snapshot(t.discriminator().parameters());
  const StepRecord r = t.step(tiny_pairs(1).front());
  CHECK(r.step == 1);
  CHECK(r.packets == 3);
  CHECK(std::isfinite(r.g_total));
  CHECK(r.g_total == doctest::Approx(r.adv + 100.0f * r.rec).epsilon(1e-5));
  CHECK(snapshot(t.generator().parameters()) != g0);
  CHECK(snapshot(t.discriminator().parameters()) != d0);
}

TEST_CASE("step rejects a pair of the wrong length") {
  Trainer t(tiny_config(), nullptr);
  CHECK(support::error_code_of([&] { t.step(tiny_pairs(1, 256).front()); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  Trainer t(tiny_config(), nullptr);
  TrainingPair p = tiny_pairs(1).front();
  p.target.values[5] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.step(p);
    FAIL("expected kNonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("p0") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bit identical") {
  support::TempDir dir("ckpt");
  Trainer a(tiny_config(), nullptr);
  for (const auto& p : tiny_pairs(2)) a.step(p);
  a.save(dir / "a.ckpt", 1);

  Trainer b(tiny_config(), nullptr);
  const TrainingProgress prog = b.restore(dir / "a.ckpt");
  CHECK(prog.step == 2);
  CHECK(prog.epoch == 1);
  b.save(dir / "b.ckpt", 1);
  CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));

  // Continuing from the restored state matches continuing the original.
  const TrainingPair next = tiny_pairs(3).back();
  CHECK(a.step(next) == b.step(next));

  auto g = load_generator(dir / "a.ckpt");
  CHECK(g->config() == tiny_config().generator);
  CHECK(read_checkpoint_config(dir / "a.ckpt") == tiny_config().generator);
}

TEST_CASE("loading into a different architecture is a config mismatch") {
  support::TempDir dir("ckpt_mismatch");
  Trainer a(tiny_config(), nullptr);
  a.save(dir / "a.ckpt", 0);
  TrainConfig other = tiny_config();
  other.generator = GeneratorConfig::for_variant(GeneratorVariant::kUnet256x128, 8);
  Trainer b(other, nullptr);
  CHECK(support::error_code_of([&] { b.restore(dir / "a.ckpt"); }) == ErrorCode::kConfigMismatch);
  CHECK(support::error_code_of([&] { load_generator(dir / "missing.ckpt"); }) == ErrorCode::kNotFound);
}

TEST_CASE("resumed run equals an uninterrupted one") {
  support::TempDir dir("resume");
  const TrainConfig cfg = tiny_config();
  const auto pairs = tiny_pairs(3);

  TrainRunOptions plain;
  plain.out_dir = dir / "full";
  const TrainRunResult full = train_run(cfg, pairs, nullptr, plain);
  CHECK(full.records.size() == 6u);
  CHECK(full.checkpoints.size() == 2u);
  CHECK(latest_checkpoint(dir / "full") == checkpoint_path(dir / "full", 2));

  TrainRunOptions first;
  first.out_dir = dir / "split";
  first.stop_after_epoch = 1;
  const TrainRunResult part = train_run(cfg, pairs, nullptr, first);
  CHECK(part.records.size() == 3u);
  TrainRunOptions second;
  second.out_dir = dir / "split";
  second.resume = true;
  const TrainRunResult rest = train_run(cfg, pairs, nullptr, second);
  CHECK(rest.start_epoch == 2);

  CHECK(read_metrics_log(dir / "split" / "metrics.jsonl") == full.records);
  CHECK(slurp(checkpoint_path(dir / "split", 2)) == slurp(checkpoint_path(dir / "full", 2)));
}

TEST_CASE("step records survive json") {
  StepRecord r;
  r.step = 7;
  r.epoch = 2;
  r.clip_id = "LJ001-0001";
  r.packets = 4;
  r.adv = 0.25f;
  r.rec = 0.125f;
  r.g_total = 12.75f;
  r.d_loss = 0.5f;
  CHECK(StepRecord::from_json(r.to_json()) == r);
}

}  // TEST_SUITE
