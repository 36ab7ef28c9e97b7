#include "melfill/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "melfill/error.hpp"
#include "melfill/random.hpp"

namespace melfill {

namespace {

// Streams drawn from the root seed.
constexpr std::uint64_t kGeneratorInitStream = 1;
constexpr std::uint64_t kDiscriminatorInitStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kEpochStreamBase = 1000;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  require(!is.fail(), ErrorCode::kFormat, "checkpoint: unreadable rng state");
}

nlohmann::json diagnostic(const char* phase, const TrainingPair& pair, float d_loss,
                          const LossBreakdown* g) {
  nlohmann::json j{{"phase", phase}, {"clip_id", pair.clip_id}, {"packets", pair.gap.packets},
                   {"d_loss", d_loss}};
  if (g) {
    j["adv"] = g->adv;
    j["rec"] = g->rec;
    j["chunk"] = g->chunk;
    j["g_total"] = g->total.value().item();
  }
  return j;
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::kInvalidArgument, "train: epochs must be >= 1");
  require(batch_size == 1, ErrorCode::kInvalidArgument, "train: only batch size 1 is supported");
  require(adam.lr > 0.0f, ErrorCode::kInvalidArgument, "train: lr must be > 0");
  require(adam.beta1 >= 0.0f && adam.beta1 < 1.0f && adam.beta2 >= 0.0f && adam.beta2 < 1.0f,
          ErrorCode::kInvalidArgument, "train: Adam betas must lie in [0, 1)");
  require(adam.clip_norm >= 0.0f, ErrorCode::kInvalidArgument, "train: clip norm must be >= 0");
  weights.validate();
  melfill::validate(generator);
}

DiscriminatorConfig TrainConfig::discriminator() const {
  DiscriminatorConfig d;
  d.input_height = generator.input_height;
  d.input_frames = generator.input_frames;
  d.base_channels = discriminator_base;
  return d;
}

nlohmann::json to_json(const GapMode& mode) {
  if (const auto* f = std::get_if<FixedGap>(&mode)) return {{"kind", "fixed"}, {"packets", f->packets}};
  const auto& v = std::get<VariativeGap>(mode);
  return {{"kind", "variative"}, {"min_packets", v.min_packets}, {"max_packets", v.max_packets}};
}

GapMode gap_mode_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fixed") return FixedGap{j.at("packets").get<int>()};
  if (kind == "variative") {
    return VariativeGap{j.value("min_packets", 1), j.value("max_packets", kMaxPackets)};
  }
  fail(ErrorCode::kFormat, "unknown gap mode '" + kind + "'");
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"lambda_adv", w.lambda_adv},
          {"lambda_rec", w.lambda_rec},
          {"lambda_chunk", w.lambda_chunk},
          {"lambda_l1_residual", w.lambda_l1_residual},
          {"rec_mode", to_string(w.rec_mode)}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
  w.lambda_rec = j.value("lambda_rec", w.lambda_rec);
  w.lambda_chunk = j.value("lambda_chunk", w.lambda_chunk);
  w.lambda_l1_residual = j.value("lambda_l1_residual", w.lambda_l1_residual);
  w.rec_mode = parse_rec_mode(j.value("rec_mode", std::string("l1")));
  return w;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"clip_norm", c.adam.clip_norm},
          {"gap_mode", to_json(c.gap_mode)},
          {"seed", c.seed},
          {"weights", to_json(c.weights)},
          {"generator", to_json(c.generator)},
          {"discriminator_base", c.discriminator_base}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.adam.clip_norm = j.value("clip_norm", c.adam.clip_norm);
  if (j.contains("gap_mode")) c.gap_mode = gap_mode_from_json(j.at("gap_mode"));
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
  if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
  c.discriminator_base = j.value("discriminator_base", c.discriminator_base);
  return c;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step},   {"epoch", epoch},   {"clip_id", clip_id},
          {"packets", packets}, {"adv", adv},   {"rec", rec},
          {"chunk", chunk}, {"l1_residual", l1_residual}, {"g_total", g_total},
          {"d_loss", d_loss}};
}

StepRecord StepRecord::from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.epoch = j.at("epoch").get<int>();
  r.clip_id = j.value("clip_id", std::string());
  r.packets = j.value("packets", 0);
  r.adv = j.at("adv").get<float>();
  r.rec = j.at("rec").get<float>();
  r.chunk = j.value("chunk", 0.0f);
  r.l1_residual = j.value("l1_residual", 0.0f);
  r.g_total = j.at("g_total").get<float>();
  r.d_loss = j.at("d_loss").get<float>();
  return r;
}

StepRecord train_step(Generator& gen, Discriminator& disc, const TrainingPair& pair,
                      const LossWeights& weights, nn::Adam& g_opt, nn::Adam& d_opt,
                      const FeatureExtractor* extractor, std::mt19937_64& dropout_rng) {
  const int height = gen.config().input_height;
  require(pair.target.frames == gen.config().input_frames, ErrorCode::kShapeMismatch,
          "train_step: pair has " + std::to_string(pair.target.frames) + " frames, model expects " +
              std::to_string(gen.config().input_frames));
  const nn::Var source(to_image(pair.source, height));
  const nn::Var target(to_image(pair.target, height));

  const nn::Var fake = gen.forward(source, true, &dropout_rng);

  disc.parameters().zero_grad();
  const nn::Var real_grid = disc.forward(nn::concat_channels(source, target), true);
  const nn::Var fake_grid = disc.forward(nn::concat_channels(source, fake.detach()), true);
  const nn::Var d_loss = discriminator_objective(real_grid, fake_grid);
  const float d_value = d_loss.value().item();
  if (!std::isfinite(d_value)) {
    fail(ErrorCode::kNonFinite,
         "non-finite discriminator loss: " + diagnostic("discriminator", pair, d_value, nullptr).dump());
  }

  nn::backward(d_loss);
  d_opt.step();

  gen.parameters().zero_grad();
  const nn::Var score = disc.forward(nn::concat_channels(source, fake), true);
  LossBreakdown g = generator_objective(weights, score, fake, target, pair.gap, extractor);
  const float g_value = g.total.value().item();
  if (!std::isfinite(g_value)) {
    fail(ErrorCode::kNonFinite,
         "non-finite generator loss: " + diagnostic("generator", pair, d_value, &g).dump());
  }
  nn::backward(g.total);
  g_opt.step();
  // The generator pass also deposits gradients on the discriminator.
  disc.parameters().zero_grad();

  StepRecord rec;
  rec.clip_id = pair.clip_id;
  rec.packets = pair.gap.packets;
  rec.adv = g.adv;
  rec.rec = g.rec;
  rec.chunk = g.chunk;
  rec.l1_residual = g.l1_residual;
  rec.g_total = g_value;
  rec.d_loss = d_value;
  return rec;
}

Trainer::Trainer(const TrainConfig& config, const FeatureExtractor* extractor)
    : config_(config), extractor_(extractor) {
  config_.validate();
  if (config_.weights.rec_mode == RecMode::kVggFeature) {
    require(extractor_ != nullptr, ErrorCode::kUnavailable,
            "train: vgg_feature mode needs a feature extractor");
  }
  generator_ = build_generator(config_.generator, derived_rng(config_.seed, kGeneratorInitStream)());
  discriminator_ =
      build_discriminator(config_.discriminator(), derived_rng(config_.seed, kDiscriminatorInitStream)());
  g_opt_ = std::make_unique<nn::Adam>(generator_->parameters(), config_.adam);
  d_opt_ = std::make_unique<nn::Adam>(discriminator_->parameters(), config_.adam);
  dropout_rng_ = derived_rng(config_.seed, kDropoutStream);
}

StepRecord Trainer::step(const TrainingPair& pair) {
  StepRecord rec = train_step(*generator_, *discriminator_, pair, config_.weights, *g_opt_, *d_opt_,
                              extractor_, dropout_rng_);
  rec.step = ++steps_;
  return rec;
}

void Trainer::save(const std::filesystem::path& path, int completed_epoch) const {
  TrainingProgress progress;
  progress.step = steps_;
  progress.epoch = completed_epoch;
  progress.rng_state = rng_to_string(dropout_rng_);
  progress.extra["train_config"] = to_json(config_);
  save_checkpoint(path, TrainingState{generator_.get(), discriminator_.get(), g_opt_.get(), d_opt_.get()},
                  progress);
}

TrainingProgress Trainer::restore(const std::filesystem::path& path) {
  TrainingProgress progress = load_checkpoint(
      path, TrainingState{generator_.get(), discriminator_.get(), g_opt_.get(), d_opt_.get()});
  rng_from_string(dropout_rng_, progress.rng_state);
  steps_ = progress.step;
  return progress;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
  return out_dir / "checkpoints" / name;
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir) {
  const auto dir = out_dir / "checkpoints";
  if (!std::filesystem::is_directory(dir)) return {};
  std::filesystem::path best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && entry.path().extension() == ".ckpt" &&
        (best.empty() || name > best.filename().string())) {
      best = entry.path();
    }
  }
  return best;
}

std::vector<StepRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "metrics log not found: " + path.string());
  std::vector<StepRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(StepRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
  }
  return out;
}

TrainRunResult train_run(const TrainConfig& config, const std::vector<TrainingPair>& pairs,
                         const FeatureExtractor* extractor, const TrainRunOptions& options) {
  require(!pairs.empty(), ErrorCode::kInvalidArgument, "train_run: no training pairs");
  Trainer trainer(config, extractor);
  std::filesystem::create_directories(options.out_dir);
  const auto log_path = options.out_dir / "metrics.jsonl";

  TrainRunResult result;
  std::vector<std::string> kept_log;
  if (options.resume) {
    const auto ckpt = latest_checkpoint(options.out_dir);
    if (!ckpt.empty()) {
      const TrainingProgress progress = trainer.restore(ckpt);
      result.start_epoch = progress.epoch + 1;
      // Steps after the checkpoint were lost with the interrupted run.
      if (std::filesystem::exists(log_path)) {
        for (const auto& r : read_metrics_log(log_path)) {
          if (r.step <= progress.step) kept_log.push_back(r.to_json().dump());
        }
      }
    }
  }
  {
    std::ofstream log(log_path, std::ios::trunc);
    require(static_cast<bool>(log), ErrorCode::kIo, "cannot write " + log_path.string());
    for (const auto& l : kept_log) log << l << '\n';
  }
  {
    std::ofstream cfg(options.out_dir / "train_config.json");
    cfg << to_json(config).dump(2) << '\n';
  }

  std::ofstream log(log_path, std::ios::app);
  const int frames = config.generator.input_frames;
  for (int epoch = result.start_epoch; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 epoch_rng = derived_rng(config.seed, kEpochStreamBase + epoch);
    const auto order = shuffled_indices(pairs.size(), epoch_rng);
    for (std::size_t idx : order) {
      const TrainingPair& base = pairs[idx];
      StepRecord rec;
      if (std::holds_alternative<VariativeGap>(config.gap_mode)) {
        const GapSpec gap = make_gap_spec(config.gap_mode, epoch_rng, frames);
        rec = trainer.step(make_pair(base.clip_id, base.target, gap));
      } else {
        rec = trainer.step(base);
      }
      rec.epoch = epoch;
      log << rec.to_json().dump() << '\n';
      if (options.on_step) options.on_step(rec);
      result.records.push_back(std::move(rec));
    }
    log.flush();
    const auto path = checkpoint_path(options.out_dir, epoch);
    trainer.save(path, epoch);
    result.checkpoints.push_back(path);
    if (options.stop_after_epoch > 0 && epoch >= options.stop_after_epoch) break;
  }
  return result;
}

}  // namespace melfill
