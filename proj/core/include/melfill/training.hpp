#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "melfill/checkpoint.hpp"
#include "melfill/dataset.hpp"
#include "melfill/losses.hpp"
#include "melfill/models.hpp"
#include "melfill/nn/adam.hpp"

namespace melfill {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 1;
  nn::AdamOptions adam;  // lr 1e-4, beta1 0.5, beta2 0.999
  GapMode gap_mode = FixedGap{6};
  std::uint64_t seed = 0;
  LossWeights weights;
  GeneratorConfig generator;
  int discriminator_base = 64;

  void validate() const;
  DiscriminatorConfig discriminator() const;
};

nlohmann::json to_json(const GapMode& mode);
GapMode gap_mode_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& weights);
LossWeights loss_weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  std::string clip_id;
  int packets = 0;
  float adv = 0.0f;
  float rec = 0.0f;
  float chunk = 0.0f;
  float l1_residual = 0.0f;
  float g_total = 0.0f;
  float d_loss = 0.0f;

  nlohmann::json to_json() const;
  static StepRecord from_json(const nlohmann::json& j);
  bool operator==(const StepRecord&) const = default;
};

/// Models, optimizers and the dropout generator of one training run.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const FeatureExtractor* extractor);

  /// One discriminator update then one generator update.
  StepRecord step(const TrainingPair& pair);

  void save(const std::filesystem::path& path, int completed_epoch) const;
  /// Restores a checkpoint written by save(); returns its progress record.
  TrainingProgress restore(const std::filesystem::path& path);

  Generator& generator() { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  const TrainConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

 private:
  TrainConfig config_;
  const FeatureExtractor* extractor_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Discriminator> discriminator_;
  std::unique_ptr<nn::Adam> g_opt_;
  std::unique_ptr<nn::Adam> d_opt_;
  std::mt19937_64 dropout_rng_;
  std::int64_t steps_ = 0;
};

/// Free-function form of a single adversarial update. Throws kNonFinite with
/// a JSON diagnostic when a loss is not finite; the generator is not updated then.
StepRecord train_step(Generator& gen, Discriminator& disc, const TrainingPair& pair,
                      const LossWeights& weights, nn::Adam& g_opt, nn::Adam& d_opt,
                      const FeatureExtractor* extractor, std::mt19937_64& dropout_rng);

struct TrainRunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  int stop_after_epoch = 0;  // >0: return early once this epoch is done
  std::function<void(const StepRecord&)> on_step;
};

struct TrainRunResult {
  std::vector<StepRecord> records;  // steps executed by this call
  std::vector<std::filesystem::path> checkpoints;
  int start_epoch = 1;
};

/// Trains over `pairs` (batch size 1) with a per-epoch shuffle. In variative
/// mode each pair gets a fresh gap every epoch. Writes
/// checkpoints/epoch_NNNN.ckpt after every epoch and appends one JSON line per
/// step to metrics.jsonl.
TrainRunResult train_run(const TrainConfig& config, const std::vector<TrainingPair>& pairs,
                         const FeatureExtractor* extractor, const TrainRunOptions& options);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int epoch);
/// Highest-numbered epoch checkpoint in out_dir, or empty.
std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir);

std::vector<StepRecord> read_metrics_log(const std::filesystem::path& path);

}  // namespace melfill
