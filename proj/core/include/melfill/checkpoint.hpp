#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "melfill/models.hpp"
#include "melfill/nn/adam.hpp"
#include "melfill/tensor_archive.hpp"

namespace melfill {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorConfig& config);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

/// Counters and generator state carried alongside the weights.
struct TrainingProgress {
  std::int64_t step = 0;
  int epoch = 0;  // last completed epoch
  std::string rng_state;  // textual std::mt19937_64 state
  nlohmann::json extra = nlohmann::json::object();
};

/// Everything needed to continue training bit-for-bit. Optimizers may be null
/// for inference-only snapshots.
struct TrainingState {
  Generator* generator = nullptr;
  Discriminator* discriminator = nullptr;
  nn::Adam* generator_opt = nullptr;
  nn::Adam* discriminator_opt = nullptr;
};

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                     const TrainingProgress& progress);

/// Loads weights, buffers and optimizer moments into already-built models.
/// The stored configs must equal the models' configs; otherwise a
/// config-mismatch error lists both.
TrainingProgress load_checkpoint(const std::filesystem::path& path, const TrainingState& state);

/// Builds the generator recorded in a checkpoint and loads its weights.
std::unique_ptr<Generator> load_generator(const std::filesystem::path& path);

/// Reads only the stored generator config.
GeneratorConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace melfill
