#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "melfill/training.hpp"

namespace melfill {

/// Shared configuration of every CLI run. The merged result of file and flags
/// is archived as run_config.json in each run directory.
struct RunConfig {
  std::filesystem::path corpus_root;
  std::filesystem::path prepared_dir;  // output of `prepare`
  std::uint64_t split_seed = 42;
  std::size_t subset_size = 1300;
  std::size_t n_train = 1000;
  TrainConfig train;  // includes gap mode, loss weights and generator variant
  std::string vocoder = "griffin-lim";
  std::string extractor = "test-double";  // or vgg19:<weights archive>
  std::string device = "cpu";
  std::filesystem::path out_dir;

  bool operator==(const RunConfig& other) const { return to_json() == other.to_json(); }
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig read_run_config(const std::filesystem::path& path);
void write_run_config(const std::filesystem::path& path, const RunConfig& config);

/// "test-double" or "vgg19:<path>".
FeatureExtractor make_extractor(const std::string& spec);

}  // namespace melfill
