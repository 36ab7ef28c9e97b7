#include "melfill/run_config.hpp"

#include <fstream>

#include "melfill/error.hpp"

namespace melfill {

nlohmann::json RunConfig::to_json() const {
  return {{"corpus_root", corpus_root.string()},
          {"prepared_dir", prepared_dir.string()},
          {"split_seed", split_seed},
          {"subset_size", subset_size},
          {"n_train", n_train},
          {"train", melfill::to_json(train)},
          {"vocoder", vocoder},
          {"extractor", extractor},
          {"device", device},
          {"out_dir", out_dir.string()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.corpus_root = j.value("corpus_root", std::string());
    c.prepared_dir = j.value("prepared_dir", std::string());
    c.split_seed = j.value("split_seed", c.split_seed);
    c.subset_size = j.value("subset_size", c.subset_size);
    c.n_train = j.value("n_train", c.n_train);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    c.vocoder = j.value("vocoder", c.vocoder);
    c.extractor = j.value("extractor", c.extractor);
    c.device = j.value("device", c.device);
    c.out_dir = j.value("out_dir", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "run config not found: " + path.string());
  try {
    return RunConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

void write_run_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << config.to_json().dump(2) << '\n';
}

FeatureExtractor make_extractor(const std::string& spec) {
  if (spec == "test-double") return FeatureExtractor::test_double();
  if (spec.rfind("vgg19:", 0) == 0) return FeatureExtractor::vgg19(spec.substr(6));
  fail(ErrorCode::kInvalidArgument, "unknown extractor '" + spec + "' (test-double | vgg19:<path>)");
}

}  // namespace melfill
