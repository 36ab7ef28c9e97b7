#include "melfill/checkpoint.hpp"

#include "melfill/error.hpp"

namespace melfill {

namespace {

void store_params(TensorArchive& archive, const std::string& prefix,
                  const nn::ParameterSet& params) {
  for (const auto& p : params.parameters()) archive.tensors[prefix + p.name] = p.var.value();
  for (const auto& b : params.buffers()) archive.tensors[prefix + b.name] = *b.tensor;
}

void restore_tensor(const TensorArchive& archive, const std::string& key, nn::Tensor& dst) {
  const nn::Tensor& src = archive.at(key);
  require(src.shape() == dst.shape(), ErrorCode::kShapeMismatch,
          "checkpoint: " + key + " has shape " + src.shape().str() + ", model expects " +
              dst.shape().str());
  std::copy(src.values().begin(), src.values().end(), dst.data());
}

void restore_params(const TensorArchive& archive, const std::string& prefix,
                    nn::ParameterSet& params) {
  for (auto& p : params.parameters()) restore_tensor(archive, prefix + p.name, p.var.mutable_value());
  for (const auto& b : params.buffers()) restore_tensor(archive, prefix + b.name, *b.tensor);
}

void store_optimizer(TensorArchive& archive, const std::string& prefix, nn::Adam& opt,
                     nlohmann::json& meta) {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    archive.tensors[prefix + "m." + std::to_string(i)] = m[i];
    archive.tensors[prefix + "v." + std::to_string(i)] = v[i];
  }
  meta[prefix + "steps"] = opt.steps();
}

void restore_optimizer(const TensorArchive& archive, const std::string& prefix, nn::Adam& opt) {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    restore_tensor(archive, prefix + "m." + std::to_string(i), m[i]);
    restore_tensor(archive, prefix + "v." + std::to_string(i), v[i]);
  }
  opt.set_steps(archive.meta.at(prefix + "steps").get<std::int64_t>());
}

TensorArchive open_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kNotFound,
          "checkpoint not found: " + path.string());
  TensorArchive archive = read_archive(path);
  const int version = archive.meta.value("format_version", -1);
  require(version == kCheckpointFormatVersion, ErrorCode::kConfigMismatch,
          path.string() + ": checkpoint format version " + std::to_string(version) +
              ", this build reads version " + std::to_string(kCheckpointFormatVersion));
  return archive;
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"input_frames", c.input_frames},
          {"input_height", c.input_height},
          {"base_channels", c.base_channels},
          {"dropout", c.dropout}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.variant = parse_generator_variant(j.at("variant").get<std::string>());
  c.input_frames = j.at("input_frames").get<int>();
  c.input_height = j.at("input_height").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.dropout = j.value("dropout", 0.5f);
  return c;
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"input_height", c.input_height},
          {"input_frames", c.input_frames},
          {"base_channels", c.base_channels}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.input_height = j.at("input_height").get<int>();
  c.input_frames = j.at("input_frames").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                     const TrainingProgress& progress) {
  require(state.generator != nullptr, ErrorCode::kInvalidArgument,
          "save_checkpoint: generator required");
  TensorArchive archive;
  auto& meta = archive.meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["generator"] = to_json(state.generator->config());
  meta["step"] = progress.step;
  meta["epoch"] = progress.epoch;
  meta["rng_state"] = progress.rng_state;
  meta["extra"] = progress.extra;
  store_params(archive, "G.", state.generator->parameters());
  if (state.discriminator) {
    meta["discriminator"] = to_json(state.discriminator->config());
    store_params(archive, "D.", state.discriminator->parameters());
  }
  if (state.generator_opt) store_optimizer(archive, "optG.", *state.generator_opt, meta);
  if (state.discriminator_opt) store_optimizer(archive, "optD.", *state.discriminator_opt, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_archive(path, archive);
}

TrainingProgress load_checkpoint(const std::filesystem::path& path, const TrainingState& state) {
  const TensorArchive archive = open_checkpoint(path);
  const auto& meta = archive.meta;

  if (state.generator) {
    const GeneratorConfig stored = generator_config_from_json(meta.at("generator"));
    if (!(stored == state.generator->config())) {
      fail(ErrorCode::kConfigMismatch,
           path.string() + ": generator config mismatch\n  checkpoint: " + stored.describe() +
               "\n  requested:  " + state.generator->config().describe());
    }
    restore_params(archive, "G.", state.generator->parameters());
  }
  if (state.discriminator) {
    require(meta.contains("discriminator"), ErrorCode::kConfigMismatch,
            path.string() + ": checkpoint holds no discriminator");
    const DiscriminatorConfig stored = discriminator_config_from_json(meta.at("discriminator"));
    if (!(stored == state.discriminator->config())) {
      fail(ErrorCode::kConfigMismatch,
           path.string() + ": discriminator config mismatch\n  checkpoint: " +
               stored.describe() + "\n  requested:  " + state.discriminator->config().describe());
    }
    restore_params(archive, "D.", state.discriminator->parameters());
  }
  if (state.generator_opt) restore_optimizer(archive, "optG.", *state.generator_opt);
  if (state.discriminator_opt) restore_optimizer(archive, "optD.", *state.discriminator_opt);

  TrainingProgress progress;
  progress.step = meta.value("step", std::int64_t{0});
  progress.epoch = meta.value("epoch", 0);
  progress.rng_state = meta.value("rng_state", std::string());
  progress.extra = meta.value("extra", nlohmann::json::object());
  return progress;
}

GeneratorConfig read_checkpoint_config(const std::filesystem::path& path) {
  return generator_config_from_json(open_checkpoint(path).meta.at("generator"));
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& path) {
  auto gen = build_generator(read_checkpoint_config(path), 0);
  load_checkpoint(path, TrainingState{gen.get(), nullptr, nullptr, nullptr});
  return gen;
}

}  // namespace melfill
