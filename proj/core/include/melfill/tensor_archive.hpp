#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "melfill/nn/tensor.hpp"

namespace melfill {

/// Named float32 tensors plus a JSON metadata block in one binary file:
///   "MFTA" | u32 version | u64 header bytes | JSON header | f32 payload
/// The header lists each tensor's name, shape and payload offset.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, nn::Tensor> tensors;

  const nn::Tensor& at(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace melfill
