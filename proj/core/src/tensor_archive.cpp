#include "melfill/tensor_archive.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "melfill/error.hpp"

namespace melfill {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor archives assume a little-endian host");

constexpr std::array<char, 4> kMagic{'M', 'F', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

const nn::Tensor& TensorArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  require(it != tensors.end(), ErrorCode::kFormat, "archive: missing tensor " + name);
  return it->second;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const auto& s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += t.numel();
  }
  const std::string text = header.dump();

  // Write to a sibling file first so an interrupted save never clobbers the
  // previous archive.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    out.write(reinterpret_cast<const char*>(&kVersion), 4);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open " + path.string());
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  require(in && magic == kMagic, ErrorCode::kFormat, path.string() + ": not a tensor archive");
  require(version == kVersion, ErrorCode::kFormat,
          path.string() + ": unsupported archive version " + std::to_string(version));
  require(len < (1ull << 32), ErrorCode::kFormat, path.string() + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(in), ErrorCode::kFormat, path.string() + ": truncated header");

  TensorArchive archive;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  archive.meta = header.value("meta", nlohmann::json::object());
  const auto payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::array<int, 4>>();
    nn::Tensor t(nn::Shape{shape[0], shape[1], shape[2], shape[3]});
    const auto offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    require(static_cast<bool>(in), ErrorCode::kFormat,
            path.string() + ": truncated tensor " + entry.at("name").get<std::string>());
    archive.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

}  // namespace melfill
