#pragma once

#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "melfill/audio.hpp"
#include "melfill/error.hpp"

namespace support {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() /
              ("melfill_unit_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline melfill::AudioClip tone(double hz, double seconds, float amp = 0.5f, int rate = 22050) {
  melfill::AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = amp * static_cast<float>(std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return c;
}

// Tensor storage is exposed as a span; copy it out to compare.
template <typename Span>
std::vector<float> vec(const Span& s) {
  return {s.begin(), s.end()};
}

template <typename F>
melfill::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const melfill::Error& e) {
    return e.code();
  }
  FAIL("expected a melfill::Error");
  return melfill::ErrorCode::kInvalidArgument;
}

}  // namespace support
