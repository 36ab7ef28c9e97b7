#include "melfill/pesq.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <string>

#include "melfill/error.hpp"

#ifndef MELFILL_SOURCE_DIR
#define MELFILL_SOURCE_DIR "."
#endif

namespace melfill {

namespace {

std::string run_capture(const std::string& command, int* status) {
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"), pclose);
  require(pipe != nullptr, ErrorCode::kIo, "cannot run: " + command);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe.get())) out += buf;
  *status = pclose(pipe.release());
  return out;
}

std::pair<AudioClip, AudioClip> prepare_pair(const AudioClip& ref, const AudioClip& deg) {
  AudioClip r = resample(ref, kPesqSampleRate);
  AudioClip d = resample(deg, kPesqSampleRate);
  const std::size_t n = std::min(r.samples.size(), d.samples.size());
  require(static_cast<double>(n) / kPesqSampleRate >= kPesqMinSeconds, ErrorCode::kTooShort,
          "pesq: clips must be at least 0.25 s long");
  r.samples.resize(n);
  d.samples.resize(n);
  return {std::move(r), std::move(d)};
}

}  // namespace

std::filesystem::path pesq_script() {
  if (const char* env = std::getenv("MELFILL_PESQ_SCRIPT"); env && *env) return env;
  return std::filesystem::path(MELFILL_SOURCE_DIR) / "tools" / "pesq_score.py";
}

bool pesq_available() {
  static std::once_flag once;
  static bool available = false;
  std::call_once(once, [] {
    int status = 0;
    run_capture("python3 -c 'import pesq, numpy' 2>/dev/null", &status);
    available = status == 0 && std::filesystem::exists(pesq_script());
  });
  return available;
}

std::vector<double> pesq_mos_batch(
    const std::vector<std::pair<const AudioClip*, const AudioClip*>>& pairs) {
  require(pesq_available(), ErrorCode::kUnavailable,
          "pesq: python3 with the 'pesq' package is required (pip install pesq)");
  static std::atomic<unsigned> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("melfill_pesq_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  const auto list = dir / "pairs.tsv";
  {
    std::ofstream out(list);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      auto [r, d] = prepare_pair(*pairs[i].first, *pairs[i].second);
      const auto rp = dir / ("ref_" + std::to_string(i) + ".wav");
      const auto dp = dir / ("deg_" + std::to_string(i) + ".wav");
      write_wav(rp, r);
      write_wav(dp, d);
      out << rp.string() << '\t' << dp.string() << '\n';
    }
  }
  int status = 0;
  const std::string output =
      run_capture("python3 '" + pesq_script().string() + "' '" + list.string() + "'", &status);
  std::filesystem::remove_all(dir);
  require(status == 0, ErrorCode::kIo, "pesq: scorer exited with status " + std::to_string(status));

  std::vector<double> scores;
  std::size_t pos = 0;
  while (pos < output.size()) {
    const std::size_t eol = output.find('\n', pos);
    const std::string line = output.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? output.size() : eol + 1;
    if (line.empty()) continue;
    scores.push_back(line.rfind("error", 0) == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                  : std::stod(line));
  }
  require(scores.size() == pairs.size(), ErrorCode::kFormat,
          "pesq: expected " + std::to_string(pairs.size()) + " scores, got " +
              std::to_string(scores.size()));
  return scores;
}

double pesq_mos(const AudioClip& reference, const AudioClip& degraded) {
  const double s = pesq_mos_batch({{&reference, &degraded}}).front();
  require(std::isfinite(s), ErrorCode::kIo, "pesq: scorer rejected the pair");
  return s;
}

}  // namespace melfill
