#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "melfill/dsp.hpp"
#include "melfill/masking.hpp"

namespace melfill {

struct ClipRecord {
  std::string clip_id;
  std::filesystem::path wav_path;
  double duration_s = 0.0;
};

struct CorpusIndex {
  std::filesystem::path root;
  std::vector<ClipRecord> records;  // sorted by clip_id
  std::vector<std::string> missing;  // metadata rows without a wav
  std::size_t warnings() const { return missing.size(); }
};

/// Reads `metadata.csv` (pipe-delimited, id first) and probes `wavs/<id>.wav`.
CorpusIndex ingest_corpus(const std::filesystem::path& root);

struct CorpusSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;

  /// Digest of the sorted training ids; tags statistics derived from them.
  std::string train_hash() const;
  /// Digest of the whole sorted subset.
  std::string subset_hash() const;
};

inline constexpr std::size_t kSubsetSize = 1300;
inline constexpr std::size_t kTrainSize = 1000;

CorpusSplit split_corpus(const CorpusIndex& index, std::size_t subset_size = kSubsetSize,
                         std::size_t n_train = kTrainSize, std::uint64_t seed = 42);

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split);
CorpusSplit read_split_manifest(const std::filesystem::path& path);

/// Digest of an id list after sorting.
std::string id_list_hash(std::vector<std::string> ids);

/// trim -> (resample) -> log-mel. Throws kTooShort / kAllSilent.
MelSpectrogram preprocess_clip(const AudioClip& clip, const MelFilterbank& fb);

struct TrainingPair {
  std::string clip_id;
  MelSpectrogram source;  // target with the gap filled
  MelSpectrogram target;  // normalized, fixed length
  GapSpec gap;
};

TrainingPair make_pair(std::string clip_id, MelSpectrogram normalized_target, const GapSpec& gap);

/// Returns the log-mel (or already normalized mel) for a clip id.
using MelLoader = std::function<MelSpectrogram(const std::string& clip_id)>;

/// Loader that reads and preprocesses `wav_path` of each record.
MelLoader wav_loader(const CorpusIndex& index, const MelFilterbank& fb);

/// Loader over a mel cache directory (`<dir>/<id>.mel`). Cached mels must be
/// tagged with `stats_digest(stats)`.
MelLoader cache_loader(const std::filesystem::path& dir, const NormStats& stats);

/// Deterministic single-consumer stream of training pairs. Clips that fail
/// preprocessing as too short or silent are skipped and counted.
class PairStream {
 public:
  PairStream(std::vector<std::string> clip_ids, MelLoader loader, NormStats stats,
             GapMode mode, std::uint64_t seed, int target_frames);

  std::optional<TrainingPair> next();
  std::size_t warnings() const { return warnings_; }
  std::vector<TrainingPair> drain();

 private:
  std::vector<std::string> ids_;
  MelLoader loader_;
  NormStats stats_;
  GapMode mode_;
  std::mt19937_64 rng_;
  int target_frames_;
  std::size_t cursor_ = 0;
  std::size_t warnings_ = 0;
};

/// Checks that `stats` were computed on the split whose training hash is
/// `train_split_hash`, then opens the stream.
PairStream make_pairs(std::vector<std::string> clip_ids, MelLoader loader, const NormStats& stats,
                      const std::string& train_split_hash, GapMode mode, std::uint64_t seed,
                      int target_frames = kStandardFrames);

struct PrepareOptions {
  std::filesystem::path root;
  std::filesystem::path out_dir;
  std::size_t subset_size = kSubsetSize;
  std::size_t n_train = kTrainSize;
  std::uint64_t seed = 42;
};

struct PrepareResult {
  CorpusIndex index;
  CorpusSplit split;
  NormStats stats;
  std::size_t cached = 0;
  std::vector<std::string> skipped;
};

/// ingest + split + train-only stats + normalized 256-frame mel cache.
/// Writes split.json, stats.json and mels/<id>.mel under out_dir.
PrepareResult prepare_corpus(const PrepareOptions& options);

}  // namespace melfill
