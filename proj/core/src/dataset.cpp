#include "melfill/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

#include "melfill/digest.hpp"
#include "melfill/error.hpp"
#include "melfill/mel_cache.hpp"
#include "melfill/random.hpp"

namespace melfill {

namespace {

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

CorpusIndex ingest_corpus(const std::filesystem::path& root) {
  const auto meta_path = root / "metadata.csv";
  std::ifstream in(meta_path);
  require(static_cast<bool>(in), ErrorCode::kNotFound,
          "corpus metadata not found: " + meta_path.string());
  CorpusIndex index;
  index.root = root;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    if (line.empty()) continue;
    const std::string id = line.substr(0, line.find('|'));
    if (id.empty()) continue;
    const auto wav = root / "wavs" / (id + ".wav");
    if (!std::filesystem::exists(wav)) {
      index.missing.push_back(id);
      continue;
    }
    const double duration = probe_wav(wav).duration_s();
    if (duration <= 0.0) {
      index.missing.push_back(id);
      continue;
    }
    index.records.push_back({id, wav, duration});
  }
  std::sort(index.records.begin(), index.records.end(),
            [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
  const auto dup = std::adjacent_find(
      index.records.begin(), index.records.end(),
      [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id == b.clip_id; });
  require(dup == index.records.end(), ErrorCode::kFormat,
          meta_path.string() + ": duplicate clip id " +
              (dup == index.records.end() ? std::string() : dup->clip_id));
  return index;
}

std::string id_list_hash(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + '\n';
  return sha256_hex(joined);
}

std::string CorpusSplit::train_hash() const { return id_list_hash(train_ids); }

std::string CorpusSplit::subset_hash() const {
  std::vector<std::string> all = train_ids;
  all.insert(all.end(), test_ids.begin(), test_ids.end());
  return id_list_hash(std::move(all));
}

CorpusSplit split_corpus(const CorpusIndex& index, std::size_t subset_size, std::size_t n_train,
                         std::uint64_t seed) {
  require(subset_size <= index.records.size(), ErrorCode::kInvalidArgument,
          "split_corpus: subset of " + std::to_string(subset_size) + " from " +
              std::to_string(index.records.size()) + " records");
  require(n_train < subset_size, ErrorCode::kInvalidArgument,
          "split_corpus: n_train must be smaller than the subset");
  std::vector<std::size_t> order(index.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first subset_size slots are the sample.
  for (std::size_t i = 0; i < subset_size; ++i) {
    const std::size_t j = i + uniform_below(rng, order.size() - i);
    std::swap(order[i], order[j]);
  }
  CorpusSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < subset_size; ++i) {
    auto& dst = i < n_train ? split.train_ids : split.test_ids;
    dst.push_back(index.records[order[i]].clip_id);
  }
  return split;
}

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split) {
  nlohmann::json j{{"seed", split.seed},
                   {"subset_hash", split.subset_hash()},
                   {"train_hash", split.train_hash()},
                   {"train_ids", split.train_ids},
                   {"test_ids", split.test_ids}};
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CorpusSplit read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "split manifest not found: " + path.string());
  CorpusSplit split;
  try {
    const auto j = nlohmann::json::parse(in);
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    require(j.at("subset_hash").get<std::string>() == split.subset_hash(), ErrorCode::kFormat,
            path.string() + ": subset hash does not match the listed ids");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return split;
}

MelSpectrogram preprocess_clip(const AudioClip& clip, const MelFilterbank& fb) {
  AudioClip audio = clip.sample_rate == fb.config.sample_rate
                        ? clip
                        : resample(clip, fb.config.sample_rate);
  return mel_analyze(trim_silence(audio, 60.0, fb.config), fb);
}

TrainingPair make_pair(std::string clip_id, MelSpectrogram normalized_target, const GapSpec& gap) {
  TrainingPair pair;
  pair.clip_id = std::move(clip_id);
  pair.source = apply_gap(normalized_target, gap);
  pair.target = std::move(normalized_target);
  pair.gap = gap;
  return pair;
}

MelLoader wav_loader(const CorpusIndex& index, const MelFilterbank& fb) {
  std::map<std::string, std::filesystem::path> paths;
  for (const auto& r : index.records) paths.emplace(r.clip_id, r.wav_path);
  return [paths = std::move(paths), fb](const std::string& id) {
    auto it = paths.find(id);
    require(it != paths.end(), ErrorCode::kNotFound, "clip " + id + " not in corpus index");
    return preprocess_clip(read_wav(it->second), fb);
  };
}

MelLoader cache_loader(const std::filesystem::path& dir, const NormStats& stats) {
  return [dir, digest = stats_digest(stats)](const std::string& id) {
    CachedMel cached = read_mel_cache(dir / (id + ".mel"));
    require(cached.stats_hash == digest, ErrorCode::kLeakage,
            "mel cache for " + id + " was normalized with different statistics");
    return std::move(cached.mel);
  };
}

PairStream::PairStream(std::vector<std::string> clip_ids, MelLoader loader, NormStats stats,
                       GapMode mode, std::uint64_t seed, int target_frames)
    : ids_(std::move(clip_ids)),
      loader_(std::move(loader)),
      stats_(std::move(stats)),
      mode_(mode),
      rng_(seed),
      target_frames_(target_frames) {}

std::optional<TrainingPair> PairStream::next() {
  while (cursor_ < ids_.size()) {
    const std::string& id = ids_[cursor_++];
    MelSpectrogram mel;
    try {
      mel = loader_(id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTooShort && e.code() != ErrorCode::kAllSilent) throw;
      ++warnings_;
      continue;
    }
    if (mel.state == MelState::kLogMel) mel = normalize(mel, stats_);
    mel = fix_length(mel, target_frames_);
    const GapSpec gap = make_gap_spec(mode_, rng_, target_frames_);
    return make_pair(id, std::move(mel), gap);
  }
  return std::nullopt;
}

std::vector<TrainingPair> PairStream::drain() {
  std::vector<TrainingPair> out;
  while (auto p = next()) out.push_back(std::move(*p));
  return out;
}

PairStream make_pairs(std::vector<std::string> clip_ids, MelLoader loader, const NormStats& stats,
                      const std::string& train_split_hash, GapMode mode, std::uint64_t seed,
                      int target_frames) {
  require(stats.train_split_hash == train_split_hash, ErrorCode::kLeakage,
          "normalization statistics are tagged with split " + stats.train_split_hash +
              " but the training split hashes to " + train_split_hash);
  return PairStream(std::move(clip_ids), std::move(loader), stats, mode, seed, target_frames);
}

PrepareResult prepare_corpus(const PrepareOptions& options) {
  PrepareResult result;
  result.index = ingest_corpus(options.root);
  result.split = split_corpus(result.index, options.subset_size, options.n_train, options.seed);

  const MelFilterbank fb = build_mel_filterbank();
  const MelLoader load = wav_loader(result.index, fb);

  std::map<std::string, MelSpectrogram> log_mels;
  std::vector<MelSpectrogram> train_mels;
  auto analyze = [&](const std::string& id) -> bool {
    try {
      log_mels.emplace(id, load(id));
      return true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTooShort && e.code() != ErrorCode::kAllSilent) throw;
      result.skipped.push_back(id);
      return false;
    }
  };
  for (const auto& id : result.split.train_ids) {
    if (analyze(id)) train_mels.push_back(log_mels.at(id));
  }
  for (const auto& id : result.split.test_ids) analyze(id);
  require(!train_mels.empty(), ErrorCode::kInvalidArgument,
          "prepare: no analyzable clips in the training split");

  result.stats = compute_corpus_stats(train_mels, result.split.train_hash());

  std::filesystem::create_directories(options.out_dir / "mels");
  write_split_manifest(options.out_dir / "split.json", result.split);
  write_stats(options.out_dir / "stats.json", result.stats);
  const std::string digest = stats_digest(result.stats);
  for (const auto& [id, mel] : log_mels) {
    write_mel_cache(options.out_dir / "mels" / (id + ".mel"),
                    fix_length(normalize(mel, result.stats), kStandardFrames), digest);
    ++result.cached;
  }
  return result;
}

}  // namespace melfill
