#include <algorithm>
#include <fstream>
#include <set>

#include "melfill/dataset.hpp"
#include "melfill/mel_cache.hpp"
#include "melfill/synthetic.hpp"
#include "support.hpp"

using namespace melfill;

namespace {

void append_line(const std::filesystem::path& file, const std::string& line) {
  std::ofstream(file, std::ios::app) << line << '\n';
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("ingest lists wavs sorted and reports metadata rows without audio") {
  support::TempDir dir("ingest");
  write_synthetic_corpus(dir.path(), 5, 1, 0.5);
  append_line(dir / "metadata.csv", "ghost_0001|no audio|no audio");
  const CorpusIndex index = ingest_corpus(dir.path());
  CHECK(index.records.size() == 5u);
  CHECK(index.missing == std::vector<std::string>{"ghost_0001"});
  CHECK(index.warnings() == 1u);
  CHECK(std::is_sorted(index.records.begin(), index.records.end(),
                       [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; }));
  for (const auto& r : index.records) CHECK(r.duration_s == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("ingest rejects duplicate ids and a missing metadata file") {
  support::TempDir dir("dup");
  write_synthetic_corpus(dir.path(), 2, 1, 0.5);
  const CorpusIndex index = ingest_corpus(dir.path());
  append_line(dir / "metadata.csv", index.records.front().clip_id + "|again|again");
  CHECK(support::error_code_of([&] { ingest_corpus(dir.path()); }) == ErrorCode::kFormat);
  CHECK(support::error_code_of([&] { ingest_corpus(dir / "nowhere"); }) == ErrorCode::kNotFound);
}

TEST_CASE("split is deterministic, disjoint and sized") {
  CorpusIndex index;
  for (int i = 0; i < 50; ++i) index.records.push_back({"c" + std::to_string(100 + i), {}, 1.0});
  const CorpusSplit a = split_corpus(index, 30, 20, 42);
  const CorpusSplit b = split_corpus(index, 30, 20, 42);
  const CorpusSplit c = split_corpus(index, 30, 20, 43);
  CHECK(a.train_ids == b.train_ids);
  CHECK(a.test_ids == b.test_ids);
  CHECK(a.train_ids.size() == 20u);
  CHECK(a.test_ids.size() == 10u);
  CHECK(a.train_hash() != c.train_hash());
  std::set<std::string> seen(a.train_ids.begin(), a.train_ids.end());
  for (const auto& id : a.test_ids) CHECK(seen.insert(id).second);
  CHECK(support::error_code_of([&] { split_corpus(index, 60, 20, 1); }) == ErrorCode::kInvalidArgument);
  CHECK(support::error_code_of([&] { split_corpus(index, 30, 30, 1); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("id hashes ignore order") {
  CHECK(id_list_hash({"b", "a", "c"}) == id_list_hash({"c", "b", "a"}));
  CHECK(id_list_hash({"a"}) != id_list_hash({"b"}));
}

TEST_CASE("split manifest round trip and tamper detection") {
  support::TempDir dir("manifest");
  CorpusSplit s;
  s.train_ids = {"x1", "x3"};
  s.test_ids = {"x2"};
  s.seed = 9;
  write_split_manifest(dir / "split.json", s);
  const CorpusSplit r = read_split_manifest(dir / "split.json");
  CHECK(r.train_ids == s.train_ids);
  CHECK(r.test_ids == s.test_ids);
  CHECK(r.seed == 9u);

  std::ifstream in(dir / "split.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  text.replace(text.find("\"x2\""), 4, "\"x9\"");
  std::ofstream(dir / "bad.json") << text;
  CHECK(support::error_code_of([&] { read_split_manifest(dir / "bad.json"); }) == ErrorCode::kFormat);
  CHECK(support::error_code_of([&] { read_split_manifest(dir / "none.json"); }) == ErrorCode::kNotFound);
}

TEST_CASE("prepare caches normalized mels and guards against leakage") {
  support::TempDir dir("prepare");
  write_synthetic_corpus(dir / "corpus", 8, 3, 1.0);
  const PrepareResult r = prepare_corpus({dir / "corpus", dir / "out", 8, 6, 42});
  CHECK(r.split.train_ids.size() == 6u);
  CHECK(r.cached == 8u);
  CHECK(r.stats.train_split_hash == r.split.train_hash());
  CHECK(std::filesystem::exists(dir / "out" / "split.json"));
  CHECK(std::filesystem::exists(dir / "out" / "stats.json"));

  const MelLoader load = cache_loader(dir / "out" / "mels", r.stats);
  const MelSpectrogram m = load(r.split.test_ids.front());
  CHECK(m.state == MelState::kNormalized);
  CHECK(m.frames == kStandardFrames);

  NormStats other = r.stats;
  other.mu += 0.5;
  CHECK(support::error_code_of([&] { cache_loader(dir / "out" / "mels", other)(r.split.test_ids.front()); }) ==
        ErrorCode::kLeakage);
  CHECK(support::error_code_of([&] {
          make_pairs(r.split.train_ids, load, r.stats, id_list_hash(r.split.test_ids), FixedGap{6}, 1);
        }) == ErrorCode::kLeakage);

  auto stream = make_pairs(r.split.train_ids, load, r.stats, r.split.train_hash(), FixedGap{6}, 1);
  const auto pairs = stream.drain();
  CHECK(pairs.size() == 6u);
  for (const auto& p : pairs) {
    CHECK(p.gap == make_gap_spec(6));
    CHECK(p.source.at(0, kStandardFrames - 1) == -1.0f);
    CHECK(p.source.at(3, 10) == p.target.at(3, 10));
  }
}

TEST_CASE("pair stream skips clips that are too short") {
  NormStats stats{0.0, 1.0, -2.0, 2.0, "h"};
  const MelLoader loader = [](const std::string& id) -> MelSpectrogram {
    if (id == "short") fail(ErrorCode::kTooShort, "short");
    return MelSpectrogram(80, 300, MelState::kLogMel, 0.5f);
  };
  auto stream = make_pairs({"a", "short", "b"}, loader, stats, "h", VariativeGap{}, 3);
  const auto pairs = stream.drain();
  CHECK(pairs.size() == 2u);
  CHECK(stream.warnings() == 1u);
  for (const auto& p : pairs) {
    CHECK(p.target.frames == kStandardFrames);
    CHECK(p.target.state == MelState::kNormalized);
    CHECK(p.gap.packets >= 1);
    CHECK(p.gap.packets <= 8);
  }
}

TEST_CASE("pair stream is reproducible for a seed") {
  NormStats stats{0.0, 1.0, -2.0, 2.0, "h"};
  const MelLoader loader = [](const std::string&) {
    return MelSpectrogram(80, 256, MelState::kLogMel, 0.1f);
  };
  std::vector<std::string> ids(20, "x");
  auto a = make_pairs(ids, loader, stats, "h", VariativeGap{}, 5).drain();
  auto b = make_pairs(ids, loader, stats, "h", VariativeGap{}, 5).drain();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].gap == b[i].gap);
}

}  // TEST_SUITE
