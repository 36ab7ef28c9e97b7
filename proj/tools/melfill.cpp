// melfill command-line entry point.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "melfill/checkpoint.hpp"
#include "melfill/dataset.hpp"
#include "melfill/error.hpp"
#include "melfill/evaluation.hpp"
#include "melfill/image.hpp"
#include "melfill/mel_cache.hpp"
#include "melfill/pesq.hpp"
#include "melfill/run_config.hpp"
#include "melfill/synthetic.hpp"
#include "melfill/training.hpp"
#include "melfill/vocoder.hpp"

namespace fs = std::filesystem;
using namespace melfill;

namespace {

struct Flags {
  std::string config_path;
  std::string device = "cpu";
  // prepare
  std::string root;
  std::uint64_t seed = 42;
  std::size_t subset = kSubsetSize;
  std::size_t n_train = kTrainSize;
  std::string out;
  // train
  std::string prepared;
  std::string variant = "unet_256x128";
  int base_channels = 64;
  int discriminator_base = 64;
  int gap_packets = 6;
  bool variative = false;
  int epochs = 40;
  float lr = 1e-4f;
  float beta1 = 0.5f;
  float clip_norm = 0.0f;
  std::string rec_mode = "l1";
  float lambda_adv = 1.0f, lambda_rec = 100.0f, lambda_chunk = 100.0f, lambda_l1 = 0.0f;
  bool resume = false;
  std::size_t limit = 0;
  std::string extractor = "test-double";
  // infer / evaluate / bench
  std::string wav;
  std::string checkpoint;
  std::string vocoder = "griffin-lim";
  std::string stats;
  std::string split = "test";
  std::string packets = "all";
  std::string pesq = "off";
  bool allow_beyond_training = false;
  std::size_t k = 3;
  int runs = 10;
  bool identity = false;
  // make-toy-corpus
  int clips = 64;
  double seconds = 3.0;
};

bool given(const CLI::App* app, const std::string& name) {
  try {
    return app->count(name) > 0;
  } catch (const CLI::OptionNotFound&) {
    return false;
  }
}

RunConfig base_config(const Flags& f) {
  RunConfig c;
  if (!f.config_path.empty()) c = read_run_config(f.config_path);
  if (const char* env = std::getenv("MELFILL_CORPUS"); env && c.corpus_root.empty()) c.corpus_root = env;
  return c;
}

void check_device(const std::string& device) {
  if (device == "cpu") return;
  require(device == "gpu", ErrorCode::kInvalidArgument, "--device must be cpu or gpu");
  fail(ErrorCode::kUnavailable, "this build has no GPU backend; use --device cpu");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

int trained_max_packets(const fs::path& checkpoint) {
  const TensorArchive archive = read_archive(checkpoint);
  const auto& extra = archive.meta.value("extra", nlohmann::json::object());
  if (!extra.contains("train_config")) return kMaxPackets;
  const GapMode mode = train_config_from_json(extra.at("train_config")).gap_mode;
  if (const auto* fixed = std::get_if<FixedGap>(&mode)) return fixed->packets;
  return std::get<VariativeGap>(mode).max_packets;
}

std::vector<int> parse_packets(const std::string& spec) {
  if (spec == "all") return {1, 2, 3, 4, 5, 6, 7, 8};
  try {
    const int k = std::stoi(spec);
    packets_to_frames(k);
    return {k};
  } catch (const std::logic_error&) {
    fail(ErrorCode::kInvalidArgument, "--packets must be 'all' or 0..8");
  }
}

// ---------------------------------------------------------------------------

int run_prepare(const CLI::App* cmd, const Flags& f) {
  RunConfig c = base_config(f);
  if (given(cmd, "--root")) c.corpus_root = f.root;
  if (given(cmd, "--seed")) c.split_seed = f.seed;
  if (given(cmd, "--subset")) c.subset_size = f.subset;
  if (given(cmd, "--train")) c.n_train = f.n_train;
  if (given(cmd, "--out")) c.out_dir = f.out;
  if (c.out_dir.empty()) c.out_dir = "prepared";
  require(!c.corpus_root.empty(), ErrorCode::kInvalidArgument,
          "prepare: --root or $MELFILL_CORPUS is required");
  c.prepared_dir = c.out_dir;

  PrepareOptions opt{c.corpus_root, c.out_dir, c.subset_size, c.n_train, c.split_seed};
  const PrepareResult r = prepare_corpus(opt);
  write_run_config(c.out_dir / "run_config.json", c);
  std::cout << "indexed " << r.index.records.size() << " clips (" << r.index.warnings()
            << " missing), split " << r.split.train_ids.size() << "/" << r.split.test_ids.size()
            << ", cached " << r.cached << " mels, skipped " << r.skipped.size() << '\n'
            << "stats: mu=" << r.stats.mu << " sigma=" << r.stats.sigma << '\n';
  return 0;
}

int run_train(const CLI::App* cmd, const Flags& f) {
  RunConfig c = base_config(f);
  auto& t = c.train;
  if (given(cmd, "--prepared")) c.prepared_dir = f.prepared;
  if (given(cmd, "--variant") || given(cmd, "--base-channels")) {
    const GeneratorVariant v = parse_generator_variant(given(cmd, "--variant") ? f.variant
                                                       : std::string(to_string(t.generator.variant)));
    const int base = given(cmd, "--base-channels") ? f.base_channels : t.generator.base_channels;
    t.generator = GeneratorConfig::for_variant(v, base);
  }
  if (given(cmd, "--variative")) t.gap_mode = VariativeGap{};
  if (given(cmd, "--gap-packets")) t.gap_mode = FixedGap{f.gap_packets};
  if (given(cmd, "--epochs")) t.epochs = f.epochs;
  if (given(cmd, "--lr")) t.adam.lr = f.lr;
  if (given(cmd, "--beta1")) t.adam.beta1 = f.beta1;
  if (given(cmd, "--clip-norm")) t.adam.clip_norm = f.clip_norm;
  if (given(cmd, "--rec-mode")) t.weights.rec_mode = parse_rec_mode(f.rec_mode);
  if (given(cmd, "--lambda-adv")) t.weights.lambda_adv = f.lambda_adv;
  if (given(cmd, "--lambda-rec")) t.weights.lambda_rec = f.lambda_rec;
  if (given(cmd, "--lambda-chunk")) t.weights.lambda_chunk = f.lambda_chunk;
  if (given(cmd, "--lambda-l1")) t.weights.lambda_l1_residual = f.lambda_l1;
  if (given(cmd, "--seed")) t.seed = f.seed;
  if (given(cmd, "--discriminator-base")) t.discriminator_base = f.discriminator_base;
  if (given(cmd, "--extractor")) c.extractor = f.extractor;
  if (given(cmd, "--out-dir")) c.out_dir = f.out;
  if (c.out_dir.empty()) c.out_dir = "run";
  c.device = f.device;
  check_device(c.device);
  t.validate();
  require(!c.prepared_dir.empty(), ErrorCode::kInvalidArgument, "train: --prepared is required");

  const CorpusSplit split = read_split_manifest(c.prepared_dir / "split.json");
  const NormStats stats = read_stats(c.prepared_dir / "stats.json");
  std::vector<std::string> ids = split.train_ids;
  if (f.limit > 0 && ids.size() > f.limit) ids.resize(f.limit);
  auto stream = make_pairs(ids, cache_loader(c.prepared_dir / "mels", stats), stats,
                           split.train_hash(), t.gap_mode, t.seed, t.generator.input_frames);
  const std::vector<TrainingPair> pairs = stream.drain();

  std::optional<FeatureExtractor> extractor;
  if (t.weights.rec_mode == RecMode::kVggFeature) extractor = make_extractor(c.extractor);

  write_run_config(c.out_dir / "run_config.json", c);
  TrainRunOptions opt;
  opt.out_dir = c.out_dir;
  opt.resume = f.resume;
  opt.on_step = [&](const StepRecord& r) {
    if (r.step % 50 == 0)
      std::cout << "epoch " << r.epoch << " step " << r.step << " g=" << r.g_total
                << " rec=" << r.rec << " d=" << r.d_loss << '\n';
  };
  const TrainRunResult result = train_run(t, pairs, extractor ? &*extractor : nullptr, opt);
  std::cout << "trained " << result.records.size() << " steps on " << pairs.size() << " pairs ("
            << stream.warnings() << " skipped); last checkpoint "
            << (result.checkpoints.empty() ? std::string("none") : result.checkpoints.back().string())
            << '\n';
  return 0;
}

int run_infer(const CLI::App* cmd, const Flags& f) {
  RunConfig c = base_config(f);
  if (given(cmd, "--vocoder")) c.vocoder = f.vocoder;
  if (given(cmd, "--out")) c.out_dir = f.out;
  if (c.out_dir.empty()) c.out_dir = "infer";
  c.device = f.device;
  check_device(c.device);
  require(!f.wav.empty() && !f.checkpoint.empty(), ErrorCode::kInvalidArgument,
          "infer: --wav and --checkpoint are required");
  fs::path stats_path = f.stats;
  if (stats_path.empty()) stats_path = c.prepared_dir / "stats.json";
  const NormStats stats = read_stats(stats_path);

  auto model = load_generator(f.checkpoint);
  const auto vocoder = make_vocoder(c.vocoder);
  const int frames = model->config().input_frames;
  const MelFilterbank fb = build_mel_filterbank();

  AudioClip audio = read_wav(f.wav);
  if (audio.sample_rate != fb.config.sample_rate) audio = resample(audio, fb.config.sample_rate);
  audio = trim_silence(audio, 60.0, fb.config);
  const MelSpectrogram target = fix_length(normalize(mel_analyze(audio, fb), stats), frames);
  const GapSpec gap = make_gap_spec(f.gap_packets, frames);
  const MelSpectrogram masked = apply_gap(target, gap);
  const MelSpectrogram filled = inpaint(*model, masked, gap);

  AudioClip vocoded = synthesize(*vocoder, denormalize(filled, stats));
  AudioClip original = audio;
  original.samples.resize(static_cast<std::size_t>(frames - 1) * fb.config.hop + fb.config.n_fft, 0.0f);
  vocoded.samples.resize(std::max(vocoded.samples.size(), original.samples.size()), 0.0f);
  const AudioClip out = splice_audio(original, vocoded, gap);

  fs::create_directories(c.out_dir);
  write_wav(c.out_dir / "filled.wav", out);
  write_spectrogram_png(c.out_dir / "before.png", {&masked});
  write_spectrogram_png(c.out_dir / "after.png", {&filled});
  write_run_config(c.out_dir / "run_config.json", c);
  std::cout << "wrote " << (c.out_dir / "filled.wav").string() << " (" << gap.packets
            << " packets, " << gap.frame_len << " frames regenerated)\n";
  return 0;
}

int run_evaluate(const CLI::App* cmd, const Flags& f) {
  RunConfig c = base_config(f);
  if (given(cmd, "--prepared")) c.prepared_dir = f.prepared;
  if (given(cmd, "--vocoder")) c.vocoder = f.vocoder;
  if (given(cmd, "--extractor")) c.extractor = f.extractor;
  if (given(cmd, "--root")) c.corpus_root = f.root;
  if (given(cmd, "--out")) c.out_dir = f.out;
  if (c.out_dir.empty()) c.out_dir = "eval";
  c.device = f.device;
  check_device(c.device);
  require(!f.checkpoint.empty() && !c.prepared_dir.empty(), ErrorCode::kInvalidArgument,
          "evaluate: --checkpoint and --prepared are required");

  auto model = load_generator(f.checkpoint);
  const CorpusSplit split = read_split_manifest(c.prepared_dir / "split.json");
  const NormStats stats = read_stats(c.prepared_dir / "stats.json");
  require(f.split == "test" || f.split == "train", ErrorCode::kInvalidArgument,
          "--split must be test or train");
  std::vector<std::string> ids = f.split == "test" ? split.test_ids : split.train_ids;
  if (f.limit > 0 && ids.size() > f.limit) ids.resize(f.limit);

  const bool pesq_on = f.pesq == "on";
  require(f.pesq == "on" || f.pesq == "off", ErrorCode::kInvalidArgument, "--pesq must be on or off");
  std::optional<CorpusIndex> index;
  if (pesq_on) {
    require(!c.corpus_root.empty(), ErrorCode::kInvalidArgument,
            "evaluate: --pesq on needs the corpus (--root or $MELFILL_CORPUS)");
    index = ingest_corpus(c.corpus_root);
  }
  const MelFilterbank fb = build_mel_filterbank();
  const MelLoader load = cache_loader(c.prepared_dir / "mels", stats);
  std::vector<TestClip> clips;
  for (const auto& id : ids) {
    TestClip tc{id, load(id), std::nullopt};
    if (index) {
      for (const auto& r : index->records) {
        if (r.clip_id != id) continue;
        AudioClip a = read_wav(r.wav_path);
        if (a.sample_rate != fb.config.sample_rate) a = resample(a, fb.config.sample_rate);
        tc.reference = trim_silence(a, 60.0, fb.config);
      }
    }
    clips.push_back(std::move(tc));
  }

  const FeatureExtractor extractor = make_extractor(c.extractor);
  const auto vocoder = make_vocoder(c.vocoder);
  SweepOptions opt;
  opt.packets = parse_packets(f.packets);
  opt.trained_max_packets = trained_max_packets(f.checkpoint);
  opt.allow_beyond_training = f.allow_beyond_training;
  opt.pesq = pesq_on;
  opt.stats = stats;
  opt.image_dir = c.out_dir / "images";
  EvalReport report = evaluate_gap_sweep(*model, clips, extractor, vocoder.get(), opt);

  fs::create_directories(c.out_dir);
  write_text(c.out_dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(c.out_dir / "tables.md", render_tables(report));
  write_text(c.out_dir / "extremes.json", best_worst_report(report, f.k).to_json().dump(2) + "\n");
  write_run_config(c.out_dir / "run_config.json", c);
  std::cout << render_tables(report);
  if (report.errors > 0) std::cout << report.errors << " samples failed; see report.json\n";
  return 0;
}

int run_bench(const CLI::App* cmd, const Flags& f) {
  RunConfig c = base_config(f);
  if (given(cmd, "--vocoder")) c.vocoder = f.vocoder;
  c.device = f.device;
  check_device(c.device);
  const auto vocoder = make_vocoder(c.vocoder);
  NormStats stats;
  if (!f.stats.empty()) stats = read_stats(f.stats);

  std::unique_ptr<Generator> model;
  Inpainter inpainter;
  int frames = kStandardFrames;
  if (f.identity) {
    inpainter = [](const MelSpectrogram& m, const GapSpec&) { return m; };
  } else {
    require(!f.checkpoint.empty(), ErrorCode::kInvalidArgument,
            "bench: --checkpoint or --identity is required");
    model = load_generator(f.checkpoint);
    frames = model->config().input_frames;
    inpainter = model_inpainter(*model);
  }
  EvalReport report;
  report.latency = bench_latency(inpainter, *vocoder, stats, f.runs, frames);
  std::cout << render_tables(report);
  if (given(cmd, "--out")) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / "latency.json", report.to_json().dump(2) + "\n");
  }
  return 0;
}

int run_make_toy_corpus(const Flags& f) {
  require(!f.out.empty(), ErrorCode::kInvalidArgument, "make-toy-corpus: --out is required");
  write_synthetic_corpus(f.out, f.clips, f.seed, f.seconds);
  std::cout << "wrote " << f.clips << " synthetic clips to " << f.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melfill: fill trailing gaps in speech through mel-spectrogram in-painting"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "Run config JSON; flags override its values");
  app.add_option("--device", f.device, "cpu | gpu")->check(CLI::IsMember({"cpu", "gpu"}));

  auto* prepare = app.add_subcommand("prepare", "Ingest, split, compute stats and cache mels");
  prepare->add_option("--root", f.root, "LJSpeech-layout corpus root (default $MELFILL_CORPUS)");
  prepare->add_option("--seed", f.seed, "Split seed");
  prepare->add_option("--subset", f.subset, "Subset size");
  prepare->add_option("--train", f.n_train, "Training clips in the subset");
  prepare->add_option("--out", f.out, "Output directory");

  auto* train = app.add_subcommand("train", "Adversarial training");
  train->add_option("--prepared", f.prepared, "Directory written by prepare");
  train->add_option("--variant", f.variant, "unet_256x128 | unet_256x80 | unet_128x128 | gmcnn_256x128");
  train->add_option("--base-channels", f.base_channels, "Generator width");
  train->add_option("--discriminator-base", f.discriminator_base, "Discriminator width");
  auto* gap_opt = train->add_option("--gap-packets", f.gap_packets, "Fixed gap size (0..8 packets)");
  train->add_flag("--variative", f.variative, "Draw 1..8 packets per pair and epoch")->excludes(gap_opt);
  train->add_option("--epochs", f.epochs);
  train->add_option("--lr", f.lr);
  train->add_option("--beta1", f.beta1);
  train->add_option("--clip-norm", f.clip_norm, "Global gradient-norm clip; 0 disables");
  train->add_option("--rec-mode", f.rec_mode, "l1 | vgg_feature");
  train->add_option("--lambda-adv", f.lambda_adv);
  train->add_option("--lambda-rec", f.lambda_rec);
  train->add_option("--lambda-chunk", f.lambda_chunk);
  train->add_option("--lambda-l1", f.lambda_l1, "Residual L1 weight in vgg_feature mode");
  train->add_option("--seed", f.seed);
  train->add_option("--extractor", f.extractor, "test-double | vgg19:<weights>");
  train->add_option("--limit", f.limit, "Use only the first N training clips");
  train->add_option("--out-dir", f.out, "Run directory");
  train->add_flag("--resume", f.resume, "Continue from the newest checkpoint in --out-dir");

  auto* infer = app.add_subcommand("infer", "Fill the trailing gap of one wav");
  infer->add_option("--wav", f.wav)->required();
  infer->add_option("--packets", f.gap_packets, "Gap size in 40 ms packets");
  infer->add_option("--checkpoint", f.checkpoint)->required();
  infer->add_option("--vocoder", f.vocoder, "griffin-lim | neural:<checkpoint>");
  infer->add_option("--stats", f.stats, "stats.json (default <prepared>/stats.json)");
  infer->add_option("--out", f.out, "Output directory");

  auto* evaluate = app.add_subcommand("evaluate", "Gap-size sweep and metrics");
  evaluate->add_option("--checkpoint", f.checkpoint)->required();
  evaluate->add_option("--prepared", f.prepared);
  evaluate->add_option("--root", f.root, "Corpus root, for PESQ reference audio");
  evaluate->add_option("--split", f.split, "test | train");
  evaluate->add_option("--packets", f.packets, "all | 0..8");
  evaluate->add_option("--vocoder", f.vocoder);
  evaluate->add_option("--pesq", f.pesq, "on | off");
  evaluate->add_option("--extractor", f.extractor);
  evaluate->add_option("--limit", f.limit, "Evaluate only the first N clips");
  evaluate->add_option("--k", f.k, "Best/worst listing size");
  evaluate->add_flag("--allow-beyond-training", f.allow_beyond_training,
                     "Sweep gaps larger than the model was trained on");
  evaluate->add_option("--out", f.out);

  auto* bench = app.add_subcommand("bench", "In-paint and vocode latency");
  bench->add_option("--checkpoint", f.checkpoint);
  bench->add_flag("--identity", f.identity, "Use a pass-through in-painter");
  bench->add_option("--vocoder", f.vocoder);
  bench->add_option("--stats", f.stats);
  bench->add_option("--runs", f.runs);
  bench->add_option("--out", f.out);

  auto* toy = app.add_subcommand("make-toy-corpus", "Write a synthetic LJSpeech-layout corpus");
  toy->add_option("--out", f.out)->required();
  toy->add_option("--clips", f.clips);
  toy->add_option("--seconds", f.seconds);
  toy->add_option("--seed", f.seed);

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (prepare->parsed()) return run_prepare(prepare, f);
    if (train->parsed()) return run_train(train, f);
    if (infer->parsed()) return run_infer(infer, f);
    if (evaluate->parsed()) return run_evaluate(evaluate, f);
    if (bench->parsed()) return run_bench(bench, f);
    if (toy->parsed()) return run_make_toy_corpus(f);
  } catch (const Error& e) {
    std::cerr << "melfill: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "melfill: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
