#pragma once

#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "melfill/dsp.hpp"
#include "melfill/losses.hpp"
#include "melfill/masking.hpp"
#include "melfill/models.hpp"
#include "melfill/vocoder.hpp"

namespace melfill {

struct ImageMetrics {
  double l1 = 0.0;
  double mse = 0.0;
};

ImageMetrics image_metrics(const MelSpectrogram& generated, const MelSpectrogram& target);

/// Mean absolute error over the gap columns only; 0 for an empty gap.
double gap_l1(const MelSpectrogram& generated, const MelSpectrogram& target, const GapSpec& gap);

/// Feature-space MSE of normalized spectrograms, padded to `height` rows with
/// -1 before feature extraction. Same definition as vgg_feature_loss.
double feature_metric(const FeatureExtractor& extractor, const MelSpectrogram& generated,
                      const MelSpectrogram& target, int height = 128);

/// Fills the gap by repeating the column just before it.
MelSpectrogram hold_last_frame_baseline(const MelSpectrogram& masked, const GapSpec& gap);

struct SampleResult {
  std::string clip_id;
  int packets = 0;
  double l1 = 0.0;
  double pixel_mse = 0.0;
  double vgg_mse = 0.0;
  double gap_l1 = 0.0;
  std::optional<double> mos;
  std::string image_path;
};

struct AggregateRow {
  int packets = 0;
  std::size_t n = 0;
  double l1 = 0.0;
  double pixel_mse = 0.0;
  double vgg_mse = 0.0;
  double gap_l1 = 0.0;
  std::optional<double> mos;  // mean over samples that have one
  std::size_t n_mos = 0;
};

struct LatencySummary {
  int n_runs = 0;
  double inpaint_median_ms = 0.0;
  double inpaint_p95_ms = 0.0;
  double vocode_median_ms = 0.0;
  double vocode_p95_ms = 0.0;
  double total_median_ms = 0.0;
  double total_p95_ms = 0.0;
  std::string hardware;
};

struct EvalReport {
  std::vector<SampleResult> per_sample;
  std::vector<AggregateRow> aggregates;  // one row per packet count, ascending
  std::optional<LatencySummary> latency;
  std::size_t errors = 0;
  std::vector<std::string> error_messages;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

std::vector<AggregateRow> aggregate(const std::vector<SampleResult>& samples);

/// Paper-style tables (per gap size; summary) as Markdown.
std::string render_tables(const EvalReport& report);

/// A held-out clip: normalized fixed-length mel plus, for MOS, the audio span
/// the mel was analysed from.
struct TestClip {
  std::string clip_id;
  MelSpectrogram target;
  std::optional<AudioClip> reference;
};

struct SweepOptions {
  std::vector<int> packets{1, 2, 3, 4, 5, 6, 7, 8};
  /// Largest gap the model was trained on. Sweeping past it is refused
  /// unless `allow_beyond_training` is set.
  int trained_max_packets = kMaxPackets;
  bool allow_beyond_training = false;
  bool pesq = false;
  std::filesystem::path image_dir;  // empty: no PNGs
  NormStats stats;                  // required when pesq is on
};

/// mask -> in-paint -> splice; and with PESQ on: denormalize -> vocode ->
/// splice into the reference audio -> score. Per-sample failures are counted
/// and the remaining samples still reported.
EvalReport evaluate_gap_sweep(Generator& model, const std::vector<TestClip>& clips,
                              const FeatureExtractor& extractor, const VocoderBackend* vocoder,
                              const SweepOptions& options);

struct ExtremeListing {
  std::vector<SampleResult> best_by_mos, worst_by_mos;
  std::vector<SampleResult> best_by_vgg, worst_by_vgg;

  nlohmann::json to_json() const;
};

ExtremeListing best_worst_report(const EvalReport& report, std::size_t k);

using Inpainter = std::function<MelSpectrogram(const MelSpectrogram& masked, const GapSpec& gap)>;
Inpainter model_inpainter(Generator& model);

/// Wall-clock medians and 95th percentiles over `n_runs` fixed-size inputs,
/// single-threaded, after one warm-up run.
LatencySummary bench_latency(const Inpainter& inpaint, const VocoderBackend& vocoder,
                             const NormStats& stats, int n_runs, int frames = kStandardFrames,
                             int packets = 6);

/// "cpu: <model name> (<n> threads)".
std::string hardware_descriptor();

}  // namespace melfill
