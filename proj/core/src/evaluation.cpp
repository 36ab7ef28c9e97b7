#include "melfill/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "melfill/error.hpp"
#include "melfill/image.hpp"
#include "melfill/pesq.hpp"

namespace melfill {

namespace {

void require_same(const MelSpectrogram& a, const MelSpectrogram& b, const char* what) {
  require(a.state == b.state, ErrorCode::kStateMismatch,
          std::string(what) + ": normalization states differ");
  require(a.n_mels == b.n_mels && a.frames == b.frames, ErrorCode::kShapeMismatch,
          std::string(what) + ": spectrogram sizes differ");
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

nlohmann::json sample_json(const SampleResult& s) {
  nlohmann::json j{{"clip_id", s.clip_id}, {"packets", s.packets},   {"l1", s.l1},
                   {"pixel_mse", s.pixel_mse}, {"vgg_mse", s.vgg_mse}, {"gap_l1", s.gap_l1}};
  j["mos"] = s.mos ? nlohmann::json(*s.mos) : nlohmann::json(nullptr);
  if (!s.image_path.empty()) j["image"] = s.image_path;
  return j;
}

SampleResult sample_from_json(const nlohmann::json& j) {
  SampleResult s;
  s.clip_id = j.at("clip_id").get<std::string>();
  s.packets = j.at("packets").get<int>();
  s.l1 = j.at("l1").get<double>();
  s.pixel_mse = j.at("pixel_mse").get<double>();
  s.vgg_mse = j.at("vgg_mse").get<double>();
  s.gap_l1 = j.value("gap_l1", 0.0);
  if (j.contains("mos") && !j.at("mos").is_null()) s.mos = j.at("mos").get<double>();
  s.image_path = j.value("image", std::string());
  return s;
}

// Reference audio covering exactly the samples a `frames`-column mel spans.
AudioClip fit_reference(const AudioClip& ref, int frames, const MelConfig& config) {
  AudioClip out = ref;
  out.samples.resize(static_cast<std::size_t>(frames - 1) * config.hop + config.n_fft, 0.0f);
  return out;
}

}  // namespace

ImageMetrics image_metrics(const MelSpectrogram& generated, const MelSpectrogram& target) {
  require_same(generated, target, "image_metrics");
  ImageMetrics m;
  if (target.values.empty()) return m;
  for (std::size_t i = 0; i < target.values.size(); ++i) {
    const double d = static_cast<double>(generated.values[i]) - target.values[i];
    m.l1 += std::abs(d);
    m.mse += d * d;
  }
  m.l1 /= static_cast<double>(target.values.size());
  m.mse /= static_cast<double>(target.values.size());
  return m;
}

double gap_l1(const MelSpectrogram& generated, const MelSpectrogram& target, const GapSpec& gap) {
  require_same(generated, target, "gap_l1");
  if (gap.frame_len == 0) return 0.0;
  require(gap.frame_start >= 0 && gap.frame_end() <= target.frames, ErrorCode::kInvalidArgument,
          "gap_l1: gap outside spectrogram");
  double acc = 0.0;
  for (int r = 0; r < target.n_mels; ++r)
    for (int t = gap.frame_start; t < gap.frame_end(); ++t)
      acc += std::abs(static_cast<double>(generated.at(r, t)) - target.at(r, t));
  return acc / (static_cast<double>(target.n_mels) * gap.frame_len);
}

double feature_metric(const FeatureExtractor& extractor, const MelSpectrogram& generated,
                      const MelSpectrogram& target, int height) {
  require_same(generated, target, "feature_metric");
  nn::NoGradGuard no_grad;
  const nn::Var g(to_image(generated, height));
  const nn::Var t(to_image(target, height));
  return vgg_feature_loss(extractor, g, t).value().item();
}

MelSpectrogram hold_last_frame_baseline(const MelSpectrogram& masked, const GapSpec& gap) {
  if (gap.frame_len == 0) return masked;
  require(gap.frame_start > 0, ErrorCode::kInvalidArgument,
          "hold_last_frame_baseline: gap starts at frame 0, nothing to hold");
  require(gap.frame_end() <= masked.frames, ErrorCode::kInvalidArgument,
          "hold_last_frame_baseline: gap outside spectrogram");
  MelSpectrogram out = masked;
  for (int r = 0; r < out.n_mels; ++r) {
    const float held = masked.at(r, gap.frame_start - 1);
    for (int t = gap.frame_start; t < gap.frame_end(); ++t) out.at(r, t) = held;
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<SampleResult>& samples) {
  std::map<int, AggregateRow> rows;
  std::map<int, double> mos_sum;
  for (const auto& s : samples) {
    auto& row = rows[s.packets];
    row.packets = s.packets;
    ++row.n;
    row.l1 += s.l1;
    row.pixel_mse += s.pixel_mse;
    row.vgg_mse += s.vgg_mse;
    row.gap_l1 += s.gap_l1;
    if (s.mos) {
      mos_sum[s.packets] += *s.mos;
      ++row.n_mos;
    }
  }
  std::vector<AggregateRow> out;
  for (auto& [packets, row] : rows) {
    const auto n = static_cast<double>(row.n);
    row.l1 /= n;
    row.pixel_mse /= n;
    row.vgg_mse /= n;
    row.gap_l1 /= n;
    if (row.n_mos > 0) row.mos = mos_sum[packets] / static_cast<double>(row.n_mos);
    out.push_back(row);
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["per_sample"] = nlohmann::json::array();
  for (const auto& s : per_sample) j["per_sample"].push_back(sample_json(s));
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : aggregates) {
    j["aggregates"].push_back({{"packets", a.packets},
                               {"n", a.n},
                               {"l1", a.l1},
                               {"pixel_mse", a.pixel_mse},
                               {"vgg_mse", a.vgg_mse},
                               {"gap_l1", a.gap_l1},
                               {"mos", a.mos ? nlohmann::json(*a.mos) : nlohmann::json(nullptr)},
                               {"n_mos", a.n_mos}});
  }
  if (latency) {
    const auto& l = *latency;
    j["latency"] = {{"n_runs", l.n_runs},
                    {"inpaint_ms", {{"median", l.inpaint_median_ms}, {"p95", l.inpaint_p95_ms}}},
                    {"vocode_ms", {{"median", l.vocode_median_ms}, {"p95", l.vocode_p95_ms}}},
                    {"total_ms", {{"median", l.total_median_ms}, {"p95", l.total_p95_ms}}},
                    {"hardware", l.hardware}};
  }
  j["errors"] = errors;
  j["error_messages"] = error_messages;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& s : j.at("per_sample")) r.per_sample.push_back(sample_from_json(s));
  r.aggregates = aggregate(r.per_sample);
  if (j.contains("latency")) {
    const auto& l = j.at("latency");
    LatencySummary s;
    s.n_runs = l.at("n_runs").get<int>();
    s.inpaint_median_ms = l.at("inpaint_ms").at("median").get<double>();
    s.inpaint_p95_ms = l.at("inpaint_ms").at("p95").get<double>();
    s.vocode_median_ms = l.at("vocode_ms").at("median").get<double>();
    s.vocode_p95_ms = l.at("vocode_ms").at("p95").get<double>();
    s.total_median_ms = l.at("total_ms").at("median").get<double>();
    s.total_p95_ms = l.at("total_ms").at("p95").get<double>();
    s.hardware = l.value("hardware", std::string());
    r.latency = s;
  }
  r.errors = j.value("errors", std::size_t{0});
  r.error_messages = j.value("error_messages", std::vector<std::string>{});
  return r;
}

std::string render_tables(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  if (!report.aggregates.empty()) {
    os << "| packets |";
    for (const auto& a : report.aggregates) os << ' ' << a.packets << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < report.aggregates.size(); ++i) os << "---|";
    os << "\n| MOS |";
    for (const auto& a : report.aggregates) {
      if (a.mos) os << ' ' << *a.mos << " |";
      else os << " - |";
    }
    os << "\n| feature MSE |";
    for (const auto& a : report.aggregates) os << ' ' << a.vgg_mse << " |";
    os << "\n| L1 |";
    for (const auto& a : report.aggregates) os << ' ' << a.l1 << " |";
    os << "\n| gap L1 |";
    for (const auto& a : report.aggregates) os << ' ' << a.gap_l1 << " |";
    os << "\n\n";
  }
  if (report.latency) {
    const auto& l = *report.latency;
    os << "| stage | median ms | p95 ms |\n|---|---|---|\n"
       << "| in-paint | " << l.inpaint_median_ms << " | " << l.inpaint_p95_ms << " |\n"
       << "| vocode | " << l.vocode_median_ms << " | " << l.vocode_p95_ms << " |\n"
       << "| total | " << l.total_median_ms << " | " << l.total_p95_ms << " |\n"
       << "\nhardware: " << l.hardware << '\n';
  }
  return os.str();
}

EvalReport evaluate_gap_sweep(Generator& model, const std::vector<TestClip>& clips,
                              const FeatureExtractor& extractor, const VocoderBackend* vocoder,
                              const SweepOptions& options) {
  require(!clips.empty(), ErrorCode::kInvalidArgument, "evaluate: empty test set");
  require(!options.packets.empty(), ErrorCode::kInvalidArgument, "evaluate: no gap sizes");
  const int largest = *std::max_element(options.packets.begin(), options.packets.end());
  require(largest <= options.trained_max_packets || options.allow_beyond_training,
          ErrorCode::kInvalidArgument,
          "evaluate: model was trained on gaps of up to " +
              std::to_string(options.trained_max_packets) + " packets; sweeping to " +
              std::to_string(largest) + " needs an explicit override");
  if (options.pesq) {
    require(vocoder != nullptr, ErrorCode::kInvalidArgument, "evaluate: MOS needs a vocoder");
  }
  if (!options.image_dir.empty()) std::filesystem::create_directories(options.image_dir);

  const int frames = model.config().input_frames;
  const int height = model.config().input_height;
  EvalReport report;
  std::vector<AudioClip> references, degraded;
  std::vector<std::size_t> mos_slots;

  for (int packets : options.packets) {
    const GapSpec gap = make_gap_spec(packets, frames);
    for (const auto& clip : clips) {
      try {
        const MelSpectrogram target = fix_length(clip.target, frames);
        const MelSpectrogram masked = apply_gap(target, gap);
        const MelSpectrogram filled = inpaint(model, masked, gap);
        SampleResult s;
        s.clip_id = clip.clip_id;
        s.packets = packets;
        const ImageMetrics m = image_metrics(filled, target);
        s.l1 = m.l1;
        s.pixel_mse = m.mse;
        s.gap_l1 = gap_l1(filled, target, gap);
        s.vgg_mse = feature_metric(extractor, filled, target, height);
        if (!options.image_dir.empty()) {
          const auto png = options.image_dir / (clip.clip_id + "_p" + std::to_string(packets) + ".png");
          write_spectrogram_png(png, {&target, &masked, &filled});
          s.image_path = png.string();
        }
        if (options.pesq && clip.reference) {
          const AudioClip vocoded = synthesize(*vocoder, denormalize(filled, options.stats));
          const AudioClip ref = fit_reference(*clip.reference, frames, vocoder->mel_config());
          AudioClip padded = vocoded;
          padded.samples.resize(std::max(padded.samples.size(), ref.samples.size()), 0.0f);
          degraded.push_back(splice_audio(ref, padded, gap, vocoder->mel_config()));
          references.push_back(ref);
          mos_slots.push_back(report.per_sample.size());
        }
        report.per_sample.push_back(std::move(s));
      } catch (const Error& e) {
        ++report.errors;
        report.error_messages.push_back(clip.clip_id + " @" + std::to_string(packets) + ": " + e.what());
      }
    }
  }

  if (!mos_slots.empty()) {
    std::vector<std::pair<const AudioClip*, const AudioClip*>> pairs;
    for (std::size_t i = 0; i < mos_slots.size(); ++i) pairs.emplace_back(&references[i], &degraded[i]);
    const auto scores = pesq_mos_batch(pairs);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (std::isfinite(scores[i])) {
        report.per_sample[mos_slots[i]].mos = scores[i];
      } else {
        ++report.errors;
        report.error_messages.push_back(report.per_sample[mos_slots[i]].clip_id + ": pesq failed");
      }
    }
  }
  report.aggregates = aggregate(report.per_sample);
  return report;
}

nlohmann::json ExtremeListing::to_json() const {
  auto list = [](const std::vector<SampleResult>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : v) a.push_back(sample_json(s));
    return a;
  };
  return {{"best_by_mos", list(best_by_mos)},
          {"worst_by_mos", list(worst_by_mos)},
          {"best_by_vgg", list(best_by_vgg)},
          {"worst_by_vgg", list(worst_by_vgg)}};
}

ExtremeListing best_worst_report(const EvalReport& report, std::size_t k) {
  ExtremeListing out;
  std::vector<SampleResult> with_mos;
  for (const auto& s : report.per_sample)
    if (s.mos) with_mos.push_back(s);
  std::stable_sort(with_mos.begin(), with_mos.end(),
                   [](const SampleResult& a, const SampleResult& b) { return *a.mos > *b.mos; });
  std::vector<SampleResult> by_vgg = report.per_sample;
  std::stable_sort(by_vgg.begin(), by_vgg.end(),
                   [](const SampleResult& a, const SampleResult& b) { return a.vgg_mse < b.vgg_mse; });

  const auto take = [k](const std::vector<SampleResult>& v, bool from_front) {
    const std::size_t n = std::min(k, v.size());
    return from_front ? std::vector<SampleResult>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n))
                      : std::vector<SampleResult>(v.rbegin(), v.rbegin() + static_cast<std::ptrdiff_t>(n));
  };
  out.best_by_mos = take(with_mos, true);
  out.worst_by_mos = take(with_mos, false);
  out.best_by_vgg = take(by_vgg, true);
  out.worst_by_vgg = take(by_vgg, false);
  return out;
}

Inpainter model_inpainter(Generator& model) {
  return [&model](const MelSpectrogram& masked, const GapSpec& gap) {
    return inpaint(model, masked, gap);
  };
}

std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return "cpu: " + model + " (" + std::to_string(std::thread::hardware_concurrency()) +
         " threads, benchmark single-threaded)";
}

LatencySummary bench_latency(const Inpainter& inpaint_fn, const VocoderBackend& vocoder,
                             const NormStats& stats, int n_runs, int frames, int packets) {
  require(n_runs >= 3, ErrorCode::kInvalidArgument, "bench: n_runs must be >= 3");
  // Fixed-size input: a smooth ramp, not data dependent.
  MelSpectrogram mel(vocoder.mel_config().n_mels, frames, MelState::kNormalized);
  for (int r = 0; r < mel.n_mels; ++r)
    for (int t = 0; t < frames; ++t)
      mel.at(r, t) = std::sin(0.05f * static_cast<float>(r + t)) * 0.8f;
  const GapSpec gap = make_gap_spec(packets, frames);
  const MelSpectrogram masked = apply_gap(mel, gap);

  std::vector<double> t_inpaint, t_vocode, t_total;
  for (int run = -1; run < n_runs; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    const MelSpectrogram filled = inpaint_fn(masked, gap);
    const double a = elapsed_ms(t0);
    const auto t1 = std::chrono::steady_clock::now();
    const AudioClip audio = synthesize(vocoder, denormalize(filled, stats));
    const double b = elapsed_ms(t1);
    const double total = elapsed_ms(t0);
    if (run < 0 || audio.samples.empty()) continue;  // warm-up
    t_inpaint.push_back(a);
    t_vocode.push_back(b);
    t_total.push_back(total);
  }
  LatencySummary s;
  s.n_runs = n_runs;
  s.inpaint_median_ms = percentile(t_inpaint, 0.5);
  s.inpaint_p95_ms = percentile(t_inpaint, 0.95);
  s.vocode_median_ms = percentile(t_vocode, 0.5);
  s.vocode_p95_ms = percentile(t_vocode, 0.95);
  s.total_median_ms = percentile(t_total, 0.5);
  s.total_p95_ms = percentile(t_total, 0.95);
  s.hardware = hardware_descriptor();
  return s;
}

}  // namespace melfill
