#include "melfill/masking.hpp"

#include <cmath>

#include "melfill/error.hpp"
#include "melfill/random.hpp"

namespace melfill {

int packets_to_frames(int packets, const MelConfig& config) {
  require(packets >= 0 && packets <= kMaxPackets, ErrorCode::kInvalidArgument,
          "packets_to_frames: " + std::to_string(packets) +
              " packets outside [0, " + std::to_string(kMaxPackets) + "]");
  // 40 ms at 22,050 Hz is exactly 882 samples.
  const double samples = packets * kPacketMs * config.sample_rate / 1000.0;
  return static_cast<int>(std::lround(samples / config.hop));
}

GapSpec make_gap_spec(int packets, int total_frames, const MelConfig& config) {
  GapSpec gap;
  gap.packets = packets;
  gap.frame_len = packets_to_frames(packets, config);
  require(gap.frame_len <= total_frames, ErrorCode::kInvalidArgument,
          "make_gap_spec: gap of " + std::to_string(gap.frame_len) +
              " frames exceeds " + std::to_string(total_frames));
  gap.frame_start = total_frames - gap.frame_len;
  return gap;
}

GapSpec make_gap_spec(const GapMode& mode, std::mt19937_64& rng,
                      int total_frames, const MelConfig& config) {
  if (const auto* fixed = std::get_if<FixedGap>(&mode)) {
    return make_gap_spec(fixed->packets, total_frames, config);
  }
  const auto& range = std::get<VariativeGap>(mode);
  require(range.min_packets >= 0 && range.min_packets <= range.max_packets,
          ErrorCode::kInvalidArgument, "make_gap_spec: empty packet range");
  const auto span = static_cast<std::uint64_t>(range.max_packets - range.min_packets + 1);
  const int packets = range.min_packets + static_cast<int>(uniform_below(rng, span));
  return make_gap_spec(packets, total_frames, config);
}

MelSpectrogram apply_gap(const MelSpectrogram& mel, const GapSpec& gap) {
  require(mel.state == MelState::kNormalized, ErrorCode::kStateMismatch,
          "apply_gap: expected normalized input, got " +
              std::string(to_string(mel.state)));
  require(gap.frame_len >= 0 && gap.frame_start >= 0 &&
              gap.frame_end() == mel.frames,
          ErrorCode::kInvalidArgument,
          "apply_gap: gap [" + std::to_string(gap.frame_start) + "," +
              std::to_string(gap.frame_end()) + ") is not flush with " +
              std::to_string(mel.frames) + " frames");
  MelSpectrogram out = mel;
  for (int r = 0; r < out.n_mels; ++r) {
    for (int t = gap.frame_start; t < gap.frame_end(); ++t) out.at(r, t) = gap.fill_value;
  }
  return out;
}

}  // namespace melfill
