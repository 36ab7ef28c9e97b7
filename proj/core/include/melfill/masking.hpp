#pragma once

#include <random>
#include <variant>

#include "melfill/dsp.hpp"

namespace melfill {

inline constexpr int kMaxPackets = 8;
inline constexpr double kPacketMs = 40.0;

/// Trailing gap in a spectrogram of `total_frames` columns.
struct GapSpec {
  int packets = 0;
  int frame_start = kStandardFrames;
  int frame_len = 0;
  float fill_value = -1.0f;

  int frame_end() const { return frame_start + frame_len; }
  bool operator==(const GapSpec&) const = default;
};

/// round(packets * 40 ms * sample_rate / hop), rounded once on the total.
int packets_to_frames(int packets, const MelConfig& config = {});

struct FixedGap {
  int packets = 6;
};
struct VariativeGap {
  int min_packets = 1;
  int max_packets = kMaxPackets;
};
using GapMode = std::variant<FixedGap, VariativeGap>;

GapSpec make_gap_spec(int packets, int total_frames = kStandardFrames,
                      const MelConfig& config = {});
/// Fixed mode ignores the generator; variative mode draws packets uniformly.
GapSpec make_gap_spec(const GapMode& mode, std::mt19937_64& rng,
                      int total_frames = kStandardFrames,
                      const MelConfig& config = {});

/// Returns a copy with the gap columns set to the fill value.
MelSpectrogram apply_gap(const MelSpectrogram& mel, const GapSpec& gap);

}  // namespace melfill
