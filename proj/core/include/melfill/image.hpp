#pragma once

#include <filesystem>
#include <vector>

#include "melfill/dsp.hpp"

namespace melfill {

/// Renders spectrogram panels stacked top to bottom into an 8-bit RGB PNG,
/// low frequencies at the bottom of each panel. Normalized panels map [-1, 1]
/// onto the palette; log-mel panels use their own value range.
void write_spectrogram_png(const std::filesystem::path& path,
                           const std::vector<const MelSpectrogram*>& panels, int scale = 2);

}  // namespace melfill
