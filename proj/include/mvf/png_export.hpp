#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mvf/volume.hpp"

namespace mvf::png {

/// One row per volume, columns are the central XY, XZ and YZ slices.
/// Values are mapped with clamp(v, 0, 1) * 255, so inputs should already
/// share one normalization.
void write_slice_panel(const std::filesystem::path& path, const std::vector<std::pair<std::string, Volume>>& rows);

void write_gray(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<unsigned char>& pixels);

}  // namespace mvf::png
