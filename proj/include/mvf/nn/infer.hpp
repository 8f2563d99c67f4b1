#pragma once

#include <array>
#include <filesystem>

#include <json.hpp>

#include "mvf/nn/generator.hpp"

namespace mvf::nn {

struct InferConfig {
  /// Tile extent; zero along an axis means the whole extent.
  Dims tile{0, 0, 0};
  /// Voxels shared by neighbouring tile cores along each axis.
  std::size_t overlap = 0;
  bool clamp_nonnegative = false;
  /// Voxels discarded on each side of a tile; only the core is kept.
  std::array<std::size_t, 3> margin{0, 0, 0};
  /// How tiles reaching past the volume are filled: wrapped or zero.
  BoundaryMode boundary = BoundaryMode::circular;
};

void to_json(nlohmann::json& j, const InferConfig& c);
void from_json(const nlohmann::json& j, InferConfig& c);

/// Smallest admissible tile extent for a generator.
std::size_t min_tile_extent(const GeneratorConfig& cfg);

/// Tile start offsets along one axis covering [0, n).
std::vector<std::size_t> tile_starts(std::size_t n, std::size_t tile, std::size_t overlap);

/// Runs the generator tile by tile, keeps each tile's core and blends
/// overlapping cores with tent weights. Expects views in the channel order
/// used for training.
Volume infer(const Generator& gen, const NetParams& params, const ViewSet& views, const InferConfig& cfg);

/// Tiling a training run recommends for its generator: the training tile
/// and loss margin. Files without the hint give the default config.
InferConfig load_inference_defaults(const std::filesystem::path& generator_path);

}  // namespace mvf::nn
