#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "mvf/volume.hpp"

namespace mvf::classical {

using json = nlohmann::json;

struct CbifConfig {
  int window_radius = 4;
  int histogram_bins = 64;
  double epsilon = 1e-6;

  void validate() const;
};

enum class EbmdInit { average_of_views, uniform };

struct EbmdConfig {
  int iterations = 48;
  double tikhonov_lambda = 0.004;
  EbmdInit init = EbmdInit::average_of_views;
  double clamp_floor = 1e-12;
  BoundaryMode boundary = BoundaryMode::circular;

  void validate() const;
};

/// Per-voxel Shannon entropy (natural log) of the intensity histogram inside
/// a (2r+1)^3 window. Bins are equal-width over the volume's global
/// [min, max]; voxels outside the volume count as intensity 0. Computed with
/// one separable box sum per occupied bin, parallel over slices; matches
/// kernels::local_entropy_serial bit for bit.
Volume local_entropy(const Volume& v, const CbifConfig& cfg);

/// out = sum_v (w_v + eps) x_v / sum_v (w_v + eps), w_v = local_entropy(x_v).
Volume cbif_fuse(const ViewSet& views, const CbifConfig& cfg);

struct EbmdProgress {
  int iteration = 0;
  /// ||psi * h_v - x_v||_1 for each view, measured just before its update.
  std::vector<double> residual_l1;
};
using ProgressSink = std::function<void(const EbmdProgress&)>;

/// Multi-view Richardson-Lucy with sequential per-view multiplicative updates
/// and a Conchello-style intensity regularizer applied once per sweep:
///
///   for each view v:  psi <- psi * correlate(x_v / max(convolve(psi, h_v), floor), h_v)
///   then, if lambda > 0:  psi <- (sqrt(1 + 2 lambda psi) - 1) / lambda
Volume ebmd_deconvolve(const ViewSet& views, const EbmdConfig& cfg, const ProgressSink& progress = {});

void to_json(json& j, const CbifConfig& c);
void from_json(const json& j, CbifConfig& c);
void to_json(json& j, const EbmdConfig& c);
void from_json(const json& j, EbmdConfig& c);

}  // namespace mvf::classical
