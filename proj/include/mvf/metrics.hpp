#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/phantom.hpp"
#include "mvf/volume.hpp"

namespace mvf::metrics {

using json = nlohmann::json;
using Mask = std::vector<std::uint8_t>;

/// Percentile with linear interpolation between order statistics
/// (position p/100 * (n-1) in the sorted values).
double percentile(std::span<const double> values, double p);

/// (v - P(p_low)) / (P(p_high) - P(p_low)), not clipped.
Volume percentile_normalize(const Volume& v, double p_low, double p_high);

/// True where the normalized ground truth is > 0.
Mask foreground_mask(const Volume& gt_normalized);
std::size_t mask_count(const Mask& m);

// All metrics evaluate over every voxel, or only the masked ones when a
// mask is given. Range and peak come from the ground truth over the
// evaluated voxels.
double rmse(const Volume& result, const Volume& gt, const Mask* mask = nullptr);
double nrmse(const Volume& result, const Volume& gt, const Mask* mask = nullptr);
/// 20 log10(max(gt) / rmse); +infinity when rmse == 0.
double psnr(const Volume& result, const Volume& gt, const Mask* mask = nullptr);
double cc(const Volume& result, const Volume& gt, const Mask* mask = nullptr);

struct SsimParams {
  double sigma = 1.5;
  int radius = 5;  // 11-tap support
  double k1 = 0.01;
  double k2 = 0.03;
  /// Defaults to max(gt) - min(gt) over the evaluated voxels.
  std::optional<double> dynamic_range;
};

/// Local SSIM map from separable Gaussian window statistics with
/// replicate padding at the borders.
Volume ssim_map(const Volume& a, const Volume& b, double dynamic_range, const SsimParams& params = {});
double ssim(const Volume& result, const Volume& gt, const Mask* mask = nullptr, const SsimParams& params = {});

struct MetricPair {
  double all = 0.0;
  double fg = 0.0;
};

struct MetricReport {
  MetricPair nrmse, psnr_db, ssim, cc;
  std::size_t foreground_count = 0;
  std::size_t total_count = 0;
  double p_low = 0.1;
  double p_high = 99.9;
};

/// Normalizes both volumes with the same percentiles, masks by the
/// normalized ground truth and fills both scopes.
MetricReport evaluate_pair(const Volume& result, const Volume& gt, double p_low, double p_high);

struct EvalOptions {
  double p_low = 0.1;
  double p_high = 99.9;
  std::string split = "test";
  /// Also score the ground truth against itself.
  bool include_gt = false;
  /// Also score view 0 of the dataset as method "raw".
  bool include_raw = true;
};

struct EvalRow {
  std::string sample_id;
  std::string method;
  MetricReport report;
};

struct Evaluation {
  std::vector<EvalRow> rows;
  std::map<std::string, MetricReport> mean;
  std::vector<std::string> warnings;
  EvalOptions options;
};

/// Scores every method directory under results_dir (files <sample_id>.mvv)
/// on the chosen split. Missing files become warnings; throws only when no
/// sample could be evaluated.
Evaluation evaluate_run(const std::filesystem::path& results_dir, const sim::DatasetManifest& manifest,
                        const EvalOptions& options);

/// sample_id,method,metric,scope,value (mean rows use sample_id "mean").
std::string to_csv(const Evaluation& e);
json to_json(const Evaluation& e);

}  // namespace mvf::metrics
