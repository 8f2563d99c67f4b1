#include "mvf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvf/error.hpp"
#include "mvf/io.hpp"

namespace mvf::metrics {

namespace fs = std::filesystem;

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error("percentile of empty set");
  if (p < 0.0 || p > 100.0) throw ConfigError("percentile must be within [0, 100]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double pos = p / 100.0 * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return s[lo] + t * (s[hi] - s[lo]);
}

Volume percentile_normalize(const Volume& v, double p_low, double p_high) {
  if (!(p_low >= 0.0 && p_low < p_high && p_high <= 100.0))
    throw ConfigError("percentile_normalize: need 0 <= p_low < p_high <= 100");
  std::vector<double> s(v.data().begin(), v.data().end());
  std::sort(s.begin(), s.end());
  auto at = [&](double p) {
    const double pos = p / 100.0 * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  const double lo = at(p_low), hi = at(p_high);
  if (!(hi > lo)) throw Error("degenerate normalization: P(p_high) == P(p_low)");
  Volume out(v.dims());
  const double scale = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / scale;
  return out;
}

Mask foreground_mask(const Volume& gt_normalized) {
  Mask m(gt_normalized.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = gt_normalized[i] > 0.0 ? 1 : 0;
  return m;
}

std::size_t mask_count(const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)); }

namespace {

void check_pair(const Volume& a, const Volume& b, const Mask* mask) {
  if (a.dims() != b.dims()) throw Error("metrics: dims mismatch");
  if (mask) {
    if (mask->size() != a.size()) throw Error("metrics: mask size mismatch");
    if (mask_count(*mask) == 0) throw Error("metrics: empty mask");
  }
}

bool use(const Mask* mask, std::size_t i) { return !mask || (*mask)[i]; }

std::pair<double, double> gt_range(const Volume& gt, const Mask* mask) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (use(mask, i)) {
      lo = std::min(lo, gt[i]);
      hi = std::max(hi, gt[i]);
    }
  return {lo, hi};
}

// Normalized 1D Gaussian taps over [-radius, radius].
std::vector<double> gaussian_taps(double sigma, int radius) {
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) w[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2 * sigma * sigma));
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  return w;
}

// Separable Gaussian filter with replicate padding.
Volume gaussian_filter(const Volume& v, const std::vector<double>& taps) {
  const Dims& d = v.dims();
  const int r = static_cast<int>(taps.size() / 2);
  Volume cur = v, next(d);
  for (int axis = 0; axis < 3; ++axis) {
    const long n = static_cast<long>(d[axis]);
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
    const long nz = static_cast<long>(d.nz);
#pragma omp parallel for schedule(static)
    for (long z = 0; z < nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) {
          const std::size_t idx = cur.index(x, y, static_cast<std::size_t>(z));
          const long pos = axis == 0 ? static_cast<long>(x) : axis == 1 ? static_cast<long>(y) : z;
          const std::size_t base = idx - static_cast<std::size_t>(pos) * stride;
          double acc = 0.0;
          for (int k = -r; k <= r; ++k) {
            const long q = std::clamp(pos + k, 0L, n - 1);
            acc += taps[static_cast<std::size_t>(k + r)] * cur[base + static_cast<std::size_t>(q) * stride];
          }
          next[idx] = acc;
        }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

double rmse(const Volume& result, const Volume& gt, const Mask* mask) {
  check_pair(result, gt, mask);
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (use(mask, i)) {
      const double e = result[i] - gt[i];
      se += e * e;
      ++n;
    }
  return std::sqrt(se / static_cast<double>(n));
}

double nrmse(const Volume& result, const Volume& gt, const Mask* mask) {
  const double e = rmse(result, gt, mask);
  const auto [lo, hi] = gt_range(gt, mask);
  if (!(hi > lo)) throw Error("nrmse: ground truth has zero range");
  return e / (hi - lo);
}

double psnr(const Volume& result, const Volume& gt, const Mask* mask) {
  const double e = rmse(result, gt, mask);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = gt_range(gt, mask).second;
  return 20.0 * std::log10(peak / e);
}

double cc(const Volume& result, const Volume& gt, const Mask* mask) {
  check_pair(result, gt, mask);
  double ma = 0.0, mb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (use(mask, i)) {
      ma += result[i];
      mb += gt[i];
      ++n;
    }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (use(mask, i)) {
      const double a = result[i] - ma, b = gt[i] - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
  if (saa == 0.0 || sbb == 0.0) throw Error("cc: zero-variance input");
  return sab / std::sqrt(saa * sbb);
}

Volume ssim_map(const Volume& a, const Volume& b, double dynamic_range, const SsimParams& params) {
  if (a.dims() != b.dims()) throw Error("ssim: dims mismatch");
  const auto taps = gaussian_taps(params.sigma, params.radius);
  const std::size_t n = a.size();
  Volume aa(a.dims()), bb(a.dims()), ab(a.dims());
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Volume mu_a = gaussian_filter(a, taps), mu_b = gaussian_filter(b, taps);
  const Volume e_aa = gaussian_filter(aa, taps), e_bb = gaussian_filter(bb, taps), e_ab = gaussian_filter(ab, taps);
  const double c1 = (params.k1 * dynamic_range) * (params.k1 * dynamic_range);
  const double c2 = (params.k2 * dynamic_range) * (params.k2 * dynamic_range);
  Volume map(a.dims());
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    map[i] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return map;
}

double ssim(const Volume& result, const Volume& gt, const Mask* mask, const SsimParams& params) {
  check_pair(result, gt, mask);
  double range = 0.0;
  if (params.dynamic_range) {
    range = *params.dynamic_range;
  } else {
    const auto [lo, hi] = gt_range(gt, mask);
    range = hi - lo;
  }
  const Volume map = ssim_map(result, gt, range, params);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (use(mask, i)) {
      s += map[i];
      ++n;
    }
  return s / static_cast<double>(n);
}

MetricReport evaluate_pair(const Volume& result, const Volume& gt, double p_low, double p_high) {
  const Volume g = percentile_normalize(gt, p_low, p_high);
  const Volume r = percentile_normalize(result, p_low, p_high);
  const Mask fg = foreground_mask(g);
  MetricReport m;
  m.p_low = p_low;
  m.p_high = p_high;
  m.total_count = g.size();
  m.foreground_count = mask_count(fg);
  m.nrmse = {nrmse(r, g), nrmse(r, g, &fg)};
  m.psnr_db = {psnr(r, g), psnr(r, g, &fg)};
  m.ssim = {ssim(r, g), ssim(r, g, &fg)};
  m.cc = {cc(r, g), cc(r, g, &fg)};
  return m;
}

Evaluation evaluate_run(const fs::path& results_dir, const sim::DatasetManifest& manifest, const EvalOptions& options) {
  Evaluation ev;
  ev.options = options;
  std::vector<std::string> methods;
  if (options.include_raw) methods.push_back("raw");
  if (fs::is_directory(results_dir)) {
    std::vector<std::string> found;
    for (const auto& entry : fs::directory_iterator(results_dir))
      if (entry.is_directory()) found.push_back(entry.path().filename().string());
    std::sort(found.begin(), found.end());
    for (const auto& f : found)
      if (std::find(methods.begin(), methods.end(), f) == methods.end()) methods.push_back(f);
  } else {
    ev.warnings.push_back("results directory " + results_dir.string() + " does not exist");
  }
  if (options.include_gt) methods.push_back("gt");

  for (const auto& id : manifest.split_ids(options.split)) {
    Volume gt;
    try {
      gt = manifest.load_ground_truth(id);
    } catch (const IoError& e) {
      ev.warnings.push_back(std::string("sample ") + id + ": " + e.what());
      continue;
    }
    for (const auto& method : methods) {
      fs::path path;
      if (method == "gt") path = manifest.sample(id).gt;
      else if (method == "raw" && !fs::exists(results_dir / "raw" / (id + ".mvv"))) path = manifest.sample(id).views.at(0);
      else path = results_dir / method / (id + ".mvv");
      if (!fs::exists(path)) {
        ev.warnings.push_back("missing result " + path.string());
        continue;
      }
      try {
        const Volume r = io::read_volume(path);
        ev.rows.push_back({id, method, evaluate_pair(r, gt, options.p_low, options.p_high)});
      } catch (const Error& e) {
        ev.warnings.push_back(method + "/" + id + ": " + e.what());
      }
    }
  }
  if (ev.rows.empty()) throw Error("evaluate: no sample could be evaluated");

  for (const auto& method : methods) {
    MetricReport sum;
    std::size_t n = 0;
    for (const auto& row : ev.rows) {
      if (row.method != method) continue;
      auto add = [](MetricPair& a, const MetricPair& b) {
        a.all += b.all;
        a.fg += b.fg;
      };
      add(sum.nrmse, row.report.nrmse);
      add(sum.psnr_db, row.report.psnr_db);
      add(sum.ssim, row.report.ssim);
      add(sum.cc, row.report.cc);
      sum.foreground_count += row.report.foreground_count;
      sum.total_count += row.report.total_count;
      ++n;
    }
    if (n == 0) continue;
    const double k = static_cast<double>(n);
    for (MetricPair* p : {&sum.nrmse, &sum.psnr_db, &sum.ssim, &sum.cc}) {
      p->all /= k;
      p->fg /= k;
    }
    sum.p_low = options.p_low;
    sum.p_high = options.p_high;
    ev.mean[method] = sum;
  }
  return ev;
}

namespace {

std::string fmt_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class F>
void for_each_metric(const MetricReport& r, F&& f) {
  f("nrmse", r.nrmse);
  f("psnr", r.psnr_db);
  f("ssim", r.ssim);
  f("cc", r.cc);
}

}  // namespace

std::string to_csv(const Evaluation& e) {
  std::string out = "sample_id,method,metric,scope,value\n";
  auto emit = [&](const std::string& id, const std::string& method, const MetricReport& r) {
    for_each_metric(r, [&](const char* name, const MetricPair& p) {
      out += id + "," + method + "," + name + ",all," + fmt_value(p.all) + "\n";
      out += id + "," + method + "," + name + ",fg," + fmt_value(p.fg) + "\n";
    });
  };
  for (const auto& row : e.rows) emit(row.sample_id, row.method, row.report);
  for (const auto& [method, r] : e.mean) emit("mean", method, r);
  return out;
}

json to_json(const Evaluation& e) {
  auto value = [](double v) -> json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  auto report = [&](const MetricReport& r) {
    json j;
    for_each_metric(r, [&](const char* name, const MetricPair& p) { j[name] = {{"all", value(p.all)}, {"fg", value(p.fg)}}; });
    j["foreground_count"] = r.foreground_count;
    j["total_count"] = r.total_count;
    return j;
  };
  json j;
  j["config"] = {{"p_low", e.options.p_low},
                 {"p_high", e.options.p_high},
                 {"split", e.options.split},
                 {"include_gt", e.options.include_gt},
                 {"include_raw", e.options.include_raw}};
  j["rows"] = json::array();
  for (const auto& row : e.rows) j["rows"].push_back({{"sample_id", row.sample_id}, {"method", row.method}, {"metrics", report(row.report)}});
  j["mean"] = json::object();
  for (const auto& [method, r] : e.mean) j["mean"][method] = report(r);
  j["warnings"] = e.warnings;
  return j;
}

}  // namespace mvf::metrics
