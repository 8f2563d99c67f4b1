#include "mvf/classical.hpp"

#include <cmath>
#include <string>

#include "mvf/convolution.hpp"
#include "mvf/error.hpp"
#include "mvf/json_config.hpp"
#include "mvf/kernels.hpp"

namespace mvf::classical {

void CbifConfig::validate() const {
  if (window_radius < 1) throw ConfigError("cbif: window_radius must be >= 1");
  if (histogram_bins < 2) throw ConfigError("cbif: histogram_bins must be >= 2");
  if (!(epsilon > 0.0)) throw ConfigError("cbif: epsilon must be > 0");
}

void EbmdConfig::validate() const {
  if (iterations < 1) throw ConfigError("ebmd: iterations must be >= 1");
  if (tikhonov_lambda < 0.0) throw ConfigError("ebmd: tikhonov_lambda must be >= 0");
  if (!(clamp_floor > 0.0)) throw ConfigError("ebmd: clamp_floor must be > 0");
}

namespace {

// Zero-padded running box sum of half-width r along one axis, in place.
void box_pass(std::vector<int>& a, std::vector<int>& scratch, const Dims& d, int axis, int r) {
  const long n = static_cast<long>(d[axis]);
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
  const std::size_t lines = d.size() / static_cast<std::size_t>(n);
  const long nlines = static_cast<long>(lines);
#pragma omp parallel for schedule(static)
  for (long l = 0; l < nlines; ++l) {
    std::size_t base;
    const std::size_t li = static_cast<std::size_t>(l);
    if (axis == 0) base = li * d.nx;
    else if (axis == 1) base = (li / d.nx) * d.nx * d.ny + li % d.nx;
    else base = li;
    int* line = scratch.data() + li * static_cast<std::size_t>(n);
    for (long i = 0; i < n; ++i) line[i] = a[base + static_cast<std::size_t>(i) * stride];
    int acc = 0;
    for (long i = 0; i <= std::min<long>(r, n - 1); ++i) acc += line[i];
    for (long i = 0; i < n; ++i) {
      a[base + static_cast<std::size_t>(i) * stride] = acc;
      if (i + r + 1 < n) acc += line[i + r + 1];
      if (i - r >= 0) acc -= line[i - r];
    }
  }
}

long inside_count(long i, long n, long r) { return std::min(n - 1, i + r) - std::max(0L, i - r) + 1; }

}  // namespace

Volume local_entropy(const Volume& v, const CbifConfig& cfg) {
  cfg.validate();
  if (!v.all_finite()) throw Error("local_entropy: non-finite input");
  const Dims& d = v.dims();
  Volume out(d);
  const double lo = v.min(), hi = v.max();
  if (!(hi > lo)) return out;
  const int bins = cfg.histogram_bins;
  const int r = cfg.window_radius;
  const int zero_bin = kernels::bin_of(0.0, lo, hi, bins);
  const double window = std::pow(2.0 * r + 1.0, 3.0);
  const long n = static_cast<long>(v.size());

  std::vector<int> bin(v.size());
  std::vector<char> occupied(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    bin[i] = kernels::bin_of(v[i], lo, hi, bins);
    occupied[static_cast<std::size_t>(bin[i])] = 1;
  }

  std::vector<int> outside(v.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const long x = static_cast<long>(ui % d.nx), y = static_cast<long>((ui / d.nx) % d.ny),
               z = static_cast<long>(ui / (d.nx * d.ny));
    const long inside = inside_count(x, static_cast<long>(d.nx), r) * inside_count(y, static_cast<long>(d.ny), r) *
                        inside_count(z, static_cast<long>(d.nz), r);
    outside[ui] = static_cast<int>(static_cast<long>(window) - inside);
  }

  std::vector<int> count(v.size()), scratch(v.size());
  for (int b = 0; b < bins; ++b) {
    if (!occupied[static_cast<std::size_t>(b)] && b != zero_bin) continue;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) count[static_cast<std::size_t>(i)] = bin[static_cast<std::size_t>(i)] == b ? 1 : 0;
    for (int axis = 0; axis < 3; ++axis) box_pass(count, scratch, d, axis, r);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const int c = count[ui] + (b == zero_bin ? outside[ui] : 0);
      if (c > 0) {
        const double p = static_cast<double>(c) / window;
        out[ui] -= p * std::log(p);
      }
    }
  }
  return out;
}

Volume cbif_fuse(const ViewSet& views, const CbifConfig& cfg) {
  views.validate(2);
  cfg.validate();
  const Dims& d = views.dims();
  std::vector<Volume> weights;
  for (const auto& x : views.views) weights.push_back(local_entropy(x, cfg));
  Volume out(d);
  const long n = static_cast<long>(out.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    double num = 0.0, den = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const double w = weights[v][ui] + cfg.epsilon;
      num += w * views.views[v][ui];
      den += w;
    }
    out[ui] = num / den;
  }
  return out;
}

Volume ebmd_deconvolve(const ViewSet& views, const EbmdConfig& cfg, const ProgressSink& progress) {
  views.validate(1);
  cfg.validate();
  // Round-off negatives from an FFT blur are zeroed; anything larger is an error.
  std::vector<Volume> data = views.views;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (!views.psfs[v].normalized()) throw ConfigError("ebmd: psf " + std::to_string(v) + " is not normalized");
    if (!data[v].all_finite()) throw Error("ebmd: views must be finite and non-negative");
    const double tol = 1e-9 * std::max(data[v].max(), 0.0);
    for (double& x : data[v].data()) {
      if (x < -tol) throw Error("ebmd: views must be finite and non-negative");
      x = std::max(x, 0.0);
    }
  }
  const Dims& d = views.dims();
  const long n = static_cast<long>(d.size());
  const std::size_t nv = views.size();

  std::vector<ConvolutionOperator> ops;
  for (const auto& h : views.psfs) ops.emplace_back(h, d, cfg.boundary);

  Volume psi(d);
  for (const auto& x : data)
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += x[i];
  for (double& p : psi.data()) p /= static_cast<double>(nv);
  if (cfg.init == EbmdInit::uniform) {
    const double mean = psi.sum() / static_cast<double>(psi.size());
    for (double& p : psi.data()) p = mean;
  }

  Volume blurred(d), ratio(d), back(d);
  const double lambda = cfg.tikhonov_lambda;
  for (int it = 1; it <= cfg.iterations; ++it) {
    EbmdProgress report{it, std::vector<double>(nv, 0.0)};
    for (std::size_t v = 0; v < nv; ++v) {
      const Volume& x = data[v];
      ops[v].apply(psi.data(), blurred.data());
      double residual = 0.0;
      for (std::size_t i = 0; i < blurred.size(); ++i) residual += std::abs(blurred[i] - x[i]);
      report.residual_l1[v] = residual;
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        ratio[ui] = x[ui] / std::max(blurred[ui], cfg.clamp_floor);
      }
      ops[v].apply_adjoint(ratio.data(), back.data());
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        psi[ui] = std::max(0.0, psi[ui] * back[ui]);
      }
    }
    if (lambda > 0.0) {
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        psi[ui] = (std::sqrt(1.0 + 2.0 * lambda * psi[ui]) - 1.0) / lambda;
      }
    }
    if (!psi.all_finite()) throw Error("ebmd: non-finite estimate at iteration " + std::to_string(it));
    if (progress) progress(report);
  }
  return psi;
}

void to_json(json& j, const CbifConfig& c) {
  j = {{"window_radius", c.window_radius}, {"histogram_bins", c.histogram_bins}, {"epsilon", c.epsilon}};
}

void from_json(const json& j, CbifConfig& c) {
  cfg::reject_unknown(j, {"window_radius", "histogram_bins", "epsilon"}, "cbif");
  cfg::read(j, "window_radius", c.window_radius, "cbif");
  cfg::read(j, "histogram_bins", c.histogram_bins, "cbif");
  cfg::read(j, "epsilon", c.epsilon, "cbif");
}

void to_json(json& j, const EbmdConfig& c) {
  j = {{"iterations", c.iterations},
       {"tikhonov_lambda", c.tikhonov_lambda},
       {"init", c.init == EbmdInit::average_of_views ? "average-of-views" : "uniform"},
       {"clamp_floor", c.clamp_floor},
       {"boundary", to_string(c.boundary)}};
}

void from_json(const json& j, EbmdConfig& c) {
  cfg::reject_unknown(j, {"iterations", "tikhonov_lambda", "init", "clamp_floor", "boundary"}, "ebmd");
  cfg::read(j, "iterations", c.iterations, "ebmd");
  cfg::read(j, "tikhonov_lambda", c.tikhonov_lambda, "ebmd");
  if (j.contains("init")) {
    const std::string s = j["init"].get<std::string>();
    if (s == "average-of-views") c.init = EbmdInit::average_of_views;
    else if (s == "uniform") c.init = EbmdInit::uniform;
    else throw ConfigError("ebmd.init must be average-of-views or uniform");
  }
  cfg::read(j, "clamp_floor", c.clamp_floor, "ebmd");
  if (j.contains("boundary")) c.boundary = parse_boundary(j["boundary"].get<std::string>());
}

}  // namespace mvf::classical
