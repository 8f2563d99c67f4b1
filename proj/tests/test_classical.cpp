#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mvf/classical.hpp"
#include "mvf/convolution.hpp"
#include "mvf/error.hpp"
#include "mvf/kernels.hpp"
#include "mvf/phantom.hpp"
#include "oracles.hpp"

using namespace mvf;
using classical::CbifConfig;
using classical::EbmdConfig;

namespace {

Psf gaussian_psf(std::size_t n, double sl, double sa) {
  sim::PsfConfig c;
  c.dims = n;
  c.sigma_lateral = sl;
  c.sigma_axial = sa;
  return sim::synthesize_psf(c);
}

ViewSet single_view(const Volume& x, const Psf& h) {
  ViewSet vs;
  vs.views = {x};
  vs.psfs = {h};
  vs.angles_deg = {0};
  return vs;
}

double poisson_log_likelihood(const Volume& x, const Volume& mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::log(std::max(mu[i], 1e-300)) - mu[i];
  return acc;
}

}  // namespace

TEST_CASE("entropy of constant volume is zero") {
  CbifConfig c;
  c.window_radius = 2;
  c.histogram_bins = 8;
  const Volume e = classical::local_entropy(Volume({6, 5, 4}, 3.5), c);
  CHECK(e.max() == 0.0);
  CHECK(e.min() == 0.0);
}

TEST_CASE("local entropy matches windowed histogram oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const Dims d{8, 8, 8};
    Volume v = oracle::random_volume(d, rng, -0.5, 2.0);
    CbifConfig c;
    c.window_radius = 1 + trial % 2;
    c.histogram_bins = trial < 3 ? 4 : 7;
    const Volume expect = oracle::local_entropy(v, c.window_radius, c.histogram_bins);
    const Volume got = classical::local_entropy(v, c);
    CHECK(max_abs_diff(got, expect) < 1e-12);
    CHECK(got.min() >= 0.0);
    // box-sum and serial kernels agree exactly
    CHECK(got == kernels::local_entropy_serial(v, c.window_radius, c.histogram_bins));
  }
}

TEST_CASE("checkerboard entropy in the interior") {
  const Dims d{9, 9, 9};
  Volume v(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) v(x, y, z) = static_cast<double>((x + y + z) % 2);
  CbifConfig c;
  c.window_radius = 1;
  c.histogram_bins = 2;
  const Volume e = classical::local_entropy(v, c);
  // an odd window holds 14 and 13 voxels of the two levels
  const double p = 14.0 / 27.0, q = 13.0 / 27.0;
  const double expect = -p * std::log(p) - q * std::log(q);
  for (std::size_t z = 1; z + 1 < d.nz; ++z)
    for (std::size_t y = 1; y + 1 < d.ny; ++y)
      for (std::size_t x = 1; x + 1 < d.nx; ++x) CHECK(std::abs(e(x, y, z) - expect) < 1e-9);
  CHECK(std::abs(expect - std::log(2.0)) < 2e-3);
}

TEST_CASE("cbif of identical views reproduces the view") {
  std::mt19937_64 rng(3);
  const Volume a = oracle::random_volume({7, 6, 5}, rng);
  ViewSet vs;
  vs.views = {a, a, a};
  vs.psfs = {Psf::delta(), Psf::delta(), Psf::delta()};
  vs.angles_deg = {0, 90, 180};
  const Volume f = classical::cbif_fuse(vs, CbifConfig{1, 4, 1e-6});
  CHECK(max_abs_diff(f, a) < 1e-12);
}

TEST_CASE("cbif matches weighted-average oracle and stays in the hull") {
  std::mt19937_64 rng(5);
  const Dims d{8, 8, 8};
  ViewSet vs;
  vs.views = {oracle::random_volume(d, rng), oracle::random_volume(d, rng, 0.2, 3.0)};
  vs.psfs = {Psf::delta(), Psf::delta()};
  vs.angles_deg = {0, 180};
  const CbifConfig c{1, 4, 1e-3};
  const Volume f = classical::cbif_fuse(vs, c);
  const Volume wa = oracle::local_entropy(vs.views[0], 1, 4);
  const Volume wb = oracle::local_entropy(vs.views[1], 1, 4);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double num = (wa[i] + c.epsilon) * vs.views[0][i] + (wb[i] + c.epsilon) * vs.views[1][i];
    const double den = wa[i] + wb[i] + 2 * c.epsilon;
    CHECK(std::abs(f[i] - num / den) < 1e-12);
    const double lo = std::min(vs.views[0][i], vs.views[1][i]), hi = std::max(vs.views[0][i], vs.views[1][i]);
    CHECK(f[i] >= lo - 1e-12);
    CHECK(f[i] <= hi + 1e-12);
  }
}

TEST_CASE("cbif favours the structured view") {
  std::mt19937_64 rng(8);
  const Dims d{8, 8, 8};
  const Volume b = oracle::random_volume(d, rng);
  ViewSet vs;
  vs.views = {Volume(d, 0.5), b};
  vs.psfs = {Psf::delta(), Psf::delta()};
  vs.angles_deg = {0, 180};
  const CbifConfig c{1, 8, 1e-4};
  const Volume f = classical::cbif_fuse(vs, c);
  const Volume wb = classical::local_entropy(b, c);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (wb[i] < 10 * c.epsilon) continue;
    // weight ratio (wb + eps) / eps >= 10 bounds the pull towards view A
    const double ratio = (wb[i] + c.epsilon) / c.epsilon;
    CHECK(ratio >= 10.0);
    CHECK(std::abs(f[i] - b[i]) <= std::abs(0.5 - b[i]) / (1.0 + ratio) + 1e-12);
  }
}

TEST_CASE("cbif errors") {
  ViewSet vs;
  vs.views = {Volume({4, 4, 4}), Volume({4, 4, 5})};
  vs.psfs = {Psf::delta(), Psf::delta()};
  vs.angles_deg = {0, 180};
  CHECK_THROWS_AS(classical::cbif_fuse(vs, {}), ConfigError);
  CHECK_THROWS_AS(CbifConfig({0, 4, 1e-6}).validate(), ConfigError);
  CHECK_THROWS_AS(CbifConfig({1, 1, 1e-6}).validate(), ConfigError);
  CHECK_THROWS_AS(CbifConfig({1, 4, 0.0}).validate(), ConfigError);
}

TEST_CASE("ebmd with delta psf is exact after one sweep") {
  std::mt19937_64 rng(21);
  const Volume x = oracle::random_volume({9, 8, 7}, rng);
  EbmdConfig c;
  c.iterations = 1;
  c.tikhonov_lambda = 0.0;
  SUBCASE("single view") {
    CHECK(max_abs_diff(classical::ebmd_deconvolve(single_view(x, Psf::delta(3)), c), x) <= 1e-10);
  }
  SUBCASE("two equal views, uniform init") {
    ViewSet vs;
    vs.views = {x, x};
    vs.psfs = {Psf::delta(), Psf::delta(3)};
    vs.angles_deg = {0, 180};
    c.init = classical::EbmdInit::uniform;
    CHECK(max_abs_diff(classical::ebmd_deconvolve(vs, c), x) <= 1e-10);
  }
}

TEST_CASE("ebmd conserves flux for a single circular view") {
  std::mt19937_64 rng(4);
  const Volume z = oracle::random_volume({12, 12, 12}, rng);
  const Psf h = gaussian_psf(5, 1.0, 1.5);
  const Volume x = convolve(z, h, BoundaryMode::circular);
  EbmdConfig c;
  c.iterations = 48;
  c.tikhonov_lambda = 0.0;
  c.boundary = BoundaryMode::circular;
  const double total = x.sum();
  int seen = 0;
  double worst = 0.0;
  // progress is reported before each sweep, so re-run with growing counts
  for (int it : {1, 2, 5, 17, 48}) {
    c.iterations = it;
    const Volume psi = classical::ebmd_deconvolve(single_view(x, h), c);
    worst = std::max(worst, std::abs(psi.sum() - total) / total);
    CHECK(psi.min() >= 0.0);
    ++seen;
  }
  CHECK(seen == 5);
  CHECK(worst < 1e-5);
}

TEST_CASE("ebmd likelihood is non-decreasing on noiseless input") {
  std::mt19937_64 rng(9);
  const Volume z = oracle::random_volume({8, 8, 8}, rng, 0.1, 1.0);
  const Psf h = gaussian_psf(5, 0.8, 1.2);
  const Volume x = convolve(z, h, BoundaryMode::circular);
  EbmdConfig c;
  c.tikhonov_lambda = 0.0;
  double prev = -1e300;
  for (int it = 1; it <= 10; ++it) {
    c.iterations = it;
    const Volume psi = classical::ebmd_deconvolve(single_view(x, h), c);
    const double ll = poisson_log_likelihood(x, convolve(psi, h, BoundaryMode::circular));
    CHECK(ll >= prev - 1e-9 * std::abs(ll));
    prev = ll;
  }
}

TEST_CASE("ebmd improves psnr on a quad-view phantom") {
  sim::PhantomConfig pc;
  pc.dims = {16, 16, 16};
  pc.n_objects = 6;
  pc.radius_min = 1.5;
  pc.radius_max = 2.5;
  pc.seed = 5;
  const Volume gt = sim::generate_phantom(pc).volume;
  sim::PsfConfig psc;
  psc.dims = 9;
  psc.sigma_lateral = 0.8;
  psc.sigma_axial = 2.0;
  const Psf base = sim::synthesize_psf(psc);
  ViewSet vs;
  vs.psfs = sim::view_psfs(base, 4);
  vs.angles_deg = {0, 90, 180, 270};
  for (const auto& h : vs.psfs) vs.views.push_back(convolve(gt, h, BoundaryMode::circular));
  EbmdConfig c;  // 48 sweeps, lambda 0.004
  std::vector<classical::EbmdProgress> log;
  const Volume psi = classical::ebmd_deconvolve(vs, c, [&](const classical::EbmdProgress& p) { log.push_back(p); });
  CHECK(oracle::psnr(psi, gt) >= oracle::psnr(vs.views[0], gt) + 1.0);
  REQUIRE(log.size() == 48);
  CHECK(log.front().iteration == 1);
  CHECK(log.front().residual_l1.size() == 4);
  CHECK(log.back().residual_l1[0] < log.front().residual_l1[0]);
}

TEST_CASE("tikhonov step tends to identity as lambda shrinks") {
  std::mt19937_64 rng(13);
  const Volume x = oracle::random_volume({6, 6, 6}, rng);
  EbmdConfig c;
  c.iterations = 1;
  c.tikhonov_lambda = 0.0;
  const Volume ref = classical::ebmd_deconvolve(single_view(x, Psf::delta()), c);
  double prev = 1e300;
  for (double lam : {1e-1, 1e-3, 1e-5, 1e-7}) {
    c.tikhonov_lambda = lam;
    const double diff = max_abs_diff(classical::ebmd_deconvolve(single_view(x, Psf::delta()), c), ref);
    CHECK(diff < prev);
    prev = diff;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("ebmd edge cases and errors") {
  EbmdConfig c;
  c.iterations = 3;
  const Dims d{5, 5, 5};
  CHECK(classical::ebmd_deconvolve(single_view(Volume(d), Psf::delta()), c).max() == 0.0);

  Volume neg(d, 1.0);
  neg[7] = -0.1;
  CHECK_THROWS_AS(classical::ebmd_deconvolve(single_view(neg, Psf::delta()), c), Error);

  Volume k({3, 3, 3}, 1.0);
  CHECK_THROWS_AS(classical::ebmd_deconvolve(single_view(Volume(d, 1.0), Psf(k)), c), ConfigError);

  Volume inf(d, 1.0);
  inf[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(classical::ebmd_deconvolve(single_view(inf, Psf::delta()), c), Error);

  CHECK_THROWS_AS(EbmdConfig({0, 0.0}).validate(), ConfigError);
  EbmdConfig bad;
  bad.tikhonov_lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.clamp_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("classical config json round trip and strictness") {
  EbmdConfig e;
  e.iterations = 15;
  e.tikhonov_lambda = 0.1;
  e.init = classical::EbmdInit::uniform;
  nlohmann::json j = e;
  const auto back = j.get<EbmdConfig>();
  CHECK(back.iterations == 15);
  CHECK(back.tikhonov_lambda == 0.1);
  CHECK(back.init == classical::EbmdInit::uniform);
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<EbmdConfig>(), ConfigError);

  CbifConfig cb{3, 16, 1e-5};
  nlohmann::json jc = cb;
  const auto cb2 = jc.get<CbifConfig>();
  CHECK(cb2.window_radius == 3);
  CHECK(cb2.histogram_bins == 16);
  CHECK(cb2.epsilon == 1e-5);
}
