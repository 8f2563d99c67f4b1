#include <doctest.h>

#include <cmath>
#include <random>

#include "mvf/nn/adam.hpp"
#include "mvf/nn/losses.hpp"
#include "mvf/phantom.hpp"
#include "oracles.hpp"

using namespace mvf;
using namespace mvf::nn;

namespace {

Tensor random_tensor(int c, Dims d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(c, d);
  for (double& v : t.data()) v = u(rng);
  return t;
}

Psf small_psf(std::size_t n, double sl, double sa) {
  sim::PsfConfig c;
  c.dims = n;
  c.sigma_lateral = sl;
  c.sigma_axial = sa;
  return sim::synthesize_psf(c);
}

double fd(const std::function<double()>& f, double& x, double h = 1e-6) { return oracle::central_difference(f, x, h); }

}  // namespace

TEST_CASE("l1 loss") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor(2, {3, 3, 2}, rng), b = random_tensor(2, {3, 3, 2}, rng);
  Tensor g;
  const double l = l1_loss(a, b, &g);
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a.data()[i] - b.data()[i]);
  CHECK(l == doctest::Approx(ref / static_cast<double>(a.size())).epsilon(1e-14));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(g.data()[i]) == doctest::Approx(1.0 / static_cast<double>(a.size())));
    CHECK(fd([&] { return l1_loss(a, b); }, a.data()[i]) == doctest::Approx(g.data()[i]).epsilon(1e-6));
  }
  Tensor same;
  CHECK(l1_loss(a, a, &same) == 0.0);
  for (double v : same.data()) CHECK(v == 0.0);
}

TEST_CASE("cycle loss matches convolution oracle") {
  std::mt19937_64 rng(2);
  const Dims d{8, 7, 6};
  const std::vector<Psf> psfs = {small_psf(3, 0.7, 1.0), rotate_y_90(small_psf(3, 0.7, 1.0), 1)};
  for (BoundaryMode mode : {BoundaryMode::circular, BoundaryMode::zero_pad}) {
    std::vector<ConvolutionOperator> ops;
    for (const auto& h : psfs) ops.emplace_back(h, d, mode);
    Tensor z = random_tensor(1, d, rng);
    const Tensor x = random_tensor(2, d, rng);
    Tensor g;
    const double l = cycle_view_loss(z, ops, x, &g);
    double ref = 0.0;
    for (int v = 0; v < 2; ++v) {
      const Volume blurred = oracle::convolve(z.channel_volume(0), psfs[static_cast<std::size_t>(v)].kernel(),
                                              mode == BoundaryMode::circular);
      const Volume xv = x.channel_volume(v);
      for (std::size_t i = 0; i < blurred.size(); ++i) ref += std::abs(blurred[i] - xv[i]);
    }
    ref /= 2.0 * static_cast<double>(d.size());
    CHECK(std::abs(l - ref) < 1e-12);
    for (std::size_t i = 0; i < z.size(); i += 7)
      CHECK(fd([&] { return cycle_view_loss(z, ops, x); }, z.data()[i]) == doctest::Approx(g.data()[i]).epsilon(1e-5));

    // blurred views of z reproduce themselves; shifting z by c under delta PSFs costs c
    const Tensor stack = degrade_stack(z, ops);
    CHECK(cycle_view_loss(z, ops, stack) < 1e-14);
  }
  std::vector<ConvolutionOperator> deltas;
  deltas.emplace_back(Psf::delta(), d);
  Tensor z = random_tensor(1, d, rng);
  const Tensor x = degrade_stack(z, deltas);
  for (double& v : z.data()) v += 0.37;
  CHECK(std::abs(cycle_view_loss(z, deltas, x) - 0.37) < 1e-12);
}

TEST_CASE("cycle loss margin restricts the mean to the interior") {
  std::mt19937_64 rng(3);
  const Dims d{8, 8, 8};
  std::vector<ConvolutionOperator> ops;
  ops.emplace_back(small_psf(3, 0.8, 0.8), d, BoundaryMode::zero_pad);
  Tensor z = random_tensor(1, d, rng);
  const Tensor x = random_tensor(1, d, rng);
  const Margin m{1, 2, 0};
  Tensor g;
  const double l = cycle_view_loss(z, ops, x, &g, m);
  const Volume blurred = oracle::convolve(z.channel_volume(0), small_psf(3, 0.8, 0.8).kernel(), false);
  double ref = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t j = 2; j < 6; ++j)
      for (std::size_t i = 1; i < 7; ++i) {
        ref += std::abs(blurred(i, j, k) - x.at(0, i, j, k));
        ++n;
      }
  CHECK(std::abs(l - ref / static_cast<double>(n)) < 1e-12);
  for (std::size_t i = 0; i < z.size(); i += 5)
    CHECK(fd([&] { return cycle_view_loss(z, ops, x, nullptr, m); }, z.data()[i]) ==
          doctest::Approx(g.data()[i]).epsilon(1e-5));
}

TEST_CASE("gradient loss") {
  CHECK(gradient_loss(Tensor(1, {4, 4, 4}, 2.0)) == 0.0);
  Tensor ramp(1, {4, 4, 4});
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) ramp.at(0, x, y, z) = static_cast<double>(x);
  CHECK(gradient_loss(ramp) == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(4);
  const Dims d{5, 4, 3};
  Tensor t = random_tensor(2, d, rng);
  Tensor g;
  const double l = gradient_loss(t, &g);
  double sx = 0, sy = 0, sz = 0;
  for (int c = 0; c < 2; ++c)
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) {
          if (x + 1 < d.nx) sx += std::pow(t.at(c, x + 1, y, z) - t.at(c, x, y, z), 2);
          if (y + 1 < d.ny) sy += std::pow(t.at(c, x, y + 1, z) - t.at(c, x, y, z), 2);
          if (z + 1 < d.nz) sz += std::pow(t.at(c, x, y, z + 1) - t.at(c, x, y, z), 2);
        }
  const double ref = sx / (2.0 * 4 * 4 * 3) + sy / (2.0 * 5 * 3 * 3) + sz / (2.0 * 5 * 4 * 2);
  CHECK(std::abs(l - ref) < 1e-12);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(fd([&] { return gradient_loss(t); }, t.data()[i]) == doctest::Approx(g.data()[i]).epsilon(1e-6));
}

TEST_CASE("least-squares adversarial losses") {
  CHECK(lsgan_discriminator_loss({1.0, 1.0}, {0.0, 0.0}) == 0.0);
  CHECK(lsgan_discriminator_loss({0.0, 0.0}, {1.0, 1.0}) == 2.0);
  CHECK(lsgan_generator_loss({1.0, 1.0}) == 0.0);
  CHECK(lsgan_generator_loss({0.0, 0.0, 0.0}) == 3.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> r = {n(rng), n(rng)}, f = {n(rng), n(rng)};
  std::vector<double> gr, gf, gg;
  const double ld = lsgan_discriminator_loss(r, f, &gr, &gf);
  CHECK(ld == doctest::Approx(0.5 * (std::pow(r[0] - 1, 2) + std::pow(r[1] - 1, 2) + f[0] * f[0] + f[1] * f[1])));
  const double lg = lsgan_generator_loss(f, &gg);
  CHECK(lg == doctest::Approx(std::pow(f[0] - 1, 2) + std::pow(f[1] - 1, 2)));
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(gr[j] == doctest::Approx(r[j] - 1.0));
    CHECK(gf[j] == doctest::Approx(f[j]));
    CHECK(gg[j] == doctest::Approx(2.0 * (f[j] - 1.0)));
  }
}

TEST_CASE("total objective") {
  CHECK(total_generator_objective({}, TrainMode::semi, 10.0, 1.0) == 0.0);
  CHECK(total_generator_objective({0.2, 0.5, 99.0}, TrainMode::semi, 10.0, 1.0) == doctest::Approx(5.2));
  CHECK(total_generator_objective({99.0, 0.5, 0.3}, TrainMode::self, 10.0, 2.0) == doctest::Approx(5.6));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    const LossParts p{u(rng), u(rng), u(rng)};
    const double lc = u(rng), lg = u(rng);
    CHECK(total_generator_objective(p, TrainMode::semi, lc, lg) == doctest::Approx(p.adversarial + lc * p.cycle));
    CHECK(total_generator_objective(p, TrainMode::self, lc, lg) == doctest::Approx(lc * p.cycle + lg * p.gradient));
  }
}

namespace {

NetParams scalar_params(double x0) {
  NetParams p;
  p.add("x", {1});
  p.tensors[0].values[0] = x0;
  return p;
}

}  // namespace

TEST_CASE("adam") {
  NetParams p = scalar_params(3.0);
  AdamState s = AdamState::for_params(p);
  NetParams g = p.zeros_like();
  adam_step(p, g, s, {});
  CHECK(p.tensors[0].values[0] == 3.0);

  // the bias-corrected first step moves every coordinate by lr
  NetParams q;
  q.add("a", {3});
  q.tensors[0].values = {1.0, -2.0, 0.5};
  AdamState sq = AdamState::for_params(q);
  NetParams gq = q.zeros_like();
  gq.tensors[0].values = {4.0, -1e-3, 250.0};
  adam_step(q, gq, sq, {0.01});
  CHECK(q.tensors[0].values[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(q.tensors[0].values[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
  CHECK(q.tensors[0].values[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
  CHECK(sq.step == 1);

  // f(x) = (x - 1.5)^2
  NetParams x = scalar_params(-2.0);
  AdamState sx = AdamState::for_params(x);
  int steps = 0;
  for (; steps < 2000; ++steps) {
    const double v = x.tensors[0].values[0];
    if (std::pow(v - 1.5, 2) < 1e-6) break;
    NetParams gx = x.zeros_like();
    gx.tensors[0].values[0] = 2.0 * (v - 1.5);
    adam_step(x, gx, sx, {0.05});
  }
  CHECK(steps < 2000);
}
