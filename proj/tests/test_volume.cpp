#include <doctest.h>

#include <random>

#include "mvf/error.hpp"
#include "mvf/volume.hpp"
#include "oracles.hpp"

using namespace mvf;

TEST_CASE("volume layout is x fastest") {
  Volume v({3, 4, 5});
  CHECK(v.size() == 60);
  CHECK(v.index(1, 0, 0) == 1);
  CHECK(v.index(0, 1, 0) == 3);
  CHECK(v.index(0, 0, 1) == 12);
  v(2, 3, 4) = 7.0;
  CHECK(v[59] == 7.0);
}

TEST_CASE("volume reductions") {
  Volume v({2, 2, 1}, std::vector<double>{1, -2, 3, 4});
  CHECK(v.sum() == 6.0);
  CHECK(v.min() == -2.0);
  CHECK(v.max() == 4.0);
  CHECK(v.all_finite());
  clamp_nonnegative(v);
  CHECK(v[1] == 0.0);
  CHECK(dot(v, v) == 26.0);
  CHECK_THROWS_AS(Volume({2, 2, 2}, std::vector<double>(3)), Error);
}

TEST_CASE("crop extracts the addressed block") {
  Volume v({4, 4, 4});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Volume c = crop(v, 1, 2, 3, {2, 2, 1});
  CHECK(c(0, 0, 0) == v(1, 2, 3));
  CHECK(c(1, 1, 0) == v(2, 3, 3));
  CHECK_THROWS(crop(v, 3, 0, 0, {2, 1, 1}));
}

TEST_CASE("boundary names round trip") {
  CHECK(parse_boundary("circular") == BoundaryMode::circular);
  CHECK(parse_boundary("zero-pad") == BoundaryMode::zero_pad);
  CHECK(parse_boundary(to_string(BoundaryMode::zero_pad)) == BoundaryMode::zero_pad);
  CHECK_THROWS_AS(parse_boundary("mirror"), ConfigError);
}

TEST_CASE("psf validation") {
  CHECK_THROWS(Psf(Volume({2, 3, 3}, 1.0)));
  Volume neg({3, 3, 3}, 0.0);
  neg[0] = -1.0;
  CHECK_THROWS(Psf(neg));
  const Psf d = Psf::delta(3);
  CHECK(d.normalized());
  CHECK(d.kernel()(1, 1, 1) == 1.0);
  CHECK(d.symmetric());
  const Psf u(Volume({3, 3, 3}, 2.0));
  CHECK_FALSE(u.normalized());
  CHECK(u.normalized_copy().normalized());
}

TEST_CASE("mirrored kernel reverses offsets") {
  Volume k({3, 3, 3}, 0.0);
  k(2, 1, 0) = 1.0;
  const Psf m = mirrored(Psf(k));
  CHECK(m.kernel()(0, 1, 2) == 1.0);
  CHECK(m.kernel().sum() == 1.0);
}

TEST_CASE("quarter turns about y follow the rotation table") {
  // weight at offset (dx, dy, dz) = (1, 0, 0) relative to center 1
  Volume k({3, 3, 3}, 0.0);
  k(2, 1, 1) = 1.0;
  k(1, 1, 0) = 0.5;  // offset (0, 0, -1)
  const Psf p(k);
  const Psf r1 = rotate_y_90(p, 1);
  // (1,0,0) -> (z', x') = (-1, 0): x'=0, z'=-1
  CHECK(r1.kernel()(1, 1, 0) == 1.0);
  // (0,0,-1) -> x' = -1, z' = 0
  CHECK(r1.kernel()(0, 1, 1) == 0.5);
  CHECK(rotate_y_90(rotate_y_90(rotate_y_90(rotate_y_90(p, 1), 1), 1), 1) == p);
  CHECK(rotate_y_90(rotate_y_90(p, 1), 3) == p);
  CHECK(rotate_y_90(p, 2).kernel()(0, 1, 1) == 1.0);
  CHECK_THROWS(rotate_y_90(Psf(Volume({3, 3, 5}, 0.1)), 1));
}

TEST_CASE("rotation preserves mass and agrees with explicit matrix") {
  std::mt19937_64 rng(3);
  const Psf p(oracle::random_volume({5, 3, 5}, rng));
  for (int t = 0; t < 4; ++t) {
    const Psf r = rotate_y_90(p, t);
    CHECK(r.weight_sum() == doctest::Approx(p.weight_sum()).epsilon(1e-14));
    for (long z = -2; z <= 2; ++z)
      for (long y = -1; y <= 1; ++y)
        for (long x = -2; x <= 2; ++x) {
          long nx = x, nz = z;
          for (int i = 0; i < t; ++i) {
            const long tx = nx;
            nx = nz;
            nz = -tx;
          }
          CHECK(r.kernel()(static_cast<std::size_t>(nx + 2), static_cast<std::size_t>(y + 1),
                           static_cast<std::size_t>(nz + 2)) ==
                p.kernel()(static_cast<std::size_t>(x + 2), static_cast<std::size_t>(y + 1), static_cast<std::size_t>(z + 2)));
        }
  }
}

TEST_CASE("view set validation") {
  ViewSet vs;
  vs.views = {Volume({4, 4, 4}), Volume({4, 4, 4})};
  vs.psfs = {Psf::delta(1), Psf::delta(1)};
  vs.angles_deg = {0, 180};
  CHECK_NOTHROW(vs.validate());
  vs.views[1] = Volume({4, 4, 5});
  CHECK_THROWS_AS(vs.validate(), ConfigError);
  vs.views.pop_back();
  CHECK_THROWS_AS(vs.validate(), ConfigError);
}
