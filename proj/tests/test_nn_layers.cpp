#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mvf/error.hpp"
#include "mvf/nn/discriminator.hpp"
#include "mvf/nn/generator.hpp"
#include "mvf/nn/layers.hpp"

using namespace mvf;
using namespace mvf::nn;

namespace {

Tensor random_tensor(int c, Dims d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(c, d);
  for (double& v : t.data()) v = n(rng);
  return t;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)}); }

/// Max relative error between analytic and central-difference derivatives of
/// f over every entry of x.
double fd_check(std::span<double> x, std::span<const double> analytic, const std::function<double()>& f,
                double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f();
    x[i] = x0 - h;
    const double fm = f();
    x[i] = x0;
    worst = std::max(worst, rel_err(analytic[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

// Direct definition: out[o](p) = b[o] + sum_{i,k} w[o][i][k] in[i](p*s - pad + k).
Tensor conv_oracle(const ConvSpec& s, const std::vector<double>& w, const std::vector<double>& b, const Tensor& in) {
  const Dims od = s.output_dims(in.dims());
  Tensor out(s.out_channels, od);
  const int k = s.kernel;
  for (int o = 0; o < s.out_channels; ++o)
    for (std::size_t z = 0; z < od.nz; ++z)
      for (std::size_t y = 0; y < od.ny; ++y)
        for (std::size_t x = 0; x < od.nx; ++x) {
          double acc = s.bias ? b[static_cast<std::size_t>(o)] : 0.0;
          for (int i = 0; i < s.in_channels; ++i)
            for (int c = 0; c < k; ++c)
              for (int bb = 0; bb < k; ++bb)
                for (int a = 0; a < k; ++a) {
                  const long sx = static_cast<long>(x) * s.stride - s.pad + a;
                  const long sy = static_cast<long>(y) * s.stride - s.pad + bb;
                  const long sz = static_cast<long>(z) * s.stride - s.pad + c;
                  if (sx < 0 || sy < 0 || sz < 0 || sx >= static_cast<long>(in.dims().nx) ||
                      sy >= static_cast<long>(in.dims().ny) || sz >= static_cast<long>(in.dims().nz))
                    continue;
                  const std::size_t wi = ((((static_cast<std::size_t>(o) * s.in_channels + i) * k + c) * k + bb) * k + a);
                  acc += w[wi] * in.at(i, static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), static_cast<std::size_t>(sz));
                }
          out.at(o, x, y, z) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv3d forward matches the direct sum") {
  std::mt19937_64 rng(1);
  for (const ConvSpec s : {ConvSpec{2, 3, 3, 1, 1, true}, ConvSpec{3, 2, 3, 2, 1, true}, ConvSpec{1, 2, 1, 1, 0, false},
                           ConvSpec{2, 2, 3, 1, 0, true}}) {
    const Tensor in = random_tensor(s.in_channels, {6, 5, 4}, rng);
    const auto w = random_vec(s.weight_count(), rng);
    const auto b = random_vec(static_cast<std::size_t>(s.out_channels), rng);
    const Tensor got = conv3d_forward(s, w, b, in);
    const Tensor expect = conv_oracle(s, w, b, in);
    REQUIRE(got.dims() == expect.dims());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got.data()[i] - expect.data()[i]));
    CHECK(worst < 1e-12);
  }
  CHECK(ConvSpec{1, 1, 3, 2, 1, true}.output_dims({8, 7, 6}) == Dims{4, 4, 3});
}

TEST_CASE("conv3d gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (const ConvSpec s : {ConvSpec{2, 3, 3, 1, 1, true}, ConvSpec{2, 2, 3, 2, 1, true}}) {
    Tensor in = random_tensor(s.in_channels, {5, 4, 4}, rng);
    auto w = random_vec(s.weight_count(), rng);
    auto b = random_vec(static_cast<std::size_t>(s.out_channels), rng);
    const Tensor r = random_tensor(s.out_channels, s.output_dims(in.dims()), rng);
    auto f = [&] { return inner(conv3d_forward(s, w, b, in), r); };
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    const Tensor gin = conv3d_backward(s, w, in, r, gw, gb);
    CHECK(fd_check(w, gw, f) < 1e-7);
    CHECK(fd_check(b, gb, f) < 1e-7);
    CHECK(fd_check(in.data(), gin.data(), f) < 1e-7);
    // accumulation into existing gradients
    conv3d_backward(s, w, in, r, gw, gb, false);
    std::vector<double> once(w.size(), 0.0), onceb(b.size(), 0.0);
    conv3d_backward(s, w, in, r, once, onceb, false);
    for (std::size_t i = 0; i < gw.size(); ++i) CHECK(gw[i] == doctest::Approx(2 * once[i]).epsilon(1e-12));
  }
}

TEST_CASE("transposed conv forward and gradients") {
  std::mt19937_64 rng(3);
  const UpConvSpec s{3, 2, true};
  Tensor in = random_tensor(3, {3, 2, 2}, rng);
  auto w = random_vec(s.weight_count(), rng);
  auto b = random_vec(2, rng);
  const Tensor out = upconv_forward(s, w, b, in);
  REQUIRE(out.dims() == Dims{6, 4, 4});
  // each output voxel draws from exactly one input voxel and kernel tap
  for (int o = 0; o < 2; ++o)
    for (std::size_t z = 0; z < 4; ++z)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 6; ++x) {
          double acc = b[static_cast<std::size_t>(o)];
          for (int i = 0; i < 3; ++i) {
            const std::size_t tap = ((z % 2) * 2 + (y % 2)) * 2 + (x % 2);
            acc += w[(static_cast<std::size_t>(i) * 2 + o) * 8 + tap] * in.at(i, x / 2, y / 2, z / 2);
          }
          CHECK(out.at(o, x, y, z) == doctest::Approx(acc).epsilon(1e-12));
        }
  const Tensor r = random_tensor(2, out.dims(), rng);
  auto f = [&] { return inner(upconv_forward(s, w, b, in), r); };
  std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
  const Tensor gin = upconv_backward(s, w, in, r, gw, gb);
  CHECK(fd_check(w, gw, f) < 1e-7);
  CHECK(fd_check(b, gb, f) < 1e-7);
  CHECK(fd_check(in.data(), gin.data(), f) < 1e-7);
}

TEST_CASE("instance norm statistics and gradients") {
  std::mt19937_64 rng(4);
  Tensor in = random_tensor(3, {4, 4, 3}, rng, 2.0);
  for (double& v : in.channel_span(1)) v += 5.0;
  NormCache cache;
  const Tensor y = instance_norm_forward(in, 1e-5, &cache);
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (double a : y.channel_span(c)) m += a;
    m /= static_cast<double>(y.voxels());
    for (double a : y.channel_span(c)) v += (a - m) * (a - m);
    v /= static_cast<double>(y.voxels());
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v - 1.0) < 1e-3);
  }
  const Tensor r = random_tensor(3, in.dims(), rng);
  auto f = [&] { return inner(instance_norm_forward(in, 1e-5, nullptr), r); };
  const Tensor gin = instance_norm_backward(y, cache, r);
  CHECK(fd_check(in.data(), gin.data(), f) < 1e-6);

  const Tensor zero(2, {3, 3, 3});
  const Tensor zy = instance_norm_forward(zero, 1e-5, nullptr);
  for (double v : zy.data()) CHECK(v == 0.0);
}

TEST_CASE("leaky relu and max pooling") {
  std::mt19937_64 rng(5);
  Tensor in = random_tensor(2, {4, 4, 2}, rng);
  const Tensor y = leaky_relu_forward(in, 0.2);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double x = in.data()[i];
    CHECK(y.data()[i] == (x > 0 ? x : 0.2 * x));
  }
  const Tensor r = random_tensor(2, in.dims(), rng);
  const Tensor g = leaky_relu_backward(in, r, 0.2);
  CHECK(fd_check(in.data(), g.data(), [&] { return inner(leaky_relu_forward(in, 0.2), r); }) < 1e-7);

  PoolCache pc;
  const Tensor p = maxpool2_forward(in, &pc);
  REQUIRE(p.dims() == Dims{2, 2, 1});
  for (int c = 0; c < 2; ++c)
    for (std::size_t y0 = 0; y0 < 2; ++y0)
      for (std::size_t x0 = 0; x0 < 2; ++x0) {
        double m = -1e300;
        for (std::size_t dz = 0; dz < 2; ++dz)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, in.at(c, 2 * x0 + dx, 2 * y0 + dy, dz));
        CHECK(p.at(c, x0, y0, 0) == m);
      }
  const Tensor rp = random_tensor(2, p.dims(), rng);
  const Tensor gp = maxpool2_backward(pc, rp);
  CHECK(fd_check(in.data(), gp.data(), [&] { return inner(maxpool2_forward(in, nullptr), rp); }) < 1e-7);
  CHECK_THROWS(maxpool2_forward(Tensor(1, {3, 4, 4}), nullptr));
}

TEST_CASE("channel concat and split are inverse") {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor(2, {3, 2, 2}, rng), b = random_tensor(3, {3, 2, 2}, rng);
  const Tensor c = concat_channels(a, b);
  CHECK(c.channels() == 5);
  const auto [x, y] = split_channels(c, 2);
  CHECK(std::equal(x.data().begin(), x.data().end(), a.data().begin()));
  CHECK(std::equal(y.data().begin(), y.data().end(), b.data().begin()));
}

namespace {

GeneratorConfig tiny_generator(bool norm) {
  GeneratorConfig g;
  g.in_channels = 2;
  g.levels = 2;
  g.base_channels = 2;
  g.max_channels = 4;
  g.convs_per_level = 1;
  g.norm = norm;
  g.seed = 7;
  return g;
}

}  // namespace

TEST_CASE("generator gradients match finite differences") {
  for (bool norm : {false, true}) {
    const Generator gen(tiny_generator(norm));
    NetParams p = gen.init_params();
    std::mt19937_64 rng(8);
    Tensor x = random_tensor(2, {4, 4, 4}, rng);
    const Tensor r = random_tensor(1, {4, 4, 4}, rng);
    GeneratorRecord rec;
    gen.forward(p, x, &rec);
    NetParams g = p.zeros_like();
    const Tensor gx = gen.backward(p, rec, r, g, true);
    auto f = [&] { return inner(gen.forward(p, x), r); };
    double worst = 0.0;
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
      worst = std::max(worst, fd_check(p.values(t), g.values(t), f));
    CHECK(worst < 1e-5);
    CHECK(fd_check(x.data(), gx.data(), f) < 1e-5);
  }
}

TEST_CASE("generator structure and input checks") {
  GeneratorConfig c = tiny_generator(true);
  c.levels = 3;
  CHECK(c.divisor() == 4);
  CHECK(c.channels_at(0) == 2);
  CHECK(c.channels_at(2) == 4);  // capped at max_channels
  const Generator gen(c);
  const NetParams p = gen.init_params();
  CHECK_NOTHROW(p.find("enc0.conv0.w"));
  CHECK_NOTHROW(p.find("dec0.up.w"));
  CHECK_NOTHROW(p.find("head.b"));
  CHECK_THROWS_WITH_AS(gen.check_input(Tensor(2, {8, 6, 8})), doctest::Contains("along y"), Error);
  CHECK_THROWS_AS(gen.check_input(Tensor(3, {8, 8, 8})), Error);
  CHECK_NOTHROW(gen.check_input(Tensor(2, {8, 8, 4})));

  // determinism of initialization and forward
  const Generator gen2(c);
  const NetParams p2 = gen2.init_params();
  CHECK(p2.same_layout(p));
  for (std::size_t t = 0; t < p.tensors.size(); ++t) CHECK(p.tensors[t].values == p2.tensors[t].values);
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(2, {8, 8, 8}, rng);
  const Tensor a = gen.forward(p, x), b = gen2.forward(p2, x);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

  GeneratorConfig bad = c;
  bad.levels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  nlohmann::json j = c;
  CHECK(j.get<GeneratorConfig>().base_channels == c.base_channels);
  j["unknown"] = true;
  CHECK_THROWS_AS(j.get<GeneratorConfig>(), ConfigError);
}

TEST_CASE("pointwise generator is an affine map on positive inputs") {
  GeneratorConfig c;
  c.in_channels = 3;
  c.levels = 1;
  c.base_channels = 1;
  c.convs_per_level = 1;
  c.kernel = 1;
  c.norm = false;
  const Generator gen(c);
  NetParams p = gen.zero_params();
  REQUIRE(p.tensors.size() == 4);
  p.tensors[0].values = {0.5, 1.0, 2.0};
  p.tensors[1].values = {0.1};
  p.tensors[2].values = {2.0};
  p.tensors[3].values = {0.25};
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor x(3, {4, 2, 2});
  for (double& v : x.data()) v = u(rng);
  const Tensor y = gen.forward(p, x);
  for (std::size_t i = 0; i < x.voxels(); ++i)
    CHECK(y.data()[i] ==
          doctest::Approx(0.25 + 2.0 * (0.1 + 0.5 * x.channel(0)[i] + x.channel(1)[i] + 2.0 * x.channel(2)[i])));
  // zero weights and biases give zero output
  const Tensor z = gen.forward(gen.zero_params(), x);
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("discriminator gradients match finite differences") {
  DiscriminatorConfig c;
  c.n_scales = 2;
  c.patch_dims = {{8, 8, 8}, {4, 4, 4}};
  c.depth = 2;
  c.base_channels = 2;
  c.max_channels = 4;
  for (int scale = 0; scale < 2; ++scale) {
    const Discriminator d(c, scale);
    NetParams p = d.init_params();
    std::mt19937_64 rng(11 + scale);
    Tensor x = random_tensor(1, c.patch_dims[static_cast<std::size_t>(scale)], rng);
    DiscriminatorRecord rec;
    d.forward(p, x, &rec);
    NetParams g = p.zeros_like();
    const Tensor gx = d.backward(p, rec, 1.0, g);
    auto f = [&] { return d.forward(p, x); };
    double worst = 0.0;
    for (std::size_t t = 0; t < p.tensors.size(); ++t) worst = std::max(worst, fd_check(p.values(t), g.values(t), f));
    CHECK(worst < 1e-5);
    CHECK(fd_check(x.data(), gx.data(), f) < 1e-5);
    CHECK_THROWS(d.forward(p, Tensor(1, {6, 8, 8})));
  }
}

TEST_CASE("scale patches") {
  DiscriminatorConfig c;
  c.patch_dims = {{8, 8, 8}, {4, 4, 4}};
  std::mt19937_64 rng(12), rng2(12);
  std::mt19937_64 data(13);
  const Tensor tile = random_tensor(1, {8, 8, 8}, data);
  const Tensor whole = crop_scale_patch(tile, c, 0, rng);
  CHECK(std::equal(whole.data().begin(), whole.data().end(), tile.data().begin()));
  std::size_t off[3] = {0, 0, 0};
  const Tensor part = crop_scale_patch(tile, c, 1, rng, off);
  CHECK(part.dims() == Dims{4, 4, 4});
  CHECK(part.at(0, 0, 0, 0) == tile.at(0, off[0], off[1], off[2]));
  crop_scale_patch(tile, c, 0, rng2);
  const Tensor again = crop_scale_patch(tile, c, 1, rng2);
  CHECK(std::equal(part.data().begin(), part.data().end(), again.data().begin()));
  c.patch_dims[1] = {16, 4, 4};
  CHECK_THROWS(crop_scale_patch(tile, c, 1, rng));
}
