#include "mvf/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "mvf/error.hpp"

namespace mvf::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// im2col column budget, in doubles.
constexpr std::size_t kColumnBudget = std::size_t{1} << 16;

struct ConvGeometry {
  Dims in, out;
  long k, s, p;
  std::size_t K;  // rows of the column matrix
  std::size_t rows_per_chunk;
};

ConvGeometry geometry(const ConvSpec& spec, const Dims& in) {
  ConvGeometry g;
  g.in = in;
  g.out = spec.output_dims(in);
  g.k = spec.kernel;
  g.s = spec.stride;
  g.p = spec.pad;
  g.K = static_cast<std::size_t>(spec.in_channels) * spec.kernel * spec.kernel * spec.kernel;
  g.rows_per_chunk = std::max<std::size_t>(1, kColumnBudget / (g.K * g.out.nx));
  return g;
}

// Valid output range [lo, hi) along one axis for kernel tap t.
std::pair<long, long> valid_range(long t, long n_in, long n_out, long s, long p) {
  long lo = p - t <= 0 ? 0 : (p - t + s - 1) / s;
  long hi_num = n_in - 1 + p - t;
  long hi = hi_num < 0 ? -1 : hi_num / s;
  return {std::min(lo, n_out), std::min(hi + 1, n_out)};
}

// Fills col (K x rows*mx) for output rows [r0, r1) where row = oz*my + oy.
void im2col(const ConvGeometry& g, const Tensor& in, std::size_t r0, std::size_t r1, RowMat& col) {
  const std::size_t ncols = (r1 - r0) * g.out.nx;
  col.resize(static_cast<long>(g.K), static_cast<long>(ncols));
  const long kk = g.k;
  const long K = static_cast<long>(g.K);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < K; ++r) {
    const long kx = r % kk, ky = (r / kk) % kk, kz = (r / (kk * kk)) % kk;
    const int ci = static_cast<int>(r / (kk * kk * kk));
    const double* src_c = in.channel(ci);
    double* dst_row = col.data() + r * static_cast<long>(ncols);
    const auto [xlo, xhi] = valid_range(kx, static_cast<long>(g.in.nx), static_cast<long>(g.out.nx), g.s, g.p);
    for (std::size_t row = r0; row < r1; ++row) {
      const long oy = static_cast<long>(row % g.out.ny), oz = static_cast<long>(row / g.out.ny);
      const long iy = oy * g.s - g.p + ky, iz = oz * g.s - g.p + kz;
      double* dst = dst_row + static_cast<long>((row - r0) * g.out.nx);
      if (iy < 0 || iz < 0 || iy >= static_cast<long>(g.in.ny) || iz >= static_cast<long>(g.in.nz) || xlo >= xhi) {
        std::fill_n(dst, g.out.nx, 0.0);
        continue;
      }
      const double* src = src_c + (static_cast<std::size_t>(iz) * g.in.ny + static_cast<std::size_t>(iy)) * g.in.nx;
      std::fill(dst, dst + xlo, 0.0);
      if (g.s == 1) {
        std::copy(src + xlo - g.p + kx, src + xhi - g.p + kx, dst + xlo);
      } else {
        for (long ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox * g.s - g.p + kx];
      }
      std::fill(dst + xhi, dst + static_cast<long>(g.out.nx), 0.0);
    }
  }
}

// Scatter-adds gcol back into grad_in; parallel over input channels so no
// two threads touch the same voxel.
void col2im(const ConvGeometry& g, int in_channels, const RowMat& gcol, std::size_t r0, std::size_t r1, Tensor& grad_in) {
  const long kk = g.k;
  const long taps = kk * kk * kk;
  const std::size_t ncols = (r1 - r0) * g.out.nx;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < in_channels; ++ci) {
    double* dst_c = grad_in.channel(ci);
    for (long t = 0; t < taps; ++t) {
      const long kx = t % kk, ky = (t / kk) % kk, kz = t / (kk * kk);
      const long r = ci * taps + t;
      const double* src_row = gcol.data() + r * static_cast<long>(ncols);
      const auto [xlo, xhi] = valid_range(kx, static_cast<long>(g.in.nx), static_cast<long>(g.out.nx), g.s, g.p);
      if (xlo >= xhi) continue;
      for (std::size_t row = r0; row < r1; ++row) {
        const long oy = static_cast<long>(row % g.out.ny), oz = static_cast<long>(row / g.out.ny);
        const long iy = oy * g.s - g.p + ky, iz = oz * g.s - g.p + kz;
        if (iy < 0 || iz < 0 || iy >= static_cast<long>(g.in.ny) || iz >= static_cast<long>(g.in.nz)) continue;
        const double* src = src_row + static_cast<long>((row - r0) * g.out.nx);
        double* dst = dst_c + (static_cast<std::size_t>(iz) * g.in.ny + static_cast<std::size_t>(iy)) * g.in.nx;
        for (long ox = xlo; ox < xhi; ++ox) dst[ox * g.s - g.p + kx] += src[ox];
      }
    }
  }
}

void check_conv(const ConvSpec& spec, std::span<const double> weight, std::span<const double> bias, const Tensor& in) {
  if (in.channels() != spec.in_channels)
    throw Error("conv3d: expected " + std::to_string(spec.in_channels) + " input channels, got " +
                std::to_string(in.channels()));
  if (weight.size() != spec.weight_count()) throw Error("conv3d: weight size mismatch");
  if (spec.bias && bias.size() != static_cast<std::size_t>(spec.out_channels)) throw Error("conv3d: bias size mismatch");
}

}  // namespace

Dims ConvSpec::output_dims(const Dims& in) const {
  auto o = [&](std::size_t n) -> std::size_t {
    const long v = (static_cast<long>(n) + 2 * pad - kernel) / stride + 1;
    if (v < 1) throw Error("conv3d: input extent " + std::to_string(n) + " too small for kernel");
    return static_cast<std::size_t>(v);
  };
  return {o(in.nx), o(in.ny), o(in.nz)};
}

Tensor conv3d_forward(const ConvSpec& spec, std::span<const double> weight, std::span<const double> bias,
                      const Tensor& in) {
  check_conv(spec, weight, bias, in);
  const ConvGeometry g = geometry(spec, in.dims());
  Tensor out(spec.out_channels, g.out);
  const long M = static_cast<long>(g.out.size());
  const long cout = spec.out_channels;
  Eigen::Map<const RowMat> W(weight.data(), cout, static_cast<long>(g.K));
  RowMat col;
  const std::size_t rows = g.out.ny * g.out.nz;
  for (std::size_t r0 = 0; r0 < rows; r0 += g.rows_per_chunk) {
    const std::size_t r1 = std::min(rows, r0 + g.rows_per_chunk);
    im2col(g, in, r0, r1, col);
    const long c0 = static_cast<long>(r0 * g.out.nx);
    StridedMap O(out.data().data() + c0, cout, col.cols(), Eigen::OuterStride<>(M));
    O.noalias() = W * col;
  }
  if (spec.bias)
    for (int co = 0; co < spec.out_channels; ++co) {
      double* o = out.channel(co);
      for (long i = 0; i < M; ++i) o[i] += bias[static_cast<std::size_t>(co)];
    }
  return out;
}

Tensor conv3d_backward(const ConvSpec& spec, std::span<const double> weight, const Tensor& in,
                       const Tensor& grad_out, std::span<double> grad_weight, std::span<double> grad_bias,
                       bool need_input_grad) {
  check_conv(spec, weight, grad_bias, in);
  const ConvGeometry g = geometry(spec, in.dims());
  if (grad_out.channels() != spec.out_channels || grad_out.dims() != g.out) throw Error("conv3d: grad shape mismatch");
  const long M = static_cast<long>(g.out.size());
  const long cout = spec.out_channels;
  Eigen::Map<const RowMat> W(weight.data(), cout, static_cast<long>(g.K));
  Eigen::Map<RowMat> GW(grad_weight.data(), cout, static_cast<long>(g.K));
  Tensor grad_in;
  if (need_input_grad) grad_in = Tensor(spec.in_channels, in.dims());
  RowMat col, gcol;
  const std::size_t rows = g.out.ny * g.out.nz;
  for (std::size_t r0 = 0; r0 < rows; r0 += g.rows_per_chunk) {
    const std::size_t r1 = std::min(rows, r0 + g.rows_per_chunk);
    im2col(g, in, r0, r1, col);
    const long c0 = static_cast<long>(r0 * g.out.nx);
    ConstStridedMap G(grad_out.data().data() + c0, cout, col.cols(), Eigen::OuterStride<>(M));
    GW.noalias() += G * col.transpose();
    if (need_input_grad) {
      gcol.noalias() = W.transpose() * G;
      col2im(g, spec.in_channels, gcol, r0, r1, grad_in);
    }
  }
  if (spec.bias)
    for (int co = 0; co < spec.out_channels; ++co) {
      const double* go = grad_out.channel(co);
      double s = 0.0;
      for (long i = 0; i < M; ++i) s += go[i];
      grad_bias[static_cast<std::size_t>(co)] += s;
    }
  return grad_in;
}

Tensor upconv_forward(const UpConvSpec& spec, std::span<const double> weight, std::span<const double> bias,
                      const Tensor& in) {
  if (in.channels() != spec.in_channels) throw Error("upconv: input channel mismatch");
  if (weight.size() != spec.weight_count()) throw Error("upconv: weight size mismatch");
  const Dims& d = in.dims();
  const Dims od{2 * d.nx, 2 * d.ny, 2 * d.nz};
  Tensor out(spec.out_channels, od);
  const long N = static_cast<long>(d.size());
  const long rows = static_cast<long>(spec.out_channels) * 8;
  Eigen::Map<const RowMat> W(weight.data(), spec.in_channels, rows);
  const std::size_t chunk = std::max<std::size_t>(d.nx, kColumnBudget / static_cast<std::size_t>(rows));
  RowMat T;
  for (std::size_t j0 = 0; j0 < d.size(); j0 += chunk) {
    const std::size_t j1 = std::min(d.size(), j0 + chunk);
    const long nc = static_cast<long>(j1 - j0);
    ConstStridedMap I(in.data().data() + j0, spec.in_channels, nc, Eigen::OuterStride<>(N));
    T.noalias() = W.transpose() * I;
    const long co_n = spec.out_channels;
#pragma omp parallel for schedule(static)
    for (long co = 0; co < co_n; ++co) {
      double* o = out.channel(static_cast<int>(co));
      for (int a = 0; a < 8; ++a) {
        const std::size_t kx = a & 1, ky = (a >> 1) & 1, kz = (a >> 2) & 1;
        const double* t = T.data() + (co * 8 + a) * nc;
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t x = j % d.nx, y = (j / d.nx) % d.ny, z = j / (d.nx * d.ny);
          o[((2 * z + kz) * od.ny + 2 * y + ky) * od.nx + 2 * x + kx] = t[j - j0];
        }
      }
    }
  }
  if (spec.bias)
    for (int co = 0; co < spec.out_channels; ++co) {
      double* o = out.channel(co);
      for (std::size_t i = 0; i < od.size(); ++i) o[i] += bias[static_cast<std::size_t>(co)];
    }
  return out;
}

Tensor upconv_backward(const UpConvSpec& spec, std::span<const double> weight, const Tensor& in,
                       const Tensor& grad_out, std::span<double> grad_weight, std::span<double> grad_bias) {
  const Dims& d = in.dims();
  const Dims od{2 * d.nx, 2 * d.ny, 2 * d.nz};
  if (grad_out.channels() != spec.out_channels || grad_out.dims() != od) throw Error("upconv: grad shape mismatch");
  const long N = static_cast<long>(d.size());
  const long rows = static_cast<long>(spec.out_channels) * 8;
  Eigen::Map<const RowMat> W(weight.data(), spec.in_channels, rows);
  Eigen::Map<RowMat> GW(grad_weight.data(), spec.in_channels, rows);
  Tensor grad_in(spec.in_channels, d);
  const std::size_t chunk = std::max<std::size_t>(d.nx, kColumnBudget / static_cast<std::size_t>(rows));
  RowMat GT;
  for (std::size_t j0 = 0; j0 < d.size(); j0 += chunk) {
    const std::size_t j1 = std::min(d.size(), j0 + chunk);
    const long nc = static_cast<long>(j1 - j0);
    GT.resize(rows, nc);
    const long co_n = spec.out_channels;
#pragma omp parallel for schedule(static)
    for (long co = 0; co < co_n; ++co) {
      const double* g = grad_out.channel(static_cast<int>(co));
      for (int a = 0; a < 8; ++a) {
        const std::size_t kx = a & 1, ky = (a >> 1) & 1, kz = (a >> 2) & 1;
        double* t = GT.data() + (co * 8 + a) * nc;
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t x = j % d.nx, y = (j / d.nx) % d.ny, z = j / (d.nx * d.ny);
          t[j - j0] = g[((2 * z + kz) * od.ny + 2 * y + ky) * od.nx + 2 * x + kx];
        }
      }
    }
    ConstStridedMap I(in.data().data() + j0, spec.in_channels, nc, Eigen::OuterStride<>(N));
    GW.noalias() += I * GT.transpose();
    StridedMap GI(grad_in.data().data() + j0, spec.in_channels, nc, Eigen::OuterStride<>(N));
    GI.noalias() = W * GT;
  }
  if (spec.bias)
    for (int co = 0; co < spec.out_channels; ++co) {
      const double* g = grad_out.channel(co);
      double s = 0.0;
      for (std::size_t i = 0; i < od.size(); ++i) s += g[i];
      grad_bias[static_cast<std::size_t>(co)] += s;
    }
  return grad_in;
}

Tensor instance_norm_forward(const Tensor& in, double eps, NormCache* cache) {
  Tensor out(in.channels(), in.dims());
  const std::size_t n = in.voxels();
  if (cache) cache->inv_std.assign(static_cast<std::size_t>(in.channels()), 0.0);
  const int nc = in.channels();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nc; ++c) {
    const double* x = in.channel(c);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* y = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv;
    if (cache) cache->inv_std[static_cast<std::size_t>(c)] = inv;
  }
  return out;
}

Tensor instance_norm_backward(const Tensor& y, const NormCache& cache, const Tensor& grad_y) {
  Tensor gx(y.channels(), y.dims());
  const std::size_t n = y.voxels();
  const int nc = y.channels();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nc; ++c) {
    const double* yv = y.channel(c);
    const double* g = grad_y.channel(c);
    double mg = 0.0, mgy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mg += g[i];
      mgy += g[i] * yv[i];
    }
    mg /= static_cast<double>(n);
    mgy /= static_cast<double>(n);
    const double inv = cache.inv_std[static_cast<std::size_t>(c)];
    double* o = gx.channel(c);
    for (std::size_t i = 0; i < n; ++i) o[i] = inv * (g[i] - mg - yv[i] * mgy);
  }
  return gx;
}

Tensor leaky_relu_forward(const Tensor& in, double slope) {
  Tensor out = in;
  for (double& v : out.data())
    if (v <= 0.0) v *= slope;
  return out;
}

Tensor leaky_relu_backward(const Tensor& pre, const Tensor& grad_out, double slope) {
  Tensor g = grad_out;
  const auto p = pre.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < gd.size(); ++i)
    if (p[i] <= 0.0) gd[i] *= slope;
  return g;
}

Tensor maxpool2_forward(const Tensor& in, PoolCache* cache) {
  const Dims& d = in.dims();
  if (d.nx % 2 || d.ny % 2 || d.nz % 2) throw Error("maxpool2: dims must be even, got " + d.str());
  const Dims od{d.nx / 2, d.ny / 2, d.nz / 2};
  Tensor out(in.channels(), od);
  if (cache) {
    cache->argmax.assign(out.size(), 0);
    cache->in_dims = d;
  }
  const int nc = in.channels();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nc; ++c) {
    const double* x = in.channel(c);
    double* o = out.channel(c);
    for (std::size_t z = 0; z < od.nz; ++z)
      for (std::size_t y = 0; y < od.ny; ++y)
        for (std::size_t xo = 0; xo < od.nx; ++xo) {
          double best = 0.0;
          std::uint8_t arg = 0;
          for (std::uint8_t a = 0; a < 8; ++a) {
            const std::size_t ix = 2 * xo + (a & 1), iy = 2 * y + ((a >> 1) & 1), iz = 2 * z + ((a >> 2) & 1);
            const double v = x[(iz * d.ny + iy) * d.nx + ix];
            if (a == 0 || v > best) {
              best = v;
              arg = a;
            }
          }
          const std::size_t oi = (z * od.ny + y) * od.nx + xo;
          o[oi] = best;
          if (cache) cache->argmax[static_cast<std::size_t>(c) * od.size() + oi] = arg;
        }
  }
  return out;
}

Tensor maxpool2_backward(const PoolCache& cache, const Tensor& grad_out) {
  const Dims& d = cache.in_dims;
  const Dims& od = grad_out.dims();
  Tensor gx(grad_out.channels(), d);
  const int nc = grad_out.channels();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nc; ++c) {
    const double* g = grad_out.channel(c);
    double* o = gx.channel(c);
    for (std::size_t z = 0; z < od.nz; ++z)
      for (std::size_t y = 0; y < od.ny; ++y)
        for (std::size_t xo = 0; xo < od.nx; ++xo) {
          const std::size_t oi = (z * od.ny + y) * od.nx + xo;
          const std::uint8_t a = cache.argmax[static_cast<std::size_t>(c) * od.size() + oi];
          const std::size_t ix = 2 * xo + (a & 1), iy = 2 * y + ((a >> 1) & 1), iz = 2 * z + ((a >> 2) & 1);
          o[(iz * d.ny + iy) * d.nx + ix] += g[oi];
        }
  }
  return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw Error("concat: spatial dims mismatch");
  Tensor out(a.channels() + b.channels(), a.dims());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<long>(a.size()));
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first) {
  Tensor a(first, t.dims()), b(t.channels() - first, t.dims());
  std::copy_n(t.data().begin(), a.size(), a.data().begin());
  std::copy_n(t.data().begin() + static_cast<long>(a.size()), b.size(), b.data().begin());
  return {std::move(a), std::move(b)};
}

}  // namespace mvf::nn
