#include "mvf/kernels.hpp"

#include <cmath>
#include <vector>

#include "mvf/error.hpp"

namespace mvf::kernels {

namespace {

long wrap(long i, long n) { return ((i % n) + n) % n; }

void convolve_slice(const Volume& v, const Psf& psf, BoundaryMode mode, bool adjoint, std::size_t z, Volume& out) {
  const Dims& d = v.dims();
  const Dims& k = psf.dims();
  const Dims c = psf.center();
  const long sign = adjoint ? 1 : -1;
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x) {
      double acc = 0.0;
      for (std::size_t kz = 0; kz < k.nz; ++kz)
        for (std::size_t ky = 0; ky < k.ny; ++ky)
          for (std::size_t kx = 0; kx < k.nx; ++kx) {
            long sx = static_cast<long>(x) + sign * (static_cast<long>(kx) - static_cast<long>(c.nx));
            long sy = static_cast<long>(y) + sign * (static_cast<long>(ky) - static_cast<long>(c.ny));
            long sz = static_cast<long>(z) + sign * (static_cast<long>(kz) - static_cast<long>(c.nz));
            if (mode == BoundaryMode::circular) {
              sx = wrap(sx, static_cast<long>(d.nx));
              sy = wrap(sy, static_cast<long>(d.ny));
              sz = wrap(sz, static_cast<long>(d.nz));
            } else if (sx < 0 || sy < 0 || sz < 0 || sx >= static_cast<long>(d.nx) || sy >= static_cast<long>(d.ny) ||
                       sz >= static_cast<long>(d.nz)) {
              continue;
            }
            acc += psf.kernel()(kx, ky, kz) * v(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                                 static_cast<std::size_t>(sz));
          }
      out(x, y, z) = acc;
    }
}

void check(const Volume& v, const Psf& psf) {
  const Dims& k = psf.dims();
  const Dims& d = v.dims();
  if (k.nx > d.nx || k.ny > d.ny || k.nz > d.nz) throw Error("psf larger than volume");
  if (!v.all_finite()) throw Error("convolution: non-finite input value");
}

}  // namespace

Volume direct_convolve_serial(const Volume& v, const Psf& psf, BoundaryMode mode, bool adjoint) {
  check(v, psf);
  Volume out(v.dims());
  for (std::size_t z = 0; z < v.dims().nz; ++z) convolve_slice(v, psf, mode, adjoint, z, out);
  return out;
}

Volume direct_convolve_parallel(const Volume& v, const Psf& psf, BoundaryMode mode, bool adjoint) {
  check(v, psf);
  Volume out(v.dims());
  const long nz = static_cast<long>(v.dims().nz);
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z) convolve_slice(v, psf, mode, adjoint, static_cast<std::size_t>(z), out);
  return out;
}

int bin_of(double value, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  const double t = (value - lo) / (hi - lo);
  int b = static_cast<int>(std::floor(t * bins));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return b;
}

Volume local_entropy_serial(const Volume& v, int window_radius, int histogram_bins) {
  if (window_radius < 1 || histogram_bins < 2) throw ConfigError("local_entropy: radius >= 1 and bins >= 2 required");
  const Dims& d = v.dims();
  Volume out(d);
  const double lo = v.min(), hi = v.max();
  if (!(hi > lo)) return out;
  const int zero_bin = bin_of(0.0, lo, hi, histogram_bins);
  const long r = window_radius;
  const double window = std::pow(2.0 * r + 1.0, 3.0);
  std::vector<long> hist(static_cast<std::size_t>(histogram_bins));
  for (long z = 0; z < static_cast<long>(d.nz); ++z)
    for (long y = 0; y < static_cast<long>(d.ny); ++y)
      for (long x = 0; x < static_cast<long>(d.nx); ++x) {
        std::fill(hist.begin(), hist.end(), 0L);
        for (long dz = -r; dz <= r; ++dz)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              const long sx = x + dx, sy = y + dy, sz = z + dz;
              if (sx < 0 || sy < 0 || sz < 0 || sx >= static_cast<long>(d.nx) || sy >= static_cast<long>(d.ny) ||
                  sz >= static_cast<long>(d.nz)) {
                ++hist[static_cast<std::size_t>(zero_bin)];
              } else {
                ++hist[static_cast<std::size_t>(
                    bin_of(v(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), static_cast<std::size_t>(sz)),
                           lo, hi, histogram_bins))];
              }
            }
        double h = 0.0;
        for (long c : hist)
          if (c > 0) {
            const double p = static_cast<double>(c) / window;
            h -= p * std::log(p);
          }
        out(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) = h;
      }
  return out;
}

}  // namespace mvf::kernels
