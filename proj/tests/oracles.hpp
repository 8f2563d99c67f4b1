#pragma once

// Brute-force reference implementations written directly from the
// definitions. They share no code with the library beyond the Volume type.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mvf/volume.hpp"

namespace oracle {

using mvf::Dims;
using mvf::Volume;

inline long wrap(long i, long n) { return ((i % n) + n) % n; }

/// out(p) = sum_d k(d) v(p - d) with d relative to the kernel center;
/// adjoint uses v(p + d). circular wraps, otherwise out-of-range is zero.
inline Volume convolve(const Volume& v, const Volume& k, bool circular, bool adjoint = false) {
  const Dims& d = v.dims();
  const Dims& kd = k.dims();
  const long cx = static_cast<long>(kd.nx / 2), cy = static_cast<long>(kd.ny / 2), cz = static_cast<long>(kd.nz / 2);
  Volume out(d);
  const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);
  for (long z = 0; z < nz; ++z)
    for (long y = 0; y < ny; ++y)
      for (long x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (long c = 0; c < static_cast<long>(kd.nz); ++c)
          for (long b = 0; b < static_cast<long>(kd.ny); ++b)
            for (long a = 0; a < static_cast<long>(kd.nx); ++a) {
              const long s = adjoint ? 1 : -1;
              long sx = x + s * (a - cx), sy = y + s * (b - cy), sz = z + s * (c - cz);
              if (circular) {
                sx = wrap(sx, nx);
                sy = wrap(sy, ny);
                sz = wrap(sz, nz);
              } else if (sx < 0 || sy < 0 || sz < 0 || sx >= nx || sy >= ny || sz >= nz) {
                continue;
              }
              acc += k(static_cast<std::size_t>(a), static_cast<std::size_t>(b), static_cast<std::size_t>(c)) *
                     v(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), static_cast<std::size_t>(sz));
            }
        out(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) = acc;
      }
  return out;
}

inline Volume random_volume(Dims d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Volume v(d);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

/// Percentile by sorting and interpolating between neighbours at
/// rank p/100 * (n - 1).
inline double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double r = p / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(r);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1.0 - (r - static_cast<double>(i))) + v[i + 1] * (r - static_cast<double>(i));
}

struct Stats {
  std::vector<double> a, b;
};

inline Stats select(const Volume& a, const Volume& b, const std::vector<std::uint8_t>* mask) {
  Stats s;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!mask || (*mask)[i]) {
      s.a.push_back(a[i]);
      s.b.push_back(b[i]);
    }
  return s;
}

inline double rmse(const Volume& r, const Volume& g, const std::vector<std::uint8_t>* mask = nullptr) {
  const Stats s = select(r, g, mask);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.a.size(); ++i) acc += std::pow(s.a[i] - s.b[i], 2);
  return std::sqrt(acc / static_cast<double>(s.a.size()));
}

inline double nrmse(const Volume& r, const Volume& g, const std::vector<std::uint8_t>* mask = nullptr) {
  const Stats s = select(r, g, mask);
  const auto [lo, hi] = std::minmax_element(s.b.begin(), s.b.end());
  return rmse(r, g, mask) / (*hi - *lo);
}

inline double psnr(const Volume& r, const Volume& g, const std::vector<std::uint8_t>* mask = nullptr) {
  const Stats s = select(r, g, mask);
  const double peak = *std::max_element(s.b.begin(), s.b.end());
  return 10.0 * std::log10(peak * peak / std::pow(rmse(r, g, mask), 2));
}

inline double cc(const Volume& r, const Volume& g, const std::vector<std::uint8_t>* mask = nullptr) {
  const Stats s = select(r, g, mask);
  const double n = static_cast<double>(s.a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < s.a.size(); ++i) {
    sa += s.a[i];
    sb += s.b[i];
    saa += s.a[i] * s.a[i];
    sbb += s.b[i] * s.b[i];
    sab += s.a[i] * s.b[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

/// Mean SSIM with a full (non-separable) 11^3 Gaussian window, sigma 1.5,
/// replicate padding and K1 = 0.01, K2 = 0.03.
inline double ssim(const Volume& a, const Volume& b, double range, const std::vector<std::uint8_t>* mask = nullptr) {
  const Dims& d = a.dims();
  const int r = 5;
  std::vector<double> w1(2 * r + 1);
  double s1 = 0.0;
  for (int i = -r; i <= r; ++i) s1 += w1[static_cast<std::size_t>(i + r)] = std::exp(-i * i / (2.0 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  auto clampi = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1)); };
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (mask && !(*mask)[a.index(x, y, z)]) continue;
        double ma = 0, mb = 0, eaa = 0, ebb = 0, eab = 0;
        for (int k = -r; k <= r; ++k)
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              const double w = w1[static_cast<std::size_t>(i + r)] * w1[static_cast<std::size_t>(j + r)] *
                               w1[static_cast<std::size_t>(k + r)] / (s1 * s1 * s1);
              const std::size_t px = clampi(static_cast<long>(x) + i, d.nx), py = clampi(static_cast<long>(y) + j, d.ny),
                                pz = clampi(static_cast<long>(z) + k, d.nz);
              const double va = a(px, py, pz), vb = b(px, py, pz);
              ma += w * va;
              mb += w * vb;
              eaa += w * va * va;
              ebb += w * vb * vb;
              eab += w * va * vb;
            }
        const double num = (2 * ma * mb + c1) * (2 * (eab - ma * mb) + c2);
        const double den = (ma * ma + mb * mb + c1) * (eaa - ma * ma + ebb - mb * mb + c2);
        total += num / den;
        ++count;
      }
  return total / static_cast<double>(count);
}

/// Shannon entropy (natural log) of the histogram of every (2r+1)^3 window;
/// bins are equal-width over [min, max] of the whole volume, and positions
/// outside the volume contribute the value 0.
inline Volume local_entropy(const Volume& v, int r, int bins) {
  const double lo = v.min(), hi = v.max();
  Volume out(v.dims());
  if (!(hi > lo)) return out;
  auto bin = [&](double x) {
    int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
  };
  const Dims& d = v.dims();
  const double n = std::pow(2.0 * r + 1.0, 3);
  std::vector<int> h(static_cast<std::size_t>(bins));
  for (long z = 0; z < static_cast<long>(d.nz); ++z)
    for (long y = 0; y < static_cast<long>(d.ny); ++y)
      for (long x = 0; x < static_cast<long>(d.nx); ++x) {
        std::fill(h.begin(), h.end(), 0);
        for (long k = z - r; k <= z + r; ++k)
          for (long j = y - r; j <= y + r; ++j)
            for (long i = x - r; i <= x + r; ++i) {
              const bool in = i >= 0 && j >= 0 && k >= 0 && i < static_cast<long>(d.nx) && j < static_cast<long>(d.ny) &&
                              k < static_cast<long>(d.nz);
              const double val = in ? v(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) : 0.0;
              ++h[static_cast<std::size_t>(bin(val))];
            }
        double e = 0.0;
        for (int c : h)
          if (c > 0) e -= (c / n) * std::log(c / n);
        out(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) = e;
      }
  return out;
}

/// Central finite difference of f with respect to x, step h.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

}  // namespace oracle
