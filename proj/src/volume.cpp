#include "mvf/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvf/error.hpp"

namespace mvf {

std::string Dims::str() const {
  return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
}

BoundaryMode parse_boundary(const std::string& name) {
  if (name == "circular") return BoundaryMode::circular;
  if (name == "zero-pad" || name == "zero_pad") return BoundaryMode::zero_pad;
  throw ConfigError("unknown boundary mode '" + name + "'");
}

std::string to_string(BoundaryMode mode) {
  return mode == BoundaryMode::circular ? "circular" : "zero-pad";
}

Volume::Volume(Dims dims, double fill) : dims_(dims) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw Error("volume dims must be >= 1, got " + dims.str());
  data_.assign(dims.size(), fill);
}

Volume::Volume(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw Error("volume dims must be >= 1, got " + dims.str());
  if (data_.size() != dims.size()) throw Error("volume data length does not match dims " + dims.str());
}

double Volume::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
double Volume::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Volume::max() const { return *std::max_element(data_.begin(), data_.end()); }

bool Volume::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) throw Error("dot: dims mismatch");
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

double max_abs_diff(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) throw Error("max_abs_diff: dims mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void clamp_nonnegative(Volume& v) {
  for (double& x : v.data()) x = std::max(x, 0.0);
}

Volume crop(const Volume& v, std::size_t x0, std::size_t y0, std::size_t z0, Dims size) {
  const Dims& d = v.dims();
  if (x0 + size.nx > d.nx || y0 + size.ny > d.ny || z0 + size.nz > d.nz)
    throw Error("crop " + size.str() + " exceeds volume " + d.str());
  Volume out(size);
  for (std::size_t z = 0; z < size.nz; ++z)
    for (std::size_t y = 0; y < size.ny; ++y)
      for (std::size_t x = 0; x < size.nx; ++x) out(x, y, z) = v(x0 + x, y0 + y, z0 + z);
  return out;
}

Psf::Psf(Volume kernel) : kernel_(std::move(kernel)) {
  const Dims& d = kernel_.dims();
  if (d.nx % 2 == 0 || d.ny % 2 == 0 || d.nz % 2 == 0) throw Error("psf dims must be odd, got " + d.str());
  for (double w : kernel_.data())
    if (!std::isfinite(w) || w < 0.0) throw Error("psf weights must be finite and non-negative");
}

Psf Psf::delta(std::size_t n) {
  Volume k(Dims{n, n, n});
  k(n / 2, n / 2, n / 2) = 1.0;
  return Psf(std::move(k));
}

bool Psf::normalized() const { return std::abs(weight_sum() - 1.0) <= 1e-9; }

Psf Psf::normalized_copy() const {
  const double s = weight_sum();
  if (!(s > 0.0)) throw Error("cannot normalize a psf with zero total weight");
  Volume k = kernel_;
  for (double& w : k.data()) w /= s;
  Psf out(std::move(k));
  out.warning_ = warning_;
  return out;
}

Psf mirrored(const Psf& psf) {
  const Dims& d = psf.dims();
  const Volume& k = psf.kernel();
  Volume m(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) m(d.nx - 1 - x, d.ny - 1 - y, d.nz - 1 - z) = k(x, y, z);
  return Psf(std::move(m));
}

bool Psf::symmetric() const { return mirrored(*this).kernel() == kernel_; }

Psf rotate_y_90(const Psf& psf, int quarter_turns) {
  if (quarter_turns < 0 || quarter_turns > 3) throw Error("quarter_turns must be in {0,1,2,3}");
  const Dims& d = psf.dims();
  if (d.nx != d.nz) throw Error("rotate_y_90 requires kx == kz, got " + d.str());
  if (quarter_turns == 0) return psf;
  const auto c = static_cast<long>(d.nx / 2);
  const Volume& in = psf.kernel();
  Volume out(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const long dx = static_cast<long>(x) - c;
        const long dz = static_cast<long>(z) - c;
        long rx = dx, rz = dz;
        switch (quarter_turns) {
          case 1: rx = dz; rz = -dx; break;
          case 2: rx = -dx; rz = -dz; break;
          case 3: rx = -dz; rz = dx; break;
        }
        out(static_cast<std::size_t>(rx + c), y, static_cast<std::size_t>(rz + c)) = in(x, y, z);
      }
  Psf r(std::move(out));
  r.set_warning(psf.warning());
  return r;
}

void ViewSet::validate(std::size_t min_views) const {
  if (views.size() < min_views) throw ConfigError("view set needs at least " + std::to_string(min_views) + " views");
  if (psfs.size() != views.size() || angles_deg.size() != views.size())
    throw ConfigError("view set: views, psfs and angles must have equal length");
  for (const auto& v : views)
    if (v.dims() != views.front().dims()) throw ConfigError("view set: all views must share dims");
}

}  // namespace mvf
