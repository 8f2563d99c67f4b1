#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mvf {

/// Voxel counts along x, y, z. Storage order is x fastest, then y, then z.
struct Dims {
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;

  std::size_t size() const { return nx * ny * nz; }
  std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  std::size_t& operator[](int axis) { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
  std::string str() const;
};

enum class BoundaryMode { circular, zero_pad };

BoundaryMode parse_boundary(const std::string& name);
std::string to_string(BoundaryMode mode);

/// Dense single-channel 3D scalar field.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, double fill = 0.0);
  Volume(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * dims_.ny + y) * dims_.nx + x;
  }
  double& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double sum() const;
  double min() const;
  double max() const;
  bool all_finite() const;

  bool operator==(const Volume&) const = default;

 private:
  Dims dims_{0, 0, 0};
  std::vector<double> data_;
};

double dot(const Volume& a, const Volume& b);
double max_abs_diff(const Volume& a, const Volume& b);
void clamp_nonnegative(Volume& v);
/// Axis-aligned sub-block starting at (x0, y0, z0).
Volume crop(const Volume& v, std::size_t x0, std::size_t y0, std::size_t z0, Dims size);

/// Small non-negative 3D kernel with odd extent along every axis.
class Psf {
 public:
  Psf() = default;
  /// Throws if any extent is even or any weight is negative or non-finite.
  explicit Psf(Volume kernel);
  /// Single unit weight at the center of an n x n x n kernel.
  static Psf delta(std::size_t n = 1);

  const Volume& kernel() const { return kernel_; }
  const Dims& dims() const { return kernel_.dims(); }
  Dims center() const { return {kernel_.dims().nx / 2, kernel_.dims().ny / 2, kernel_.dims().nz / 2}; }
  double weight_sum() const { return kernel_.sum(); }
  bool normalized() const;
  Psf normalized_copy() const;
  bool symmetric() const;

  const std::string& warning() const { return warning_; }
  void set_warning(std::string w) { warning_ = std::move(w); }

  bool operator==(const Psf& o) const { return kernel_ == o.kernel_; }

 private:
  Volume kernel_;
  std::string warning_;
};

/// Point-mirrored kernel, h'(d) = h(-d).
Psf mirrored(const Psf& psf);

/// Rotates a kernel by quarter_turns * 90 degrees about +y (right-handed).
///
/// With offsets d relative to the kernel center, a weight at d moves to R d,
/// where R = [[0,0,1],[0,1,0],[-1,0,0]] for one turn:
///
///   turns | x'   | y' | z'
///   ------+------+----+-----
///     0   |  x   | y  |  z
///     1   |  z   | y  | -x
///     2   | -x   | y  | -z
///     3   | -z   | y  |  x
///
/// Requires kx == kz.
Psf rotate_y_90(const Psf& psf, int quarter_turns);

/// Registered multi-view bundle sharing one latent-image frame.
struct ViewSet {
  std::vector<Volume> views;
  std::vector<Psf> psfs;
  std::vector<int> angles_deg;

  std::size_t size() const { return views.size(); }
  const Dims& dims() const { return views.front().dims(); }
  /// Throws ConfigError on length or dims mismatch, or fewer than min_views.
  void validate(std::size_t min_views = 2) const;
};

}  // namespace mvf
