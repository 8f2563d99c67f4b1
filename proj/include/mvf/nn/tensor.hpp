#pragma once

#include <span>
#include <vector>

#include "mvf/volume.hpp"

namespace mvf::nn {

/// Multi-channel 3D activation, channel-major; within a channel the layout
/// matches Volume (x fastest).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, Dims dims, double fill = 0.0);

  int channels() const { return channels_; }
  const Dims& dims() const { return dims_; }
  std::size_t voxels() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * voxels(); }
  const double* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * voxels(); }
  std::span<double> channel_span(int c) { return {channel(c), voxels()}; }
  std::span<const double> channel_span(int c) const { return {channel(c), voxels()}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& at(int c, std::size_t x, std::size_t y, std::size_t z) {
    return data_[static_cast<std::size_t>(c) * voxels() + (z * dims_.ny + y) * dims_.nx + x];
  }
  double at(int c, std::size_t x, std::size_t y, std::size_t z) const {
    return data_[static_cast<std::size_t>(c) * voxels() + (z * dims_.ny + y) * dims_.nx + x];
  }

  static Tensor from_volumes(const std::vector<Volume>& channels);
  static Tensor from_volume(const Volume& v);
  Volume channel_volume(int c) const;
  bool all_finite() const;
  void fill(double v);

 private:
  int channels_ = 0;
  Dims dims_{0, 0, 0};
  std::vector<double> data_;
};

Tensor crop(const Tensor& t, std::size_t x0, std::size_t y0, std::size_t z0, Dims size);
/// Like crop, but coordinates wrap around so any origin is valid.
Tensor crop_periodic(const Tensor& t, std::size_t x0, std::size_t y0, std::size_t z0, Dims size);
/// full(:, x0+.., y0+.., z0+..) += part
void add_at(Tensor& full, const Tensor& part, std::size_t x0, std::size_t y0, std::size_t z0);

}  // namespace mvf::nn
