#include "mvf/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mvf/error.hpp"

namespace mvf::nn {

Tensor::Tensor(int channels, Dims dims, double fill) : channels_(channels), dims_(dims) {
  if (channels < 1 || dims.nx == 0 || dims.ny == 0 || dims.nz == 0)
    throw Error("tensor shape must be positive, got " + std::to_string(channels) + "x" + dims.str());
  data_.assign(static_cast<std::size_t>(channels) * dims.size(), fill);
}

Tensor Tensor::from_volumes(const std::vector<Volume>& channels) {
  if (channels.empty()) throw Error("tensor needs at least one channel");
  Tensor t(static_cast<int>(channels.size()), channels.front().dims());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].dims() != t.dims()) throw Error("tensor channels must share dims");
    std::copy(channels[c].data().begin(), channels[c].data().end(), t.channel(static_cast<int>(c)));
  }
  return t;
}

Tensor Tensor::from_volume(const Volume& v) { return from_volumes({v}); }

Volume Tensor::channel_volume(int c) const {
  return Volume(dims_, std::vector<double>(channel(c), channel(c) + voxels()));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor crop(const Tensor& t, std::size_t x0, std::size_t y0, std::size_t z0, Dims size) {
  const Dims& d = t.dims();
  if (x0 + size.nx > d.nx || y0 + size.ny > d.ny || z0 + size.nz > d.nz)
    throw Error("crop " + size.str() + " exceeds tensor " + d.str());
  Tensor out(t.channels(), size);
  for (int c = 0; c < t.channels(); ++c)
    for (std::size_t z = 0; z < size.nz; ++z)
      for (std::size_t y = 0; y < size.ny; ++y)
        std::copy_n(t.channel(c) + ((z0 + z) * d.ny + y0 + y) * d.nx + x0, size.nx,
                    out.channel(c) + (z * size.ny + y) * size.nx);
  return out;
}

Tensor crop_periodic(const Tensor& t, std::size_t x0, std::size_t y0, std::size_t z0, Dims size) {
  const Dims& d = t.dims();
  Tensor out(t.channels(), size);
  for (int c = 0; c < t.channels(); ++c)
    for (std::size_t z = 0; z < size.nz; ++z)
      for (std::size_t y = 0; y < size.ny; ++y)
        for (std::size_t x = 0; x < size.nx; ++x)
          out.at(c, x, y, z) = t.at(c, (x0 + x) % d.nx, (y0 + y) % d.ny, (z0 + z) % d.nz);
  return out;
}

void add_at(Tensor& full, const Tensor& part, std::size_t x0, std::size_t y0, std::size_t z0) {
  const Dims& d = full.dims();
  const Dims& s = part.dims();
  if (part.channels() != full.channels() || x0 + s.nx > d.nx || y0 + s.ny > d.ny || z0 + s.nz > d.nz)
    throw Error("add_at: part does not fit");
  for (int c = 0; c < part.channels(); ++c)
    for (std::size_t z = 0; z < s.nz; ++z)
      for (std::size_t y = 0; y < s.ny; ++y) {
        double* dst = full.channel(c) + ((z0 + z) * d.ny + y0 + y) * d.nx + x0;
        const double* src = part.channel(c) + (z * s.ny + y) * s.nx;
        for (std::size_t x = 0; x < s.nx; ++x) dst[x] += src[x];
      }
}

}  // namespace mvf::nn
