#include "mvf/convolution.hpp"

#include <algorithm>
#include <cmath>

#include "mvf/error.hpp"

namespace mvf {

namespace {

std::size_t wrap(long d, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((d % m) + m) % m);
}

}  // namespace

ConvolutionOperator::ConvolutionOperator(const Psf& psf, Dims dims, BoundaryMode mode) : dims_(dims), mode_(mode) {
  const Dims& k = psf.dims();
  if (k.nx > dims.nx || k.ny > dims.ny || k.nz > dims.nz)
    throw Error("psf larger than volume (" + k.str() + " vs " + dims.str() + ")");
  if (mode == BoundaryMode::circular) {
    padded_ = dims;
  } else {
    padded_ = {fft::good_size(dims.nx + k.nx - 1), fft::good_size(dims.ny + k.ny - 1),
               fft::good_size(dims.nz + k.nz - 1)};
  }
  const Dims c = psf.center();
  std::vector<double> embedded(padded_.size(), 0.0);
  const Volume& w = psf.kernel();
  for (std::size_t z = 0; z < k.nz; ++z)
    for (std::size_t y = 0; y < k.ny; ++y)
      for (std::size_t x = 0; x < k.nx; ++x) {
        const std::size_t px = wrap(static_cast<long>(x) - static_cast<long>(c.nx), padded_.nx);
        const std::size_t py = wrap(static_cast<long>(y) - static_cast<long>(c.ny), padded_.ny);
        const std::size_t pz = wrap(static_cast<long>(z) - static_cast<long>(c.nz), padded_.nz);
        // Kernels as large as a circular volume can alias onto one bin; sum them.
        embedded[(pz * padded_.ny + py) * padded_.nx + px] += w(x, y, z);
      }
  spectrum_ = fft::forward_real(embedded, padded_);
}

void ConvolutionOperator::run(std::span<const double> in, std::span<double> out, bool adjoint) const {
  if (in.size() != dims_.size() || out.size() != dims_.size()) throw Error("convolution: input does not match operator dims");
  for (double v : in)
    if (!std::isfinite(v)) throw Error("convolution: non-finite input value");

  std::vector<double> buffer;
  if (mode_ == BoundaryMode::circular) {
    buffer.assign(in.begin(), in.end());
  } else {
    buffer.assign(padded_.size(), 0.0);
    for (std::size_t z = 0; z < dims_.nz; ++z)
      for (std::size_t y = 0; y < dims_.ny; ++y)
        std::copy_n(in.data() + (z * dims_.ny + y) * dims_.nx, dims_.nx,
                    buffer.data() + (z * padded_.ny + y) * padded_.nx);
  }
  auto spec = fft::forward_real(buffer, padded_);
  if (adjoint) {
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= std::conj(spectrum_[i]);
  } else {
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= spectrum_[i];
  }
  auto result = fft::inverse_real(spec, padded_);
  if (mode_ == BoundaryMode::circular) {
    std::copy(result.begin(), result.end(), out.begin());
  } else {
    for (std::size_t z = 0; z < dims_.nz; ++z)
      for (std::size_t y = 0; y < dims_.ny; ++y)
        std::copy_n(result.data() + (z * padded_.ny + y) * padded_.nx, dims_.nx,
                    out.data() + (z * dims_.ny + y) * dims_.nx);
  }
}

void ConvolutionOperator::apply(std::span<const double> in, std::span<double> out) const { run(in, out, false); }
void ConvolutionOperator::apply_adjoint(std::span<const double> in, std::span<double> out) const { run(in, out, true); }

Volume ConvolutionOperator::apply(const Volume& v) const {
  Volume out(v.dims());
  run(v.data(), out.data(), false);
  return out;
}

Volume ConvolutionOperator::apply_adjoint(const Volume& v) const {
  Volume out(v.dims());
  run(v.data(), out.data(), true);
  return out;
}

Volume convolve(const Volume& v, const Psf& psf, BoundaryMode mode) {
  return ConvolutionOperator(psf, v.dims(), mode).apply(v);
}

Volume correlate(const Volume& v, const Psf& psf, BoundaryMode mode) {
  return ConvolutionOperator(psf, v.dims(), mode).apply_adjoint(v);
}

}  // namespace mvf
