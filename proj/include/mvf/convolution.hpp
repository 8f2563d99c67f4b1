#pragma once

#include <span>
#include <vector>

#include "mvf/fft.hpp"
#include "mvf/volume.hpp"

namespace mvf {

/// FFT convolution with one fixed kernel over volumes of one fixed size.
///
/// The kernel spectrum is computed once, so repeated applications (the
/// Richardson-Lucy loop, the cycle loss head) cost two transforms each.
/// apply() computes s = v * h; apply_adjoint() computes the correlation
/// v (x) h, which is the exact adjoint of apply() for either boundary mode.
class ConvolutionOperator {
 public:
  ConvolutionOperator(const Psf& psf, Dims dims, BoundaryMode mode = BoundaryMode::circular);

  Volume apply(const Volume& v) const;
  Volume apply_adjoint(const Volume& v) const;
  void apply(std::span<const double> in, std::span<double> out) const;
  void apply_adjoint(std::span<const double> in, std::span<double> out) const;

  const Dims& dims() const { return dims_; }
  const Dims& padded_dims() const { return padded_; }
  BoundaryMode mode() const { return mode_; }

 private:
  void run(std::span<const double> in, std::span<double> out, bool adjoint) const;

  Dims dims_;
  Dims padded_;
  BoundaryMode mode_;
  std::vector<fft::Complex> spectrum_;
};

Volume convolve(const Volume& v, const Psf& psf, BoundaryMode mode = BoundaryMode::circular);
Volume correlate(const Volume& v, const Psf& psf, BoundaryMode mode = BoundaryMode::circular);

}  // namespace mvf
