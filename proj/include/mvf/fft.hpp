#pragma once

#include <complex>
#include <span>
#include <vector>

#include "mvf/volume.hpp"

// Thin wrapper over FFTW for 3D transforms in x-fastest order. Plans are
// created once per (kind, dims) with FFTW_ESTIMATE, so results are
// deterministic for a given size.
namespace mvf::fft {

using Complex = std::complex<double>;

/// Unnormalized forward complex DFT.
std::vector<Complex> forward(std::span<const Complex> data, Dims dims);
/// Inverse complex DFT, scaled by 1/N so that inverse(forward(a)) == a.
std::vector<Complex> inverse(std::span<const Complex> data, Dims dims);

/// Half spectrum of real data: (nx/2 + 1) * ny * nz coefficients.
std::vector<Complex> forward_real(std::span<const double> data, Dims dims);
/// Inverse of forward_real, scaled by 1/N.
std::vector<double> inverse_real(std::span<const Complex> spectrum, Dims dims);

std::size_t half_spectrum_size(Dims dims);

/// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}.
std::size_t good_size(std::size_t n);

}  // namespace mvf::fft
