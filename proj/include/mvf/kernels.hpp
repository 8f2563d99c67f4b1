#pragma once

#include "mvf/volume.hpp"

// Spatial-domain kernels in two flavours: a plain serial loop kept as the
// reference, and an OpenMP version parallel over z-slices. Both produce
// bit-identical results because each output voxel is accumulated in the same
// order by exactly one thread.
namespace mvf::kernels {

/// out(p) = sum_d h(d) v(p - d)  (or v(p + d) when adjoint is set).
Volume direct_convolve_serial(const Volume& v, const Psf& psf, BoundaryMode mode, bool adjoint = false);
Volume direct_convolve_parallel(const Volume& v, const Psf& psf, BoundaryMode mode, bool adjoint = false);

/// Windowed Shannon entropy by explicit per-voxel histogramming.
Volume local_entropy_serial(const Volume& v, int window_radius, int histogram_bins);

/// Bin index of every voxel for equal-width bins over [lo, hi].
int bin_of(double value, double lo, double hi, int bins);

}  // namespace mvf::kernels
