#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mvf/nn/tensor.hpp"

// Layer primitives with hand-written reverse passes. Forward functions are
// pure; backward functions take whatever the forward pass saved, accumulate
// parameter gradients into the given spans and return the input gradient.
namespace mvf::nn {

/// 3D convolution (cross-correlation, as in common deep-learning
/// frameworks). Weights are laid out [out][in][kz][ky][kx].
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  bool bias = true;

  Dims output_dims(const Dims& in) const;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel * kernel;
  }
};

Tensor conv3d_forward(const ConvSpec& spec, std::span<const double> weight, std::span<const double> bias,
                      const Tensor& in);
/// Returns the input gradient (empty when need_input_grad is false).
Tensor conv3d_backward(const ConvSpec& spec, std::span<const double> weight, const Tensor& in,
                       const Tensor& grad_out, std::span<double> grad_weight, std::span<double> grad_bias,
                       bool need_input_grad = true);

/// Transposed convolution with kernel 2 and stride 2 (exact 2x upsampling).
/// Weights are laid out [in][out][kz][ky][kx].
struct UpConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  bool bias = true;

  std::size_t weight_count() const { return static_cast<std::size_t>(in_channels) * out_channels * 8; }
};

Tensor upconv_forward(const UpConvSpec& spec, std::span<const double> weight, std::span<const double> bias,
                      const Tensor& in);
Tensor upconv_backward(const UpConvSpec& spec, std::span<const double> weight, const Tensor& in,
                       const Tensor& grad_out, std::span<double> grad_weight, std::span<double> grad_bias);

/// Per-channel normalization without affine parameters.
/// A zero channel maps to zero through the epsilon guard.
struct NormCache {
  std::vector<double> inv_std;
};
Tensor instance_norm_forward(const Tensor& in, double eps, NormCache* cache);
/// y is the forward output.
Tensor instance_norm_backward(const Tensor& y, const NormCache& cache, const Tensor& grad_y);

Tensor leaky_relu_forward(const Tensor& in, double slope);
/// pre is the forward input; derivative at 0 is taken as the slope.
Tensor leaky_relu_backward(const Tensor& pre, const Tensor& grad_out, double slope);

/// 2x2x2 max pooling with stride 2; requires even dims.
struct PoolCache {
  std::vector<std::uint8_t> argmax;
  Dims in_dims;
};
Tensor maxpool2_forward(const Tensor& in, PoolCache* cache);
Tensor maxpool2_backward(const PoolCache& cache, const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first);

}  // namespace mvf::nn
