#pragma once

#include <array>
#include <vector>

#include "mvf/convolution.hpp"
#include "mvf/nn/tensor.hpp"

// Scalar losses with their gradients. Each grad argument, when non-null, is
// overwritten with d(loss)/d(input) for the first tensor argument.
namespace mvf::nn {

/// mean |a - b|; the subgradient at 0 is 0.
double l1_loss(const Tensor& a, const Tensor& b, Tensor* grad = nullptr);

using Margin = std::array<std::size_t, 3>;

/// Mean over views of mean |conv(z, h_v) - x_v|. z has one channel;
/// views has one channel per operator. A nonzero margin restricts the mean
/// to voxels at least that far from the tile faces along each axis.
double cycle_view_loss(const Tensor& z, const std::vector<ConvolutionOperator>& ops, const Tensor& views,
                       Tensor* grad = nullptr, const Margin& margin = {0, 0, 0});

/// Stack of blurred copies conv(z, h_v), one channel per operator.
Tensor degrade_stack(const Tensor& z, const std::vector<ConvolutionOperator>& ops);

/// Sum over axes of (1/n_axis) * sum of squared forward differences, where
/// n_axis counts the differences along that axis. Axes of extent 1 add 0.
double gradient_loss(const Tensor& z, Tensor* grad = nullptr);

/// Sum over scales of 0.5*(r-1)^2 + 0.5*f^2.
double lsgan_discriminator_loss(const std::vector<double>& real, const std::vector<double>& fake,
                                std::vector<double>* grad_real = nullptr, std::vector<double>* grad_fake = nullptr);
/// Sum over scales of (f-1)^2.
double lsgan_generator_loss(const std::vector<double>& fake, std::vector<double>* grad_fake = nullptr);

enum class TrainMode { self, semi };

struct LossParts {
  double adversarial = 0.0;
  double cycle = 0.0;
  double gradient = 0.0;
};

/// semi: adversarial + lambda_cycle * cycle; self: lambda_cycle * cycle +
/// lambda_gradient * gradient.
double total_generator_objective(const LossParts& parts, TrainMode mode, double lambda_cycle, double lambda_gradient);

}  // namespace mvf::nn
