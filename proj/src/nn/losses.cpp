#include "mvf/nn/losses.hpp"

#include <cmath>

#include "mvf/error.hpp"

namespace mvf::nn {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double l1_loss(const Tensor& a, const Tensor& b, Tensor* grad) {
  if (a.channels() != b.channels() || a.dims() != b.dims()) throw Error("l1 loss: shape mismatch");
  const auto ad = a.data(), bd = b.data();
  const double inv = 1.0 / static_cast<double>(ad.size());
  if (grad) *grad = Tensor(a.channels(), a.dims());
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double r = ad[i] - bd[i];
    s += std::abs(r);
    if (grad) grad->data()[i] = sign(r) * inv;
  }
  return s * inv;
}

Tensor degrade_stack(const Tensor& z, const std::vector<ConvolutionOperator>& ops) {
  if (z.channels() != 1) throw Error("degrade_stack expects a single-channel latent");
  Tensor out(static_cast<int>(ops.size()), z.dims());
  for (std::size_t v = 0; v < ops.size(); ++v) {
    if (ops[v].dims() != z.dims()) throw Error("degrade_stack: operator dims mismatch");
    ops[v].apply(z.channel_span(0), out.channel_span(static_cast<int>(v)));
  }
  return out;
}

double cycle_view_loss(const Tensor& z, const std::vector<ConvolutionOperator>& ops, const Tensor& views,
                       Tensor* grad, const Margin& margin) {
  if (views.channels() != static_cast<int>(ops.size()) || views.dims() != z.dims())
    throw Error("cycle loss: views do not match operators or latent dims");
  const Dims& d = z.dims();
  for (int a = 0; a < 3; ++a)
    if (2 * margin[static_cast<std::size_t>(a)] >= d[a]) throw Error("cycle loss: margin leaves no interior voxels");
  const std::size_t n = z.voxels();
  std::vector<unsigned char> inside(n, 1);
  std::size_t n_in = n;
  if (margin != Margin{0, 0, 0}) {
    n_in = 0;
    for (std::size_t k = 0; k < d.nz; ++k)
      for (std::size_t j = 0; j < d.ny; ++j)
        for (std::size_t i = 0; i < d.nx; ++i) {
          const bool in = i >= margin[0] && i + margin[0] < d.nx && j >= margin[1] && j + margin[1] < d.ny &&
                          k >= margin[2] && k + margin[2] < d.nz;
          inside[(k * d.ny + j) * d.nx + i] = in;
          n_in += in;
        }
  }
  const double inv = 1.0 / (static_cast<double>(n_in) * static_cast<double>(ops.size()));
  if (grad) *grad = Tensor(1, d);
  std::vector<double> s(n), r(n);
  double total = 0.0;
  for (std::size_t v = 0; v < ops.size(); ++v) {
    ops[v].apply(z.channel_span(0), s);
    const double* x = views.channel(static_cast<int>(v));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = s[i] - x[i];
      if (inside[i]) acc += std::abs(e);
      s[i] = inside[i] ? sign(e) : 0.0;
    }
    total += acc;
    if (grad) {
      ops[v].apply_adjoint(s, r);
      double* g = grad->channel(0);
      for (std::size_t i = 0; i < n; ++i) g[i] += r[i] * inv;
    }
  }
  return total * inv;
}

double gradient_loss(const Tensor& z, Tensor* grad) {
  const Dims& d = z.dims();
  if (grad) *grad = Tensor(z.channels(), d);
  const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] < 2) continue;
    const double n_axis = static_cast<double>((d[a] - 1) * (d.size() / d[a]) * static_cast<std::size_t>(z.channels()));
    double acc = 0.0;
    for (int c = 0; c < z.channels(); ++c) {
      const double* zc = z.channel(c);
      double* gc = grad ? grad->channel(c) : nullptr;
      for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
          for (std::size_t i = 0; i < d.nx; ++i) {
            const std::size_t pos[3] = {i, j, k};
            if (pos[a] + 1 >= d[a]) continue;
            const std::size_t idx = (k * d.ny + j) * d.nx + i;
            const double diff = zc[idx + stride[a]] - zc[idx];
            acc += diff * diff;
            if (gc) {
              gc[idx + stride[a]] += 2.0 * diff / n_axis;
              gc[idx] -= 2.0 * diff / n_axis;
            }
          }
    }
    total += acc / n_axis;
  }
  return total;
}

double lsgan_discriminator_loss(const std::vector<double>& real, const std::vector<double>& fake,
                                std::vector<double>* grad_real, std::vector<double>* grad_fake) {
  if (real.size() != fake.size()) throw Error("lsgan: real and fake score counts differ");
  double l = 0.0;
  if (grad_real) grad_real->assign(real.size(), 0.0);
  if (grad_fake) grad_fake->assign(fake.size(), 0.0);
  for (std::size_t j = 0; j < real.size(); ++j) {
    l += 0.5 * (real[j] - 1.0) * (real[j] - 1.0) + 0.5 * fake[j] * fake[j];
    if (grad_real) (*grad_real)[j] = real[j] - 1.0;
    if (grad_fake) (*grad_fake)[j] = fake[j];
  }
  return l;
}

double lsgan_generator_loss(const std::vector<double>& fake, std::vector<double>* grad_fake) {
  double l = 0.0;
  if (grad_fake) grad_fake->assign(fake.size(), 0.0);
  for (std::size_t j = 0; j < fake.size(); ++j) {
    l += (fake[j] - 1.0) * (fake[j] - 1.0);
    if (grad_fake) (*grad_fake)[j] = 2.0 * (fake[j] - 1.0);
  }
  return l;
}

double total_generator_objective(const LossParts& parts, TrainMode mode, double lambda_cycle,
                                 double lambda_gradient) {
  if (mode == TrainMode::semi) return parts.adversarial + lambda_cycle * parts.cycle;
  return lambda_cycle * parts.cycle + lambda_gradient * parts.gradient;
}

}  // namespace mvf::nn
