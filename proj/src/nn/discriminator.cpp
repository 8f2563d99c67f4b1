#include "mvf/nn/discriminator.hpp"

#include <cmath>

#include "mvf/error.hpp"
#include "mvf/json_config.hpp"

namespace mvf::nn {

void DiscriminatorConfig::validate() const {
  if (n_scales < 1) throw ConfigError("discriminator.n_scales must be >= 1");
  if (patch_dims.size() != static_cast<std::size_t>(n_scales))
    throw ConfigError("discriminator.patch_dims must list one entry per scale");
  if (depth < 1) throw ConfigError("discriminator.depth must be >= 1");
  if (base_channels < 1 || max_channels < base_channels)
    throw ConfigError("discriminator channel counts must satisfy 1 <= base <= max");
  if (!(slope >= 0.0)) throw ConfigError("discriminator.slope must be >= 0");
  for (const Dims& d : patch_dims)
    if (d.size() == 0) throw ConfigError("discriminator patch dims must be positive");
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  nlohmann::json pd = nlohmann::json::array();
  for (const Dims& d : c.patch_dims) pd.push_back({d.nx, d.ny, d.nz});
  j = {{"n_scales", c.n_scales}, {"patch_dims", pd}, {"depth", c.depth}, {"base_channels", c.base_channels},
       {"max_channels", c.max_channels}, {"slope", c.slope}, {"norm", c.norm}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  const char* ctx = "discriminator";
  cfg::reject_unknown(j, {"n_scales", "patch_dims", "depth", "base_channels", "max_channels", "slope", "norm", "seed"},
                      ctx);
  cfg::read(j, "n_scales", c.n_scales, ctx);
  if (j.contains("patch_dims")) {
    std::vector<std::vector<std::size_t>> pd;
    cfg::read(j, "patch_dims", pd, ctx);
    c.patch_dims.clear();
    for (const auto& d : pd) {
      if (d.size() != 3) throw ConfigError("discriminator.patch_dims entries must be [nx, ny, nz]");
      c.patch_dims.push_back({d[0], d[1], d[2]});
    }
  }
  cfg::read(j, "depth", c.depth, ctx);
  cfg::read(j, "base_channels", c.base_channels, ctx);
  cfg::read(j, "max_channels", c.max_channels, ctx);
  cfg::read(j, "slope", c.slope, ctx);
  cfg::read(j, "norm", c.norm, ctx);
  cfg::read(j, "seed", c.seed, ctx);
  c.validate();
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, int scale) {
  cfg.validate();
  if (scale < 0 || scale >= cfg.n_scales) throw Error("discriminator scale index out of range");
  patch_ = cfg.patch_dims[static_cast<std::size_t>(scale)];
  slope_ = cfg.slope;
  seed_ = cfg.seed + 1000003ULL * static_cast<std::uint64_t>(scale);
  const std::string prefix = "d" + std::to_string(scale) + ".";
  int cin = 1, c = cfg.base_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    Unit u;
    u.conv = {cin, c, 3, 2, 1, true};
    u.norm = cfg.norm && i >= 1;
    const std::string id = prefix + "conv" + std::to_string(i);
    u.w = layout_.add(id + ".w", {static_cast<std::size_t>(c), static_cast<std::size_t>(cin), 3, 3, 3});
    u.b = layout_.add(id + ".b", {static_cast<std::size_t>(c)});
    units_.push_back(u);
    cin = c;
    c = std::min(2 * c, cfg.max_channels);
  }
  head_.conv = {cin, 1, 1, 1, 0, true};
  head_.w = layout_.add(prefix + "head.w", {1, static_cast<std::size_t>(cin), 1, 1, 1});
  head_.b = layout_.add(prefix + "head.b", {1});
  layout_.seed = seed_;
  // Fails early when the patch is too small for the stack.
  Dims d = patch_;
  for (const Unit& u : units_) d = u.conv.output_dims(d);
}

NetParams Discriminator::zero_params() const { return layout_; }

NetParams Discriminator::init_params() const {
  NetParams p = layout_;
  std::mt19937_64 rng(seed_);
  for (auto& t : p.tensors) {
    if (t.shape.size() != 5) continue;
    const double fan_in = static_cast<double>(t.shape[1] * t.shape[2] * t.shape[3] * t.shape[4]);
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / ((1.0 + slope_ * slope_) * fan_in)));
    for (double& v : t.values) v = nd(rng);
  }
  return p;
}

double Discriminator::forward(const NetParams& p, const Tensor& patch, DiscriminatorRecord* rec) const {
  if (patch.channels() != 1 || patch.dims() != patch_)
    throw Error("discriminator expects a 1x" + patch_.str() + " patch, got " + std::to_string(patch.channels()) +
                "x" + patch.dims().str());
  if (rec) *rec = DiscriminatorRecord{};
  Tensor h = patch;
  for (const Unit& u : units_) {
    Tensor a = conv3d_forward(u.conv, p.values(u.w), p.values(u.b), h);
    NormCache nc;
    if (u.norm) a = instance_norm_forward(a, 1e-5, &nc);
    Tensor y = leaky_relu_forward(a, slope_);
    if (rec) {
      rec->inputs.push_back(std::move(h));
      rec->act_in.push_back(std::move(a));
      rec->norms.push_back(std::move(nc));
    }
    h = std::move(y);
  }
  const Tensor s = conv3d_forward(head_.conv, p.values(head_.w), p.values(head_.b), h);
  double score = 0.0;
  for (double v : s.data()) score += v;
  score /= static_cast<double>(s.size());
  if (rec) {
    rec->head_input = std::move(h);
    rec->valid = true;
  }
  return score;
}

Tensor Discriminator::backward(const NetParams& p, const DiscriminatorRecord& rec, double grad_score,
                               NetParams& grads) const {
  if (!rec.valid) throw Error("discriminator backward called without a recorded forward pass");
  if (!grads.same_layout(p)) throw Error("gradient buffer layout does not match parameters");
  const Dims hd = rec.head_input.dims();
  Tensor gs(1, hd, grad_score / static_cast<double>(hd.size()));
  Tensor g = conv3d_backward(head_.conv, p.values(head_.w), rec.head_input, gs, grads.values(head_.w),
                             grads.values(head_.b));
  for (std::size_t i = units_.size(); i-- > 0;) {
    const Unit& u = units_[i];
    Tensor ga = leaky_relu_backward(rec.act_in[i], g, slope_);
    if (u.norm) ga = instance_norm_backward(rec.act_in[i], rec.norms[i], ga);
    g = conv3d_backward(u.conv, p.values(u.w), rec.inputs[i], ga, grads.values(u.w), grads.values(u.b), true);
  }
  return g;
}

Tensor crop_scale_patch(const Tensor& tile, const DiscriminatorConfig& cfg, int scale, std::mt19937_64& rng,
                        std::size_t* offset) {
  if (scale < 0 || scale >= cfg.n_scales) throw Error("patch scale index out of range");
  const Dims& pd = cfg.patch_dims[static_cast<std::size_t>(scale)];
  const Dims& td = tile.dims();
  for (int a = 0; a < 3; ++a)
    if (pd[a] > td[a]) throw Error("patch " + pd.str() + " larger than tile " + td.str());
  if (scale == 0) {
    if (offset) offset[0] = offset[1] = offset[2] = 0;
    return tile;
  }
  std::size_t o[3];
  for (int a = 0; a < 3; ++a) {
    std::uniform_int_distribution<std::size_t> u(0, td[a] - pd[a]);
    o[a] = u(rng);
    if (offset) offset[a] = o[a];
  }
  return crop(tile, o[0], o[1], o[2], pd);
}

}  // namespace mvf::nn
