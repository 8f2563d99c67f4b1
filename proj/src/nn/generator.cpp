#include "mvf/nn/generator.hpp"

#include <cmath>
#include <random>

#include "mvf/error.hpp"
#include "mvf/json_config.hpp"

namespace mvf::nn {

void GeneratorConfig::validate() const {
  if (levels < 1) throw ConfigError("generator.levels must be >= 1");
  if (base_channels < 1) throw ConfigError("generator.base_channels must be >= 1");
  if (max_channels < base_channels) throw ConfigError("generator.max_channels must be >= base_channels");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("generator channel counts must be >= 1");
  if (convs_per_level < 1) throw ConfigError("generator.convs_per_level must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("generator.kernel must be odd and >= 1");
  if (!(slope >= 0.0)) throw ConfigError("generator.slope must be >= 0");
}

int GeneratorConfig::channels_at(int level) const {
  long c = base_channels;
  for (int l = 0; l < level && c < max_channels; ++l) c *= 2;
  return static_cast<int>(std::min<long>(c, max_channels));
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"in_channels", c.in_channels}, {"out_channels", c.out_channels}, {"levels", c.levels},
       {"base_channels", c.base_channels}, {"max_channels", c.max_channels},
       {"convs_per_level", c.convs_per_level}, {"kernel", c.kernel}, {"slope", c.slope},
       {"norm", c.norm}, {"bias", c.bias}, {"input_residual", c.input_residual}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const char* ctx = "generator";
  cfg::reject_unknown(j,
                      {"in_channels", "out_channels", "levels", "base_channels", "max_channels", "convs_per_level",
                       "kernel", "slope", "norm", "bias", "input_residual", "seed"},
                      ctx);
  cfg::read(j, "in_channels", c.in_channels, ctx);
  cfg::read(j, "out_channels", c.out_channels, ctx);
  cfg::read(j, "levels", c.levels, ctx);
  cfg::read(j, "base_channels", c.base_channels, ctx);
  cfg::read(j, "max_channels", c.max_channels, ctx);
  cfg::read(j, "convs_per_level", c.convs_per_level, ctx);
  cfg::read(j, "kernel", c.kernel, ctx);
  cfg::read(j, "slope", c.slope, ctx);
  cfg::read(j, "norm", c.norm, ctx);
  cfg::read(j, "bias", c.bias, ctx);
  cfg::read(j, "input_residual", c.input_residual, ctx);
  cfg::read(j, "seed", c.seed, ctx);
  c.validate();
}

Generator::Generator(GeneratorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  NetParams scratch;
  auto make_unit = [&](const std::string& id, int cin, int cout, int k) {
    Unit u;
    u.conv = {cin, cout, k, 1, k / 2, cfg_.bias};
    u.w = scratch.add(id + ".w", {static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                                  static_cast<std::size_t>(k), static_cast<std::size_t>(k),
                                  static_cast<std::size_t>(k)});
    if (cfg_.bias) u.b = scratch.add(id + ".b", {static_cast<std::size_t>(cout)});
    return u;
  };
  enc_.resize(static_cast<std::size_t>(cfg_.levels));
  for (int l = 0; l < cfg_.levels; ++l) {
    int cin = l == 0 ? cfg_.in_channels : cfg_.channels_at(l - 1);
    const int c = cfg_.channels_at(l);
    for (int i = 0; i < cfg_.convs_per_level; ++i) {
      enc_[static_cast<std::size_t>(l)].push_back(
          make_unit("enc" + std::to_string(l) + ".conv" + std::to_string(i), cin, c, cfg_.kernel));
      cin = c;
    }
  }
  dec_.resize(static_cast<std::size_t>(cfg_.levels - 1));
  ups_.resize(static_cast<std::size_t>(cfg_.levels - 1));
  for (int l = cfg_.levels - 2; l >= 0; --l) {
    const int c = cfg_.channels_at(l), cup = cfg_.channels_at(l + 1);
    Up& up = ups_[static_cast<std::size_t>(l)];
    up.spec = {cup, c, cfg_.bias};
    const std::string id = "dec" + std::to_string(l) + ".up";
    up.w = scratch.add(id + ".w", {static_cast<std::size_t>(cup), static_cast<std::size_t>(c), 2, 2, 2});
    if (cfg_.bias) up.b = scratch.add(id + ".b", {static_cast<std::size_t>(c)});
    int cin = 2 * c;
    for (int i = 0; i < cfg_.convs_per_level; ++i) {
      dec_[static_cast<std::size_t>(l)].push_back(
          make_unit("dec" + std::to_string(l) + ".conv" + std::to_string(i), cin, c, cfg_.kernel));
      cin = c;
    }
  }
  head_ = make_unit("head", cfg_.channels_at(0), cfg_.out_channels, 1);
  layout_ = std::move(scratch);
}

NetParams Generator::zero_params() const {
  NetParams p = layout_;
  p.seed = cfg_.seed;
  return p;
}

NetParams Generator::init_params() const {
  NetParams p = zero_params();
  std::mt19937_64 rng(cfg_.seed);
  for (auto& t : p.tensors) {
    if (t.shape.size() != 5) continue;
    const bool up = t.id.find(".up.") != std::string::npos;
    const double fan_in = up ? static_cast<double>(t.shape[0]) : static_cast<double>(t.shape[1] * t.shape[2] * t.shape[3] * t.shape[4]);
    const double gain = t.id.rfind("head", 0) == 0 ? 1.0 : 2.0 / (1.0 + cfg_.slope * cfg_.slope);
    std::normal_distribution<double> nd(0.0, std::sqrt(gain / fan_in));
    for (double& v : t.values) v = nd(rng);
  }
  return p;
}

void Generator::check_input(const Tensor& x) const {
  if (x.channels() != cfg_.in_channels)
    throw Error("generator expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                std::to_string(x.channels()));
  const std::size_t d = cfg_.divisor();
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a)
    if (x.dims()[a] % d != 0)
      throw Error(std::string("generator input extent along ") + names[a] + " (" + std::to_string(x.dims()[a]) +
                  ") is not divisible by " + std::to_string(d));
}

Tensor Generator::unit_forward(const NetParams& p, const Unit& u, const Tensor& x, UnitRecord* rec) const {
  std::span<const double> b;
  if (cfg_.bias) b = p.values(u.b);
  Tensor a = conv3d_forward(u.conv, p.values(u.w), b, x);
  if (cfg_.norm) a = instance_norm_forward(a, 1e-5, rec ? &rec->norm : nullptr);
  Tensor y = leaky_relu_forward(a, cfg_.slope);
  if (rec) {
    rec->input = x;
    rec->act_in = std::move(a);
  }
  return y;
}

Tensor Generator::unit_backward(const NetParams& p, const Unit& u, const UnitRecord& rec, const Tensor& g,
                                NetParams& grads, bool need_input_grad) const {
  Tensor ga = leaky_relu_backward(rec.act_in, g, cfg_.slope);
  if (cfg_.norm) ga = instance_norm_backward(rec.act_in, rec.norm, ga);
  std::span<double> gb;
  if (cfg_.bias) gb = grads.values(u.b);
  return conv3d_backward(u.conv, p.values(u.w), rec.input, ga, grads.values(u.w), gb, need_input_grad);
}

Tensor Generator::forward(const NetParams& p, const Tensor& x, GeneratorRecord* rec) const {
  check_input(x);
  if (rec) {
    *rec = GeneratorRecord{};
    rec->dims = x.dims();
  }
  auto unit_rec = [&]() -> UnitRecord* {
    if (!rec) return nullptr;
    rec->units.emplace_back();
    return &rec->units.back();
  };
  std::vector<Tensor> skips;
  Tensor h = x;
  for (int l = 0; l < cfg_.levels; ++l) {
    for (const Unit& u : enc_[static_cast<std::size_t>(l)]) h = unit_forward(p, u, h, unit_rec());
    if (l + 1 < cfg_.levels) {
      skips.push_back(h);
      PoolCache* pc = nullptr;
      if (rec) pc = &rec->pools.emplace_back();
      h = maxpool2_forward(h, pc);
    }
  }
  for (int l = cfg_.levels - 2; l >= 0; --l) {
    const Up& up = ups_[static_cast<std::size_t>(l)];
    std::span<const double> b;
    if (cfg_.bias) b = p.values(up.b);
    if (rec) rec->up_inputs.push_back(h);
    Tensor u = upconv_forward(up.spec, p.values(up.w), b, h);
    h = concat_channels(u, skips[static_cast<std::size_t>(l)]);
    skips[static_cast<std::size_t>(l)] = Tensor{};
    for (const Unit& unit : dec_[static_cast<std::size_t>(l)]) h = unit_forward(p, unit, h, unit_rec());
  }
  std::span<const double> hb;
  if (cfg_.bias) hb = p.values(head_.b);
  Tensor out = conv3d_forward(head_.conv, p.values(head_.w), hb, h);
  if (rec) {
    rec->head_input = std::move(h);
    rec->valid = true;
  }
  if (cfg_.input_residual) {
    const double inv = 1.0 / cfg_.in_channels;
    for (int co = 0; co < out.channels(); ++co) {
      double* o = out.channel(co);
      for (int ci = 0; ci < x.channels(); ++ci) {
        const double* xi = x.channel(ci);
        for (std::size_t i = 0; i < x.voxels(); ++i) o[i] += inv * xi[i];
      }
    }
  }
  return out;
}

Tensor Generator::backward(const NetParams& p, const GeneratorRecord& rec, const Tensor& grad_out, NetParams& grads,
                           bool need_input_grad) const {
  if (!rec.valid) throw Error("generator backward called without a recorded forward pass");
  if (!grads.same_layout(p)) throw Error("gradient buffer layout does not match parameters");
  if (grad_out.channels() != cfg_.out_channels || grad_out.dims() != rec.dims)
    throw Error("generator backward: output gradient shape mismatch");
  std::span<double> hb;
  if (cfg_.bias) hb = grads.values(head_.b);
  Tensor g = conv3d_backward(head_.conv, p.values(head_.w), rec.head_input, grad_out, grads.values(head_.w), hb);

  std::size_t ui = rec.units.size();
  std::vector<Tensor> skip_grads(static_cast<std::size_t>(cfg_.levels - 1));
  std::size_t upi = 0;
  // Decoder in reverse: level 0 was processed last.
  for (int l = 0; l <= cfg_.levels - 2; ++l) {
    const auto& units = dec_[static_cast<std::size_t>(l)];
    for (std::size_t i = units.size(); i-- > 0;) g = unit_backward(p, units[i], rec.units[--ui], g, grads, true);
    const Up& up = ups_[static_cast<std::size_t>(l)];
    auto [gu, gs] = split_channels(g, up.spec.out_channels);
    skip_grads[static_cast<std::size_t>(l)] = std::move(gs);
    std::span<double> gb;
    if (cfg_.bias) gb = grads.values(up.b);
    const std::size_t rec_idx = rec.up_inputs.size() - 1 - upi++;
    g = upconv_backward(up.spec, p.values(up.w), rec.up_inputs[rec_idx], gu, grads.values(up.w), gb);
  }
  for (int l = cfg_.levels - 1; l >= 0; --l) {
    if (l + 1 < cfg_.levels) {
      Tensor gp = maxpool2_backward(rec.pools[static_cast<std::size_t>(l)], g);
      auto gd = gp.data();
      const auto sd = skip_grads[static_cast<std::size_t>(l)].data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += sd[i];
      g = std::move(gp);
    }
    const auto& units = enc_[static_cast<std::size_t>(l)];
    for (std::size_t i = units.size(); i-- > 0;) {
      const bool first = l == 0 && i == 0;
      g = unit_backward(p, units[i], rec.units[--ui], g, grads, !first || need_input_grad);
    }
  }
  if (need_input_grad && cfg_.input_residual) {
    const double inv = 1.0 / cfg_.in_channels;
    for (int ci = 0; ci < g.channels(); ++ci) {
      double* gi = g.channel(ci);
      for (int co = 0; co < grad_out.channels(); ++co) {
        const double* go = grad_out.channel(co);
        for (std::size_t i = 0; i < g.voxels(); ++i) gi[i] += inv * go[i];
      }
    }
  }
  return g;
}

}  // namespace mvf::nn
