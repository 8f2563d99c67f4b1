#include "mvf/nn/train.hpp"

#include "mvf/nn/infer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "mvf/error.hpp"
#include "mvf/io.hpp"
#include "mvf/json_config.hpp"
#include "mvf/nn/infer.hpp"

namespace mvf::nn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lambda_cycle >= 0.0)) throw ConfigError("train.lambda_cycle must be >= 0");
  if (!(lambda_gradient >= 0.0)) throw ConfigError("train.lambda_gradient must be >= 0");
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (batch != 1) throw ConfigError("train.batch must be 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (tile_dims.size() == 0) throw ConfigError("train.tile_dims must be positive");
  if (!(gt_split > 0.0 && gt_split < 1.0)) throw ConfigError("train.gt_split must lie in (0, 1)");
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "self") return TrainMode::self;
  if (s == "semi") return TrainMode::semi;
  throw ConfigError("unknown training mode '" + s + "' (expected self or semi)");
}

std::string to_string(TrainMode m) { return m == TrainMode::self ? "self" : "semi"; }

void to_json(json& j, const TrainConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"lambda_cycle", c.lambda_cycle},
       {"lambda_gradient", c.lambda_gradient},
       {"lr", c.adam.lr},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"eps", c.adam.eps},
       {"batch", c.batch},
       {"epochs", c.epochs},
       {"tile_dims", {c.tile_dims.nx, c.tile_dims.ny, c.tile_dims.nz}},
       {"steps_per_epoch", c.steps_per_epoch},
       {"seed", c.seed},
       {"gt_split", c.gt_split},
       {"boundary", to_string(c.boundary)},
       {"periodic_crops", c.periodic_crops}};
}

void from_json(const json& j, TrainConfig& c) {
  const char* ctx = "train";
  cfg::reject_unknown(j,
                      {"mode", "lambda_cycle", "lambda_gradient", "lr", "beta1", "beta2", "eps", "batch", "epochs",
                       "tile_dims", "steps_per_epoch", "seed", "gt_split", "boundary", "periodic_crops"},
                      ctx);
  std::string mode = to_string(c.mode), boundary = to_string(c.boundary);
  cfg::read(j, "mode", mode, ctx);
  c.mode = parse_train_mode(mode);
  cfg::read(j, "lambda_cycle", c.lambda_cycle, ctx);
  cfg::read(j, "lambda_gradient", c.lambda_gradient, ctx);
  cfg::read(j, "lr", c.adam.lr, ctx);
  cfg::read(j, "beta1", c.adam.beta1, ctx);
  cfg::read(j, "beta2", c.adam.beta2, ctx);
  cfg::read(j, "eps", c.adam.eps, ctx);
  cfg::read(j, "batch", c.batch, ctx);
  cfg::read(j, "epochs", c.epochs, ctx);
  if (j.contains("tile_dims")) {
    std::vector<std::size_t> t;
    cfg::read(j, "tile_dims", t, ctx);
    if (t.size() != 3) throw ConfigError("train.tile_dims must be [nx, ny, nz]");
    c.tile_dims = {t[0], t[1], t[2]};
  }
  cfg::read(j, "steps_per_epoch", c.steps_per_epoch, ctx);
  cfg::read(j, "seed", c.seed, ctx);
  cfg::read(j, "gt_split", c.gt_split, ctx);
  cfg::read(j, "boundary", boundary, ctx);
  cfg::read(j, "periodic_crops", c.periodic_crops, ctx);
  try {
    c.boundary = parse_boundary(boundary);
  } catch (const Error& e) {
    throw ConfigError(std::string("train.boundary: ") + e.what());
  }
  c.validate();
}

std::string history_csv(const std::vector<EpochRecord>& history, int n_scales) {
  std::string s = "epoch,cycle,adv_g";
  for (int j = 0; j < n_scales; ++j) s += ",adv_d_s" + std::to_string(j);
  s += ",grad_loss,wall_time\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    s += buf;
  };
  for (const auto& r : history) {
    s += std::to_string(r.epoch);
    num(r.cycle);
    num(r.adv_g);
    for (int j = 0; j < n_scales; ++j) num(j < static_cast<int>(r.adv_d.size()) ? r.adv_d[static_cast<std::size_t>(j)] : 0.0);
    num(r.grad_loss);
    num(r.wall_time);
    s += '\n';
  }
  return s;
}

namespace {

std::mt19937_64 patch_rng(std::uint64_t crop_seed, int scale, bool real) {
  return std::mt19937_64(sim::mix_seed(crop_seed, 2 * static_cast<std::uint64_t>(scale) + (real ? 1 : 0)));
}

void axpy(Tensor& y, double a, const Tensor& x) {
  auto yd = y.data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += a * xd[i];
}

}  // namespace

double generator_objective(const Generator& gen, const NetParams& gp, const std::vector<Discriminator>& discs,
                           const std::vector<NetParams>& dps, const DiscriminatorConfig& dcfg, const StepData& data,
                           const ObjectiveWeights& w, std::uint64_t crop_seed, NetParams* grads, LossParts* parts,
                           Tensor* z_out) {
  if (!data.views || !data.ops) throw Error("generator objective needs views and operators");
  const bool need = grads != nullptr;
  LossParts lp;
  double total = 0.0;
  {
    GeneratorRecord rec;
    Tensor z = gen.forward(gp, *data.views, need ? &rec : nullptr);
    Tensor gz(1, z.dims());
    Tensor g;
    lp.cycle = cycle_view_loss(z, *data.ops, *data.views, need ? &g : nullptr, data.margin);
    total += w.lambda_cycle * lp.cycle;
    if (need) axpy(gz, w.lambda_cycle, g);
    const bool grad_term = w.lambda_gradient > 0.0;
    lp.gradient = gradient_loss(z, need && grad_term ? &g : nullptr);
    if (grad_term) {
      total += w.lambda_gradient * lp.gradient;
      if (need) axpy(gz, w.lambda_gradient, g);
    }
    if (w.adversarial) {
      if (discs.size() != dps.size() || static_cast<int>(discs.size()) != dcfg.n_scales)
        throw Error("generator objective: discriminator count mismatch");
      std::vector<double> fake(discs.size());
      std::vector<DiscriminatorRecord> drec(discs.size());
      std::vector<std::array<std::size_t, 3>> off(discs.size());
      for (std::size_t j = 0; j < discs.size(); ++j) {
        auto rng = patch_rng(crop_seed, static_cast<int>(j), false);
        const Tensor patch = crop_scale_patch(z, dcfg, static_cast<int>(j), rng, off[j].data());
        fake[j] = discs[j].forward(dps[j], patch, need ? &drec[j] : nullptr);
      }
      std::vector<double> gf;
      lp.adversarial = lsgan_generator_loss(fake, &gf);
      total += lp.adversarial;
      if (need)
        for (std::size_t j = 0; j < discs.size(); ++j) {
          NetParams scratch = dps[j].zeros_like();
          const Tensor gpatch = discs[j].backward(dps[j], drec[j], gf[j], scratch);
          add_at(gz, gpatch, off[j][0], off[j][1], off[j][2]);
        }
    }
    if (need) gen.backward(gp, rec, gz, *grads);
    if (z_out) *z_out = std::move(z);
  }
  if (data.z_real) {
    const Tensor y = degrade_stack(*data.z_real, *data.ops);
    GeneratorRecord rec;
    const Tensor z2 = gen.forward(gp, y, need ? &rec : nullptr);
    Tensor g;
    const double l = l1_loss(z2, *data.z_real, need ? &g : nullptr);
    lp.cycle += l;
    total += w.lambda_cycle * l;
    if (need) {
      for (double& v : g.data()) v *= w.lambda_cycle;
      gen.backward(gp, rec, g, *grads);
    }
  }
  if (parts) *parts = lp;
  return total;
}

double discriminator_objective(const std::vector<Discriminator>& discs, const std::vector<NetParams>& dps,
                               const DiscriminatorConfig& dcfg, const Tensor& fake, const Tensor& real,
                               std::uint64_t crop_seed, std::vector<NetParams>* grads, std::vector<double>* per_scale) {
  if (discs.size() != dps.size() || static_cast<int>(discs.size()) != dcfg.n_scales)
    throw Error("discriminator objective: discriminator count mismatch");
  const bool need = grads != nullptr;
  double total = 0.0;
  if (per_scale) per_scale->assign(discs.size(), 0.0);
  for (std::size_t j = 0; j < discs.size(); ++j) {
    auto rf = patch_rng(crop_seed, static_cast<int>(j), false);
    auto rr = patch_rng(crop_seed, static_cast<int>(j), true);
    const Tensor pf = crop_scale_patch(fake, dcfg, static_cast<int>(j), rf);
    const Tensor pr = crop_scale_patch(real, dcfg, static_cast<int>(j), rr);
    DiscriminatorRecord rec_f, rec_r;
    const double sf = discs[j].forward(dps[j], pf, need ? &rec_f : nullptr);
    const double sr = discs[j].forward(dps[j], pr, need ? &rec_r : nullptr);
    std::vector<double> gr, gf;
    const double l = lsgan_discriminator_loss({sr}, {sf}, &gr, &gf);
    total += l;
    if (per_scale) (*per_scale)[j] = l;
    if (need) {
      discs[j].backward(dps[j], rec_f, gf[0], (*grads)[j]);
      discs[j].backward(dps[j], rec_r, gr[0], (*grads)[j]);
    }
  }
  return total;
}

std::pair<std::vector<std::string>, std::vector<std::string>> partition_training_set(
    const std::vector<std::string>& train_ids, const TrainConfig& cfg) {
  if (cfg.mode == TrainMode::self) return {train_ids, {}};
  std::vector<std::string> ids = train_ids;
  std::mt19937_64 rng(sim::mix_seed(cfg.seed, 0x5e11));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_gt = static_cast<std::size_t>(std::lround(cfg.gt_split * static_cast<double>(ids.size())));
  if (n_gt == 0 || n_gt >= ids.size()) throw ConfigError("semi mode needs at least two training samples");
  std::vector<std::string> input(ids.begin(), ids.end() - static_cast<long>(n_gt));
  std::vector<std::string> gt(ids.end() - static_cast<long>(n_gt), ids.end());
  std::sort(input.begin(), input.end());
  std::sort(gt.begin(), gt.end());
  return {input, gt};
}

void save_generator(const std::filesystem::path& path, const GeneratorConfig& cfg, const NetParams& params,
                    const json& inference) {
  Checkpoint ck;
  ck.nets.push_back({"generator", params});
  ck.meta = {{"generator_config", cfg}};
  if (!inference.is_null()) ck.meta["inference"] = inference;
  write_checkpoint(path, ck);
}

std::pair<GeneratorConfig, NetParams> load_generator(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (!ck.meta.contains("generator_config")) throw IoError(path.string() + ": checkpoint lacks generator_config");
  GeneratorConfig cfg = ck.meta.at("generator_config").get<GeneratorConfig>();
  NetParams p = ck.get("generator");
  if (!Generator(cfg).zero_params().same_layout(p))
    throw IoError(path.string() + ": generator parameters do not match its config");
  return {cfg, std::move(p)};
}

namespace {

// A wrapped tile may straddle the periodic seam, so every voxel lands in the
// loss interior equally often.
Tensor crop_tile(const Tensor& t, const Dims& tile, bool wrap, std::mt19937_64& rng) {
  if (t.dims() == tile) return t;
  std::size_t o[3];
  for (int a = 0; a < 3; ++a)
    o[a] = std::uniform_int_distribution<std::size_t>(0, wrap ? t.dims()[a] - 1 : t.dims()[a] - tile[a])(rng);
  return wrap ? crop_periodic(t, o[0], o[1], o[2], tile) : crop(t, o[0], o[1], o[2], tile);
}

json records_to_json(const std::vector<EpochRecord>& h) {
  json a = json::array();
  for (const auto& r : h)
    a.push_back({{"epoch", r.epoch}, {"cycle", r.cycle}, {"adv_g", r.adv_g}, {"adv_d", r.adv_d},
                 {"grad_loss", r.grad_loss}});
  return a;
}

std::vector<EpochRecord> records_from_json(const json& a) {
  std::vector<EpochRecord> h;
  for (const auto& r : a)
    h.push_back({r.at("epoch").get<int>(), r.at("cycle").get<double>(), r.at("adv_g").get<double>(),
                 r.at("adv_d").get<std::vector<double>>(), r.at("grad_loss").get<double>(),
                 0.0});
  return h;
}

}  // namespace

TrainResult train(const sim::DatasetManifest& manifest, const TrainConfig& tcfg, GeneratorConfig gcfg,
                  const DiscriminatorConfig& dcfg, const TrainOptions& opts) {
  tcfg.validate();
  gcfg.in_channels = manifest.n_views();
  const bool semi = tcfg.mode == TrainMode::semi;
  const Generator gen(gcfg);
  const std::vector<Psf> psfs = manifest.load_psfs();
  const auto& train_ids = manifest.split_ids("train");
  if (train_ids.empty()) throw ConfigError("training split is empty");

  auto [input_ids, gt_ids] = partition_training_set(train_ids, tcfg);
  const Dims vol = manifest.load_views(input_ids.front()).dims();
  for (int a = 0; a < 3; ++a)
    if (tcfg.tile_dims[a] > vol[a]) throw ConfigError("train.tile_dims " + tcfg.tile_dims.str() + " exceed volume " + vol.str());
  const Dims tile = tcfg.tile_dims;
  gen.check_input(Tensor(gcfg.in_channels, tile));

  std::vector<ConvolutionOperator> ops;
  for (const Psf& p : psfs) ops.emplace_back(p, tile, tcfg.boundary);
  Margin margin{0, 0, 0};
  for (int a = 0; a < 3; ++a)
    if (tile[a] < vol[a])
      for (const Psf& p : psfs) margin[static_cast<std::size_t>(a)] = std::max(margin[static_cast<std::size_t>(a)], p.dims()[a] / 2);

  std::vector<Discriminator> discs;
  if (semi) {
    dcfg.validate();
    if (dcfg.patch_dims.front() != tile)
      throw ConfigError("discriminator scale 0 patch " + dcfg.patch_dims.front().str() + " must equal the tile " + tile.str());
    for (int j = 0; j < dcfg.n_scales; ++j) discs.emplace_back(dcfg, j);
  }

  TrainResult res;
  res.input_ids = input_ids;
  res.gt_ids = gt_ids;
  NetParams gp = gen.init_params();
  AdamState g_adam = AdamState::for_params(gp);
  std::vector<NetParams> dps;
  std::vector<AdamState> d_adam;
  for (const auto& d : discs) {
    dps.push_back(d.init_params());
    d_adam.push_back(AdamState::for_params(dps.back()));
  }
  int start_epoch = 0;
  const json config_echo = {{"train", tcfg}, {"generator", gcfg}, {"discriminator", dcfg}};

  if (opts.resume) {
    const Checkpoint ck = read_checkpoint(*opts.resume);
    if (ck.meta.value("config", json{}) != config_echo) {
      json a = ck.meta.value("config", json{}), b = config_echo;
      a["train"].erase("epochs");
      b["train"].erase("epochs");
      if (a != b) throw ConfigError("resume checkpoint was written with a different configuration");
    }
    gp = ck.get("generator");
    g_adam.m = ck.get("adam_m.generator");
    g_adam.v = ck.get("adam_v.generator");
    g_adam.step = ck.meta.at("adam_steps").at(0).get<std::uint64_t>();
    for (std::size_t j = 0; j < discs.size(); ++j) {
      const std::string n = "d" + std::to_string(j);
      dps[j] = ck.get(n);
      d_adam[j].m = ck.get("adam_m." + n);
      d_adam[j].v = ck.get("adam_v." + n);
      d_adam[j].step = ck.meta.at("adam_steps").at(j + 1).get<std::uint64_t>();
    }
    if (!gp.same_layout(gen.zero_params())) throw IoError("resume checkpoint generator layout mismatch");
    res.history = records_from_json(ck.meta.at("history"));
    start_epoch = ck.meta.at("epochs_done").get<int>();
  }

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
  const ObjectiveWeights weights{semi, tcfg.lambda_cycle, semi ? 0.0 : tcfg.lambda_gradient};
  const bool wrap = tcfg.periodic_crops && tcfg.boundary == BoundaryMode::circular;

  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(sim::mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<std::string> order = input_ids;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t steps = tcfg.steps_per_epoch ? tcfg.steps_per_epoch : order.size();
    EpochRecord er;
    er.epoch = epoch;
    er.adv_d.assign(discs.size(), 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::string& id = order[s % order.size()];
      const ViewSet vs = manifest.load_views(id);
      if (vs.dims() != vol) throw Error("sample " + id + " has dims " + vs.dims().str() + ", expected " + vol.str());
      const Tensor x = crop_tile(Tensor::from_volumes(vs.views), tile, wrap, rng);
      const std::uint64_t crop_seed = rng();
      Tensor z_real;
      StepData data{&x, &ops, nullptr, margin};
      auto fail = [&](const std::string& what) {
        return Error("non-finite " + what + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(s));
      };

      if (semi) {
        const std::string& gid = gt_ids[std::uniform_int_distribution<std::size_t>(0, gt_ids.size() - 1)(rng)];
        z_real = crop_tile(Tensor::from_volume(manifest.load_ground_truth(gid)), tile, wrap, rng);
        data.z_real = &z_real;
        const Tensor fake = gen.forward(gp, x);
        std::vector<NetParams> dgrads;
        for (const auto& p : dps) dgrads.push_back(p.zeros_like());
        std::vector<double> per_scale;
        const double dl = discriminator_objective(discs, dps, dcfg, fake, z_real, crop_seed, &dgrads, &per_scale);
        if (!std::isfinite(dl)) throw fail("discriminator loss");
        for (std::size_t j = 0; j < discs.size(); ++j) {
          if (!dgrads[j].all_finite()) throw fail("discriminator gradient");
          adam_step(dps[j], dgrads[j], d_adam[j], tcfg.adam);
          if (!dps[j].all_finite()) throw fail("discriminator parameters");
          er.adv_d[j] += per_scale[j];
        }
      }
      NetParams grads = gp.zeros_like();
      LossParts lp;
      const double total = generator_objective(gen, gp, discs, dps, dcfg, data, weights, crop_seed, &grads, &lp);
      if (!std::isfinite(total)) throw fail("generator loss");
      if (!grads.all_finite()) throw fail("generator gradient");
      adam_step(gp, grads, g_adam, tcfg.adam);
      if (!gp.all_finite()) throw fail("generator parameters");
      er.cycle += lp.cycle;
      er.adv_g += lp.adversarial;
      er.grad_loss += lp.gradient;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    er.cycle *= inv;
    er.adv_g *= inv;
    er.grad_loss *= inv;
    for (double& v : er.adv_d) v *= inv;
    er.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(er);

    if (!opts.out_dir.empty()) {
      Checkpoint ck;
      ck.nets.push_back({"generator", gp});
      ck.nets.push_back({"adam_m.generator", g_adam.m});
      ck.nets.push_back({"adam_v.generator", g_adam.v});
      json steps_j = json::array({g_adam.step});
      for (std::size_t j = 0; j < discs.size(); ++j) {
        const std::string n = "d" + std::to_string(j);
        ck.nets.push_back({n, dps[j]});
        ck.nets.push_back({"adam_m." + n, d_adam[j].m});
        ck.nets.push_back({"adam_v." + n, d_adam[j].v});
        steps_j.push_back(d_adam[j].step);
      }
      ck.meta = {{"config", config_echo},          {"generator_config", gcfg},
                 {"epochs_done", epoch + 1},       {"adam_steps", steps_j},
                 {"history", records_to_json(res.history)}, {"input_ids", input_ids},
                 {"gt_ids", gt_ids}};
      write_checkpoint(opts.out_dir / "checkpoint.mvv", ck);
      io::write_text(opts.out_dir / "history.csv", history_csv(res.history, static_cast<int>(discs.size())));
    }
    if (opts.on_epoch) opts.on_epoch(er);
  }

  if (!opts.out_dir.empty()) {
    InferConfig hint;
    hint.tile = tile;
    hint.margin = margin;
    hint.boundary = tcfg.boundary;
    save_generator(opts.out_dir / "generator.mvv", gcfg, gp, hint);
  }
  res.generator = std::move(gp);
  res.discriminators = std::move(dps);
  return res;
}

}  // namespace mvf::nn
