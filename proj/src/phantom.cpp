#include "mvf/phantom.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <random>

#include "mvf/convolution.hpp"
#include "mvf/error.hpp"
#include "mvf/json_config.hpp"

namespace mvf::sim {

namespace fs = std::filesystem;

void PhantomConfig::validate() const {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw ConfigError("phantom: dims must be >= 1");
  if (n_objects < 1) throw ConfigError("phantom: n_objects must be >= 1");
  if (radius_min < 1.0 || radius_max < radius_min) throw ConfigError("phantom: need 1 <= radius_min <= radius_max");
  if (!(intensity_min > 0.0) || intensity_max > 1.0 || intensity_max < intensity_min)
    throw ConfigError("phantom: intensity range must lie within (0, 1]");
  if (kind == PhantomKind::embryo && !(shell_radius_frac > 0.0 && shell_radius_frac < 1.0))
    throw ConfigError("phantom: shell_radius_frac must be in (0, 1)");
}

void NoiseConfig::validate() const {
  if (gaussian_sigma < 0.0 || poisson_photons < 0.0) throw ConfigError("noise: parameters must be >= 0");
}

void PsfConfig::validate() const {
  if (dims % 2 == 0 || dims == 0) throw ConfigError("psf: dims must be odd");
  if (!(sigma_lateral > 0.0) || sigma_axial < sigma_lateral)
    throw ConfigError("psf: need sigma_axial >= sigma_lateral > 0");
}

namespace {

void rasterize(Volume& vol, const PlacedObject& o) {
  const Dims& d = vol.dims();
  auto range = [](double c, double a, std::size_t n) {
    const long lo = std::max(0L, static_cast<long>(std::floor(c - a)));
    const long hi = std::min(static_cast<long>(n) - 1, static_cast<long>(std::ceil(c + a)));
    return std::pair{lo, hi};
  };
  const auto [x0, x1] = range(o.cx, o.ax, d.nx);
  const auto [y0, y1] = range(o.cy, o.ay, d.ny);
  const auto [z0, z1] = range(o.cz, o.az, d.nz);
  for (long z = z0; z <= z1; ++z)
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double rx = (x - o.cx) / o.ax, ry = (y - o.cy) / o.ay, rz = (z - o.cz) / o.az;
        const double r2 = rx * rx + ry * ry + rz * rz;
        if (r2 > 1.0) continue;
        double& v = vol(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
        v = std::max(v, o.intensity * std::exp(-2.0 * r2));
      }
}

}  // namespace

Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Phantom p{Volume(cfg.dims), {}};
  const Dims& d = cfg.dims;
  const double cx = (d.nx - 1) / 2.0, cy = (d.ny - 1) / 2.0, cz = (d.nz - 1) / 2.0;
  const double half = std::min({d.nx, d.ny, d.nz}) / 2.0;

  for (int i = 0; i < cfg.n_objects; ++i) {
    PlacedObject o;
    o.ax = uniform(cfg.radius_min, cfg.radius_max);
    o.ay = uniform(cfg.radius_min, cfg.radius_max);
    o.az = uniform(cfg.radius_min, cfg.radius_max);
    o.intensity = uniform(cfg.intensity_min, cfg.intensity_max);
    if (cfg.kind == PhantomKind::embryo) {
      const double u = uniform(-1.0, 1.0);
      const double phi = uniform(0.0, 2.0 * std::numbers::pi);
      const double s = std::sqrt(1.0 - u * u);
      const double radius = (cfg.shell_radius_frac + uniform(-0.08, 0.08)) * half;
      o.cx = cx + radius * s * std::cos(phi);
      o.cy = cy + radius * s * std::sin(phi);
      o.cz = cz + radius * u;
    } else {
      const double margin = cfg.radius_max;
      const double min_dist = 2.0 * cfg.radius_max;
      auto axis = [&](std::size_t n, double c) {
        return n > 2 * margin + 1 ? uniform(margin, n - 1 - margin) : c;
      };
      bool placed = false;
      for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
        o.cx = axis(d.nx, cx);
        o.cy = axis(d.ny, cy);
        o.cz = axis(d.nz, cz);
        placed = std::all_of(p.objects.begin(), p.objects.end(), [&](const PlacedObject& q) {
          const double dx = q.cx - o.cx, dy = q.cy - o.cy, dz = q.cz - o.cz;
          return dx * dx + dy * dy + dz * dz >= min_dist * min_dist;
        });
      }
      if (!placed) throw Error("overcrowded phantom: could not place object " + std::to_string(i + 1));
    }
    rasterize(p.volume, o);
    p.objects.push_back(o);
  }
  return p;
}

double psf_tail_mass(const PsfConfig& cfg) {
  const double h = static_cast<double>(cfg.dims / 2) + 0.5;
  const double inside_l = std::erf(h / (cfg.sigma_lateral * std::numbers::sqrt2));
  const double inside_a = std::erf(h / (cfg.sigma_axial * std::numbers::sqrt2));
  return 1.0 - inside_l * inside_l * inside_a;
}

Psf synthesize_psf(const PsfConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.dims;
  const double c = static_cast<double>(n / 2);
  Volume k(Dims{n, n, n});
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x - c, dy = y - c, dz = z - c;
        k(x, y, z) = std::exp(-(dx * dx + dy * dy) / (2.0 * cfg.sigma_lateral * cfg.sigma_lateral) -
                              dz * dz / (2.0 * cfg.sigma_axial * cfg.sigma_axial));
      }
  Psf psf = Psf(std::move(k)).normalized_copy();
  if (const double tail = psf_tail_mass(cfg); tail > 0.01) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "kernel truncates %.2f%% of the Gaussian mass", 100.0 * tail);
    psf.set_warning(buf);
  }
  return psf;
}

Volume degrade_view(const Volume& latent, const Psf& psf, const NoiseConfig& noise, BoundaryMode mode) {
  noise.validate();
  for (double v : latent.data())
    if (v < 0.0) throw Error("degrade_view: latent image must be non-negative");
  Volume x = convolve(latent, psf, mode);
  if (!noise.enabled()) return x;
  std::mt19937_64 rng(noise.seed);
  if (noise.poisson_photons > 0.0) {
    for (double& v : x.data()) {
      const double mean = std::max(v, 0.0) * noise.poisson_photons;
      if (mean <= 0.0) {
        v = 0.0;
        continue;
      }
      std::poisson_distribution<long> shot(mean);
      v = static_cast<double>(shot(rng)) / noise.poisson_photons;
    }
  }
  if (noise.gaussian_sigma > 0.0) {
    std::normal_distribution<double> read(0.0, noise.gaussian_sigma);
    for (double& v : x.data()) v += read(rng);
  }
  clamp_nonnegative(x);
  return x;
}

std::vector<int> view_quarter_turns(int n_views) {
  if (n_views == 4) return {0, 1, 2, 3};
  if (n_views == 2) return {0, 2};
  throw ConfigError("n_views must be 2 or 4");
}

std::vector<Psf> view_psfs(const Psf& base, int n_views) {
  std::vector<Psf> out;
  for (int t : view_quarter_turns(n_views)) out.push_back(rotate_y_90(base, t));
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Split default_split(const std::vector<std::string>& ids, int n_views) {
  const std::size_t n = ids.size();
  Split s;
  std::size_t n_train = 0, n_val = 0;
  if (n_views == 4) {
    n_train = static_cast<std::size_t>(std::lround(n * 108.0 / 140.0));
    n_val = static_cast<std::size_t>(std::lround(n * 21.0 / 140.0));
  } else {
    n_train = static_cast<std::size_t>(std::lround(n * 68.0 / 80.0));
  }
  if (n >= 2 && n_train + n_val >= n) {
    if (n_val > 0) --n_val; else --n_train;
  }
  s.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  if (n_views == 4) {
    s.val.assign(ids.begin() + static_cast<long>(n_train), ids.begin() + static_cast<long>(n_train + n_val));
    s.test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
  } else {
    s.test.assign(ids.begin() + static_cast<long>(n_train), ids.end());
    s.val = s.test;
  }
  return s;
}

DatasetManifest DatasetManifest::load(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(io::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": bad manifest JSON: " + e.what());
  }
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  try {
    for (const auto& s : j.at("samples")) {
      SampleEntry e;
      e.id = s.at("id").get<std::string>();
      e.gt = m.root / s.at("gt").get<std::string>();
      for (const auto& v : s.at("views")) e.views.push_back(m.root / v.get<std::string>());
      e.angles = s.at("angles").get<std::vector<int>>();
      e.seed = s.at("seed").get<std::uint64_t>();
      m.samples.push_back(std::move(e));
    }
    for (const auto& p : j.at("psfs")) m.psfs.push_back(m.root / p.get<std::string>());
    m.angles = j.at("angles").get<std::vector<int>>();
    const auto& sp = j.at("split");
    m.split.train = sp.at("train").get<std::vector<std::string>>();
    m.split.val = sp.at("val").get<std::vector<std::string>>();
    m.split.test = sp.at("test").get<std::vector<std::string>>();
    m.configs = j.value("configs", json::object());
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

void DatasetManifest::save(const fs::path& manifest_path) const {
  auto rel = [&](const fs::path& p) { return p.lexically_relative(root).generic_string(); };
  json j;
  j["samples"] = json::array();
  for (const auto& s : samples) {
    json views = json::array();
    for (const auto& v : s.views) views.push_back(rel(v));
    j["samples"].push_back({{"id", s.id}, {"gt", rel(s.gt)}, {"views", views}, {"angles", s.angles}, {"seed", s.seed}});
  }
  json ps = json::array();
  for (const auto& p : psfs) ps.push_back(rel(p));
  j["psfs"] = ps;
  j["angles"] = angles;
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  j["configs"] = configs;
  io::write_text(manifest_path, j.dump(2) + "\n");
}

const SampleEntry& DatasetManifest::sample(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw Error("manifest has no sample '" + id + "'");
}

const std::vector<std::string>& DatasetManifest::split_ids(const std::string& name) const {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<Psf> DatasetManifest::load_psfs() const {
  std::vector<Psf> out;
  for (const auto& p : psfs) out.push_back(io::read_psf(p));
  return out;
}

ViewSet DatasetManifest::load_views(const std::string& id) const {
  const SampleEntry& s = sample(id);
  ViewSet vs;
  for (const auto& p : s.views) vs.views.push_back(io::read_volume(p));
  vs.psfs = load_psfs();
  vs.angles_deg = s.angles;
  vs.validate(1);
  return vs;
}

Volume DatasetManifest::load_ground_truth(const std::string& id) const { return io::read_volume(sample(id).gt); }

DatasetManifest make_dataset(const PhantomConfig& phantom, const PsfConfig& psf_cfg, const NoiseConfig& noise,
                             const DatasetConfig& dataset, const fs::path& out_dir, bool force) {
  phantom.validate();
  noise.validate();
  const std::vector<int> turns = view_quarter_turns(dataset.n_views);
  if (dataset.n_samples == 0) throw ConfigError("dataset: n_samples must be >= 1");

  std::error_code ec;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw IoError("output directory " + out_dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(out_dir / "psfs", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = out_dir;
  const Psf base = synthesize_psf(psf_cfg);
  const std::vector<Psf> psfs = view_psfs(base, dataset.n_views);
  for (std::size_t v = 0; v < psfs.size(); ++v) {
    m.psfs.push_back(out_dir / "psfs" / ("psf_v" + std::to_string(v) + ".mvv"));
    io::write_psf(m.psfs.back(), psfs[v]);
    m.angles.push_back(90 * turns[v]);
  }

  std::vector<std::string> ids;
  m.samples.resize(dataset.n_samples);
  for (std::size_t i = 0; i < dataset.n_samples; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04zu", i);
    ids.emplace_back(buf);
    SampleEntry& e = m.samples[i];
    e.id = buf;
    e.seed = phantom.seed ^ i;
    e.gt = out_dir / e.id / "gt.mvv";
    for (std::size_t v = 0; v < psfs.size(); ++v) e.views.push_back(out_dir / e.id / ("view" + std::to_string(v) + ".mvv"));
    e.angles = m.angles;
    fs::create_directories(out_dir / e.id, ec);
    if (ec) throw IoError("cannot create sample directory: " + ec.message());
  }

  std::exception_ptr failure;
  const long n = static_cast<long>(dataset.n_samples);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const SampleEntry& e = m.samples[static_cast<std::size_t>(i)];
      PhantomConfig pc = phantom;
      pc.seed = e.seed;
      const Phantom ph = generate_phantom(pc);
      io::write_volume(e.gt, ph.volume, dataset.dtype, {{"sample", e.id}});
      for (std::size_t v = 0; v < psfs.size(); ++v) {
        NoiseConfig nc = noise;
        nc.seed = mix_seed(noise.seed ^ static_cast<std::uint64_t>(i), v);
        const Volume view = degrade_view(ph.volume, psfs[v], nc, dataset.boundary);
        io::write_volume(e.views[v], view, dataset.dtype, {{"sample", e.id}, {"angle_deg", m.angles[v]}});
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  m.split = default_split(ids, dataset.n_views);
  m.configs = {{"phantom", phantom}, {"psf", psf_cfg}, {"noise", noise}, {"dataset", dataset}};
  if (!base.warning().empty()) m.configs["psf_warning"] = base.warning();
  m.save(out_dir / "manifest.json");
  return m;
}

Preset embryo_preset() { return Preset{}; }

Preset nuclei_preset() {
  Preset p;
  p.phantom.kind = PhantomKind::nuclei;
  p.phantom.dims = {32, 32, 256};
  p.phantom.n_objects = 40;
  p.phantom.radius_min = 2.0;
  p.phantom.radius_max = 3.0;
  p.dataset.n_views = 2;
  p.dataset.n_samples = 80;
  return p;
}

Preset preset_by_name(const std::string& name) {
  if (name == "embryo") return embryo_preset();
  if (name == "nuclei") return nuclei_preset();
  throw ConfigError("unknown preset '" + name + "' (expected embryo or nuclei)");
}

// JSON mapping -------------------------------------------------------------

void to_json(json& j, const PhantomConfig& c) {
  j = {{"kind", c.kind == PhantomKind::embryo ? "embryo" : "nuclei"},
       {"dims", {c.dims.nx, c.dims.ny, c.dims.nz}},
       {"n_objects", c.n_objects},
       {"radius_range", {c.radius_min, c.radius_max}},
       {"shell_radius_frac", c.shell_radius_frac},
       {"intensity_range", {c.intensity_min, c.intensity_max}},
       {"seed", c.seed}};
}

void from_json(const json& j, PhantomConfig& c) {
  const std::string ctx = "phantom";
  cfg::reject_unknown(j, {"kind", "dims", "n_objects", "radius_range", "shell_radius_frac", "intensity_range", "seed"},
                      ctx);
  if (j.contains("kind")) {
    const std::string k = j["kind"].get<std::string>();
    if (k == "embryo") c.kind = PhantomKind::embryo;
    else if (k == "nuclei") c.kind = PhantomKind::nuclei;
    else throw ConfigError("phantom.kind must be embryo or nuclei");
  }
  if (j.contains("dims")) {
    std::vector<std::size_t> d;
    cfg::read(j, "dims", d, ctx);
    if (d.size() != 3) throw ConfigError("phantom.dims must have 3 entries");
    c.dims = {d[0], d[1], d[2]};
  }
  cfg::read(j, "n_objects", c.n_objects, ctx);
  if (j.contains("radius_range")) {
    std::vector<double> r;
    cfg::read(j, "radius_range", r, ctx);
    if (r.size() != 2) throw ConfigError("phantom.radius_range must have 2 entries");
    c.radius_min = r[0];
    c.radius_max = r[1];
  }
  cfg::read(j, "shell_radius_frac", c.shell_radius_frac, ctx);
  if (j.contains("intensity_range")) {
    std::vector<double> r;
    cfg::read(j, "intensity_range", r, ctx);
    if (r.size() != 2) throw ConfigError("phantom.intensity_range must have 2 entries");
    c.intensity_min = r[0];
    c.intensity_max = r[1];
  }
  cfg::read(j, "seed", c.seed, ctx);
}

void to_json(json& j, const NoiseConfig& c) {
  j = {{"gaussian_sigma", c.gaussian_sigma}, {"poisson_photons", c.poisson_photons}, {"seed", c.seed}};
}

void from_json(const json& j, NoiseConfig& c) {
  cfg::reject_unknown(j, {"gaussian_sigma", "poisson_photons", "seed"}, "noise");
  cfg::read(j, "gaussian_sigma", c.gaussian_sigma, "noise");
  cfg::read(j, "poisson_photons", c.poisson_photons, "noise");
  cfg::read(j, "seed", c.seed, "noise");
}

void to_json(json& j, const PsfConfig& c) {
  j = {{"dims", c.dims}, {"sigma_lateral", c.sigma_lateral}, {"sigma_axial", c.sigma_axial}};
}

void from_json(const json& j, PsfConfig& c) {
  cfg::reject_unknown(j, {"dims", "sigma_lateral", "sigma_axial"}, "psf");
  cfg::read(j, "dims", c.dims, "psf");
  cfg::read(j, "sigma_lateral", c.sigma_lateral, "psf");
  cfg::read(j, "sigma_axial", c.sigma_axial, "psf");
}

void to_json(json& j, const DatasetConfig& c) {
  j = {{"n_views", c.n_views},
       {"n_samples", c.n_samples},
       {"dtype", io::to_string(c.dtype)},
       {"boundary", to_string(c.boundary)}};
}

void from_json(const json& j, DatasetConfig& c) {
  cfg::reject_unknown(j, {"n_views", "n_samples", "dtype", "boundary"}, "dataset");
  cfg::read(j, "n_views", c.n_views, "dataset");
  cfg::read(j, "n_samples", c.n_samples, "dataset");
  if (j.contains("dtype")) c.dtype = io::parse_dtype(j["dtype"].get<std::string>());
  if (j.contains("boundary")) c.boundary = parse_boundary(j["boundary"].get<std::string>());
}

}  // namespace mvf::sim
