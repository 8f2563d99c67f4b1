#include "mvf/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include "mvf/classical.hpp"
#include "mvf/convolution.hpp"
#include "mvf/error.hpp"
#include "mvf/io.hpp"
#include "mvf/json_config.hpp"
#include "mvf/kernels.hpp"
#include "mvf/metrics.hpp"
#include "mvf/nn/infer.hpp"
#include "mvf/nn/train.hpp"
#include "mvf/parallel.hpp"
#include "mvf/phantom.hpp"
#include "mvf/png_export.hpp"

namespace mvf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  bool force = false;
};

struct Context {
  Globals g;
  json file = json::object();
  std::ostream* out;
  std::ostream* err;

  json section(const std::string& name) const { return file.value(name, json::object()); }

  fs::path out_dir() const {
    if (!g.out.empty()) return g.out;
    if (file.contains("out")) return file.at("out").get<std::string>();
    throw ConfigError("an output directory is required (--out)");
  }

  void guard(const fs::path& p) const {
    if (fs::exists(p) && !g.force) throw IoError(p.string() + " already exists (pass --force to overwrite)");
  }

  void echo(const fs::path& dir, const std::string& name, json resolved) const {
    resolved["threads"] = parallel::threads();
    const fs::path p = dir / ("resolved_" + name + ".json");
    io::write_text(p, resolved.dump(2) + "\n");
    *out << p.string() << "\n";
  }
};

template <class T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

fs::path manifest_path(const std::string& dataset) {
  if (dataset.empty()) throw ConfigError("a dataset is required (--dataset)");
  fs::path p = dataset;
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw IoError("dataset manifest not found: " + p.string());
  return p;
}

std::vector<std::string> split_or_all(const sim::DatasetManifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<std::string> ids;
    for (const auto& s : m.samples) ids.push_back(s.id);
    return ids;
  }
  return m.split_ids(split);
}

template <class T>
T parse_section(const json& j, const char* key, T value) {
  if (j.contains(key)) {
    try {
      from_json(j.at(key), value);
    } catch (const json::exception& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  }
  return value;
}

Dims dims_from(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError(std::string(what) + " takes one or three extents");
}

// simulate ------------------------------------------------------------------

struct SimulateFlags {
  std::optional<std::string> preset;
  std::optional<std::size_t> samples;
  std::optional<int> views;
  std::vector<std::size_t> dims;
};

void cmd_simulate(const Context& ctx, const SimulateFlags& f) {
  const json sec = ctx.section("simulate");
  cfg::reject_unknown(sec, {"preset", "phantom", "psf", "noise", "dataset"}, "simulate");
  std::string preset_name = sec.value("preset", std::string("embryo"));
  set_if(f.preset, preset_name);
  sim::Preset p = sim::preset_by_name(preset_name);
  p.phantom = parse_section(sec, "phantom", p.phantom);
  p.psf = parse_section(sec, "psf", p.psf);
  p.noise = parse_section(sec, "noise", p.noise);
  p.dataset = parse_section(sec, "dataset", p.dataset);
  set_if(f.samples, p.dataset.n_samples);
  set_if(f.views, p.dataset.n_views);
  if (!f.dims.empty()) p.phantom.dims = dims_from(f.dims, "--dims");
  if (ctx.g.seed) {
    p.phantom.seed = *ctx.g.seed;
    p.noise.seed = sim::mix_seed(*ctx.g.seed, 1);
  }
  p.phantom.validate();
  p.psf.validate();
  p.noise.validate();

  const fs::path out = ctx.out_dir();
  const auto m = sim::make_dataset(p.phantom, p.psf, p.noise, p.dataset, out, ctx.g.force);
  ctx.echo(out, "simulate",
           {{"command", "simulate"}, {"preset", preset_name}, {"phantom", p.phantom}, {"psf", p.psf},
            {"noise", p.noise}, {"dataset", p.dataset}});
  *ctx.out << (out / "manifest.json").string() << "\n";
}

// fuse ----------------------------------------------------------------------

struct FuseFlags {
  std::optional<std::string> dataset, method, split, dtype, boundary, init;
  std::optional<int> iterations, window, bins;
  std::optional<double> tikhonov;
};

void cmd_fuse(const Context& ctx, const FuseFlags& f) {
  const json sec = ctx.section("fuse");
  cfg::reject_unknown(sec, {"dataset", "method", "split", "dtype", "cbif", "ebmd"}, "fuse");
  std::string dataset = sec.value("dataset", std::string()), method = sec.value("method", std::string("ebmd"));
  std::string split = sec.value("split", std::string("test")), dtype_s = sec.value("dtype", std::string("f32"));
  set_if(f.dataset, dataset);
  set_if(f.method, method);
  set_if(f.split, split);
  set_if(f.dtype, dtype_s);
  if (method != "ebmd" && method != "cbif") throw ConfigError("unknown fusion method '" + method + "'");
  const io::Dtype dtype = io::parse_dtype(dtype_s);
  const auto m = sim::DatasetManifest::load(manifest_path(dataset));
  classical::EbmdConfig eb_defaults;
  if (m.configs.contains("phantom") && m.configs["phantom"].value("kind", std::string()) == "nuclei") {
    eb_defaults.iterations = 15;
    eb_defaults.tikhonov_lambda = 0.1;
  }
  auto cb = parse_section(sec, "cbif", classical::CbifConfig{});
  auto eb = parse_section(sec, "ebmd", eb_defaults);
  set_if(f.iterations, eb.iterations);
  set_if(f.tikhonov, eb.tikhonov_lambda);
  if (f.boundary) eb.boundary = parse_boundary(*f.boundary);
  if (f.init) {
    json j;
    to_json(j, eb);
    j["init"] = *f.init;
    from_json(j, eb);
  }
  set_if(f.window, cb.window_radius);
  set_if(f.bins, cb.histogram_bins);
  cb.validate();
  eb.validate();

  const auto ids = split_or_all(m, split);
  const fs::path out = ctx.out_dir();
  const fs::path dir = out / method;
  fs::create_directories(dir);
  json report = {{"method", method}, {"samples", json::array()}};
  for (const auto& id : ids) {
    const fs::path target = dir / (id + ".mvv");
    ctx.guard(target);
    const ViewSet vs = m.load_views(id);
    const auto t0 = std::chrono::steady_clock::now();
    json entry = {{"id", id}};
    Volume result;
    if (method == "cbif") {
      result = classical::cbif_fuse(vs, cb);
    } else {
      json its = json::array();
      result = classical::ebmd_deconvolve(vs, eb, [&](const classical::EbmdProgress& p) {
        its.push_back({{"iteration", p.iteration}, {"residual_l1", p.residual_l1}});
      });
      entry["iterations"] = its;
    }
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry["checksum"] = io::hex(io::checksum(result));
    io::write_volume(target, result, dtype);
    report["samples"].push_back(entry);
  }
  io::write_text(dir / "report.json", report.dump(2) + "\n");
  json resolved = {{"command", "fuse"}, {"dataset", dataset}, {"method", method}, {"split", split}, {"dtype", dtype_s}};
  if (method == "cbif") resolved["cbif"] = cb;
  else resolved["ebmd"] = eb;
  ctx.echo(out, "fuse_" + method, resolved);
  *ctx.out << dir.string() << "\n";
}

// train ---------------------------------------------------------------------

struct TrainFlags {
  std::optional<std::string> dataset, mode, resume, arch;
  std::optional<int> epochs, batch, base, levels, max_channels;
  std::optional<double> lr, lambda, lambda_gradient;
  std::optional<std::size_t> steps;
  std::vector<std::size_t> tile;
};

// Architecture and schedule defaults per preset and dataset kind; the
// nuclei regime uses elongated tiles and a longer schedule.
void apply_arch(const std::string& arch, bool nuclei, nn::GeneratorConfig& g, nn::TrainConfig& t) {
  if (arch != "desk" && arch != "paper")
    throw ConfigError("unknown architecture preset '" + arch + "' (expected desk or paper)");
  if (arch == "paper") {
    g.levels = 3;
    g.base_channels = 64;
    g.max_channels = 256;
  }
  if (nuclei) {
    t.epochs = 500;
    t.tile_dims = arch == "paper" ? Dims{16, 128, 960} : Dims{8, 32, 128};
  } else if (arch == "paper") {
    t.tile_dims = {64, 64, 64};
  }
}

void cmd_train(const Context& ctx, const TrainFlags& f) {
  const json sec = ctx.section("train");
  cfg::reject_unknown(sec, {"dataset", "arch", "resume", "train", "generator", "discriminator"}, "train");
  std::string dataset = sec.value("dataset", std::string()), arch = sec.value("arch", std::string("desk"));
  set_if(f.dataset, dataset);
  set_if(f.arch, arch);
  const auto m = sim::DatasetManifest::load(manifest_path(dataset));
  const bool nuclei = m.configs.contains("phantom") && m.configs["phantom"].value("kind", std::string()) == "nuclei";
  nn::GeneratorConfig g;
  nn::DiscriminatorConfig d;
  nn::TrainConfig t;
  apply_arch(arch, nuclei, g, t);
  if (arch == "paper") {
    d.base_channels = 64;
    d.max_channels = 256;
  }
  // preset tiles are cut down to the dataset's volume
  const Dims vol = m.load_views(m.samples.front().id).dims();
  for (int a = 0; a < 3; ++a) t.tile_dims[a] = std::min(t.tile_dims[a], vol[a]);
  t = parse_section(sec, "train", t);
  g = parse_section(sec, "generator", g);
  d = parse_section(sec, "discriminator", d);
  if (f.mode) t.mode = nn::parse_train_mode(*f.mode);
  set_if(f.epochs, t.epochs);
  set_if(f.batch, t.batch);
  set_if(f.lr, t.adam.lr);
  set_if(f.lambda, t.lambda_cycle);
  set_if(f.lambda_gradient, t.lambda_gradient);
  set_if(f.steps, t.steps_per_epoch);
  set_if(f.base, g.base_channels);
  set_if(f.levels, g.levels);
  set_if(f.max_channels, g.max_channels);
  if (!f.tile.empty()) t.tile_dims = dims_from(f.tile, "--tile");
  // critic patches follow the tile unless configured: tile, tile / 2, ...
  if (!(sec.contains("discriminator") && sec["discriminator"].contains("patch_dims"))) {
    d.patch_dims.clear();
    for (int j = 0; j < d.n_scales; ++j) {
      Dims p = t.tile_dims;
      for (int a = 0; a < 3; ++a) p[a] = std::max<std::size_t>(1, p[a] >> j);
      d.patch_dims.push_back(p);
    }
  }
  if (ctx.g.seed) {
    t.seed = *ctx.g.seed;
    g.seed = sim::mix_seed(*ctx.g.seed, 11);
    d.seed = sim::mix_seed(*ctx.g.seed, 13);
  }
  t.validate();
  g.validate();
  if (t.mode == nn::TrainMode::semi) d.validate();
  std::optional<fs::path> resume;
  if (sec.contains("resume")) resume = sec.at("resume").get<std::string>();
  if (f.resume) resume = *f.resume;

  const fs::path out = ctx.out_dir();
  if (!resume) {
    ctx.guard(out / "checkpoint.mvv");
    ctx.guard(out / "generator.mvv");
  }
  fs::create_directories(out);
  g.in_channels = m.n_views();
  ctx.echo(out, "train",
           {{"command", "train"}, {"dataset", dataset}, {"arch", arch}, {"train", t}, {"generator", g},
            {"discriminator", d}, {"resume", resume ? resume->string() : ""}});

  nn::TrainOptions opts;
  opts.out_dir = out;
  opts.resume = resume;
  opts.on_epoch = [&](const nn::EpochRecord& r) {
    *ctx.err << "epoch " << r.epoch << ": cycle " << r.cycle << " adv_g " << r.adv_g << " grad " << r.grad_loss
             << " (" << r.wall_time << " s)\n";
  };
  io::audit_clear();
  io::audit_enable(true);
  nn::TrainResult res;
  try {
    res = nn::train(m, t, g, d, opts);
  } catch (...) {
    io::audit_enable(false);
    throw;
  }
  io::audit_enable(false);
  const auto reads = io::audit_log();
  const std::set<std::string> read_set(reads.begin(), reads.end());
  json gt_reads = json::array();
  for (const auto& id : res.input_ids) {
    const std::string gt = fs::absolute(m.sample(id).gt).lexically_normal().string();
    if (read_set.count(gt)) gt_reads.push_back(id);
  }
  json audit = {{"mode", nn::to_string(t.mode)},
                {"input_ids", res.input_ids},
                {"gt_ids", res.gt_ids},
                {"input_ground_truth_reads", gt_reads},
                {"files_read", std::vector<std::string>(read_set.begin(), read_set.end())}};
  io::write_text(out / "audit.json", audit.dump(2) + "\n");
  if (!gt_reads.empty()) throw Error("training read ground truth of its input samples; see audit.json");
  *ctx.out << (out / "generator.mvv").string() << "\n" << (out / "history.csv").string() << "\n";
}

// infer ---------------------------------------------------------------------

struct InferFlags {
  std::optional<std::string> dataset, checkpoint, split, name, dtype, boundary;
  std::optional<std::size_t> overlap;
  std::vector<std::size_t> tile, margin;
  bool clamp = false;
};

void cmd_infer(const Context& ctx, const InferFlags& f) {
  const json sec = ctx.section("infer");
  cfg::reject_unknown(sec, {"dataset", "checkpoint", "split", "name", "dtype", "infer"}, "infer");
  std::string dataset = sec.value("dataset", std::string()), ckpt = sec.value("checkpoint", std::string());
  std::string split = sec.value("split", std::string("test")), name = sec.value("name", std::string("neural"));
  std::string dtype_s = sec.value("dtype", std::string("f32"));
  set_if(f.dataset, dataset);
  set_if(f.checkpoint, ckpt);
  set_if(f.split, split);
  set_if(f.name, name);
  set_if(f.dtype, dtype_s);
  if (ckpt.empty()) throw ConfigError("a generator checkpoint is required (--checkpoint)");
  auto ic = parse_section(sec, "infer", nn::load_inference_defaults(ckpt));
  set_if(f.overlap, ic.overlap);
  if (!f.tile.empty()) ic.tile = dims_from(f.tile, "--tile");
  if (!f.margin.empty()) {
    const Dims m = dims_from(f.margin, "--margin");
    ic.margin = {m.nx, m.ny, m.nz};
  }
  if (f.boundary) ic.boundary = parse_boundary(*f.boundary);
  if (f.clamp) ic.clamp_nonnegative = true;
  const io::Dtype dtype = io::parse_dtype(dtype_s);

  const auto [gcfg, params] = nn::load_generator(ckpt);
  const nn::Generator gen(gcfg);
  const auto m = sim::DatasetManifest::load(manifest_path(dataset));
  const fs::path out = ctx.out_dir();
  const fs::path dir = out / name;
  fs::create_directories(dir);
  for (const auto& id : split_or_all(m, split)) {
    const fs::path target = dir / (id + ".mvv");
    ctx.guard(target);
    io::write_volume(target, nn::infer(gen, params, m.load_views(id), ic), dtype);
  }
  ctx.echo(out, "infer_" + name,
           {{"command", "infer"}, {"dataset", dataset}, {"checkpoint", ckpt}, {"split", split}, {"name", name},
            {"dtype", dtype_s}, {"infer", ic}, {"generator", gcfg}});
  *ctx.out << dir.string() << "\n";
}

// evaluate ------------------------------------------------------------------

struct EvaluateFlags {
  std::optional<std::string> dataset, results, split;
  std::optional<double> p_low, p_high;
  std::optional<std::size_t> panels;
  bool include_gt = false;
  bool no_raw = false;
};

void cmd_evaluate(const Context& ctx, const EvaluateFlags& f) {
  const json sec = ctx.section("evaluate");
  cfg::reject_unknown(sec, {"dataset", "results", "split", "p_low", "p_high", "include_gt", "include_raw", "panels"},
                      "evaluate");
  std::string dataset = sec.value("dataset", std::string()), results = sec.value("results", std::string());
  metrics::EvalOptions o;
  cfg::read(sec, "split", o.split, "evaluate");
  cfg::read(sec, "p_low", o.p_low, "evaluate");
  cfg::read(sec, "p_high", o.p_high, "evaluate");
  cfg::read(sec, "include_gt", o.include_gt, "evaluate");
  cfg::read(sec, "include_raw", o.include_raw, "evaluate");
  std::size_t panels = 0;
  cfg::read(sec, "panels", panels, "evaluate");
  set_if(f.dataset, dataset);
  set_if(f.results, results);
  set_if(f.split, o.split);
  set_if(f.p_low, o.p_low);
  set_if(f.p_high, o.p_high);
  set_if(f.panels, panels);
  if (f.include_gt) o.include_gt = true;
  if (f.no_raw) o.include_raw = false;
  if (!(o.p_low >= 0.0 && o.p_low < o.p_high && o.p_high <= 100.0))
    throw ConfigError("percentiles must satisfy 0 <= p_low < p_high <= 100");
  const fs::path out = ctx.out_dir();
  if (results.empty()) results = out.string();

  const auto m = sim::DatasetManifest::load(manifest_path(dataset));
  const auto ev = metrics::evaluate_run(results, m, o);
  for (const auto& w : ev.warnings) *ctx.err << "warning: " << w << "\n";
  fs::create_directories(out);
  const fs::path csv = out / "metrics.csv", js = out / "metrics.json";
  ctx.guard(csv);
  ctx.guard(js);
  io::write_text(csv, metrics::to_csv(ev));
  json j = metrics::to_json(ev);
  j["config"] = {{"dataset", dataset}, {"results", results}, {"split", o.split}, {"p_low", o.p_low},
                {"p_high", o.p_high}, {"include_gt", o.include_gt}, {"include_raw", o.include_raw}};
  io::write_text(js, j.dump(2) + "\n");

  if (panels > 0) {
    std::set<std::string> methods;
    for (const auto& r : ev.rows) methods.insert(r.method);
    const fs::path pdir = out / "panels";
    fs::create_directories(pdir);
    const auto& ids = m.split_ids(o.split);
    for (std::size_t k = 0; k < std::min(panels, ids.size()); ++k) {
      const std::string& id = ids[k];
      std::vector<std::pair<std::string, Volume>> rows;
      rows.emplace_back("gt", metrics::percentile_normalize(m.load_ground_truth(id), o.p_low, o.p_high));
      for (const auto& method : methods) {
        Volume v;
        if (method == "raw") v = m.load_views(id).views.front();
        else if (method == "gt") continue;
        else {
          const fs::path p = fs::path(results) / method / (id + ".mvv");
          if (!fs::exists(p)) continue;
          v = io::read_volume(p);
        }
        rows.emplace_back(method, metrics::percentile_normalize(v, o.p_low, o.p_high));
      }
      const fs::path png = pdir / (id + ".png");
      png::write_slice_panel(png, rows);
      *ctx.out << png.string() << "\n";
    }
  }
  json resolved = j["config"];
  resolved["command"] = "evaluate";
  resolved["panels"] = panels;
  ctx.echo(out, "evaluate", resolved);
  *ctx.out << csv.string() << "\n" << js.string() << "\n";
}

// benchmark -----------------------------------------------------------------

struct BenchmarkFlags {
  std::optional<std::size_t> dims, kernel;
  std::optional<int> repeats;
};

template <class F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void cmd_benchmark(const Context& ctx, const BenchmarkFlags& f) {
  const json sec = ctx.section("benchmark");
  cfg::reject_unknown(sec, {"dims", "kernel", "repeats"}, "benchmark");
  std::size_t n = sec.value("dims", std::size_t{64}), k = sec.value("kernel", std::size_t{15});
  int repeats = sec.value("repeats", 1);
  set_if(f.dims, n);
  set_if(f.kernel, k);
  set_if(f.repeats, repeats);
  if (n < 1 || k < 1 || k % 2 == 0 || k > n) throw ConfigError("benchmark needs odd kernel <= dims");
  if (repeats < 1) throw ConfigError("benchmark.repeats must be >= 1");

  sim::PhantomConfig pc;
  pc.dims = {n, n, n};
  pc.seed = ctx.g.seed.value_or(1);
  pc.n_objects = std::max(1, static_cast<int>(60 * n * n * n / (64 * 64 * 64)));
  pc.radius_min = std::min(pc.radius_min, std::max(1.0, static_cast<double>(n) / 16.0));
  pc.radius_max = std::max(pc.radius_min, std::min(pc.radius_max, static_cast<double>(n) / 8.0));
  const Volume vol = sim::generate_phantom(pc).volume;
  sim::PsfConfig psfc;
  psfc.dims = k;
  psfc.sigma_axial = std::min(psfc.sigma_axial, static_cast<double>(k) / 4.0);
  const Psf psf = sim::synthesize_psf(psfc);
  const classical::CbifConfig cb;

  Volume a, b, c, e1, e2;
  const int nthreads = parallel::threads();
  const double t_fft = best_of(repeats, [&] { a = convolve(vol, psf); });
  const double t_direct_ser = best_of(repeats, [&] { b = kernels::direct_convolve_serial(vol, psf, BoundaryMode::circular); });
  const double t_direct_par = best_of(repeats, [&] { c = kernels::direct_convolve_parallel(vol, psf, BoundaryMode::circular); });
  const double t_ent_ser = best_of(repeats, [&] { e1 = kernels::local_entropy_serial(vol, cb.window_radius, cb.histogram_bins); });
  const double t_ent_par = best_of(repeats, [&] { e2 = classical::local_entropy(vol, cb); });

  const json report = {
      {"dims", n},
      {"kernel", k},
      {"threads", nthreads},
      {"repeats", repeats},
      {"seconds",
       {{"fft_convolve", t_fft},
        {"direct_convolve_serial", t_direct_ser},
        {"direct_convolve_parallel", t_direct_par},
        {"local_entropy_serial", t_ent_ser},
        {"local_entropy_parallel", t_ent_par}}},
      {"speedup_fft_vs_direct_serial", t_direct_ser / std::max(t_fft, 1e-12)},
      {"max_abs_diff_fft_vs_direct", max_abs_diff(a, b)},
      {"checksums",
       {{"direct_serial", io::hex(io::checksum(b))},
        {"direct_parallel", io::hex(io::checksum(c))},
        {"entropy_serial", io::hex(io::checksum(e1))},
        {"entropy_parallel", io::hex(io::checksum(e2))}}},
      {"parallel_matches_serial", b == c && e1 == e2}};
  const fs::path out = ctx.out_dir();
  fs::create_directories(out);
  const fs::path p = out / "benchmark.json";
  ctx.guard(p);
  io::write_text(p, report.dump(2) + "\n");
  ctx.echo(out, "benchmark", {{"command", "benchmark"}, {"dims", n}, {"kernel", k}, {"repeats", repeats}});
  *ctx.out << p.string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view fusion toolkit: simulate, fuse, train, infer, evaluate, benchmark", "mvfuse"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* a) {
    a->add_option("--config", g.config, "JSON config file");
    a->add_option("--seed", g.seed, "Global seed");
    a->add_option("--threads", g.threads, "Thread count (fallback: MVFUSE_THREADS)");
    a->add_option("--out", g.out, "Output directory");
    a->add_flag("--force", g.force, "Overwrite existing outputs");
  };

  SimulateFlags sf;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic multi-view dataset");
  add_globals(sim_cmd);
  sim_cmd->add_option("--preset", sf.preset, "embryo or nuclei");
  sim_cmd->add_option("--samples", sf.samples, "Number of samples");
  sim_cmd->add_option("--views", sf.views, "Number of views (2 or 4)");
  sim_cmd->add_option("--dims", sf.dims, "Volume extent (one or three values)");

  FuseFlags ff;
  auto* fuse_cmd = app.add_subcommand("fuse", "Run a classical fusion method");
  add_globals(fuse_cmd);
  fuse_cmd->add_option("--dataset", ff.dataset, "Dataset directory or manifest");
  fuse_cmd->add_option("--method", ff.method, "ebmd or cbif");
  fuse_cmd->add_option("--split", ff.split, "train, val, test or all");
  fuse_cmd->add_option("--dtype", ff.dtype, "f32 or f64");
  fuse_cmd->add_option("--iterations", ff.iterations, "EBMD iterations");
  fuse_cmd->add_option("--tikhonov", ff.tikhonov, "EBMD Tikhonov weight");
  fuse_cmd->add_option("--boundary", ff.boundary, "circular or zero-pad");
  fuse_cmd->add_option("--init", ff.init, "average-of-views or uniform");
  fuse_cmd->add_option("--window", ff.window, "CBIF entropy window radius");
  fuse_cmd->add_option("--bins", ff.bins, "CBIF histogram bins");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train the fusion generator");
  add_globals(train_cmd);
  train_cmd->add_option("--dataset", tf.dataset, "Dataset directory or manifest");
  train_cmd->add_option("--mode", tf.mode, "self or semi");
  train_cmd->add_option("--arch", tf.arch, "desk or paper");
  train_cmd->add_option("--epochs", tf.epochs);
  train_cmd->add_option("--batch", tf.batch);
  train_cmd->add_option("--lr", tf.lr);
  train_cmd->add_option("--lambda", tf.lambda, "Cycle loss weight");
  train_cmd->add_option("--lambda-gradient", tf.lambda_gradient, "Gradient loss weight (self mode)");
  train_cmd->add_option("--steps-per-epoch", tf.steps);
  train_cmd->add_option("--tile", tf.tile, "Tile extent (one or three values)");
  train_cmd->add_option("--base-channels", tf.base);
  train_cmd->add_option("--levels", tf.levels);
  train_cmd->add_option("--max-channels", tf.max_channels);
  train_cmd->add_option("--resume", tf.resume, "Checkpoint to continue from");

  InferFlags inf;
  auto* infer_cmd = app.add_subcommand("infer", "Fuse views with a trained generator");
  add_globals(infer_cmd);
  infer_cmd->add_option("--dataset", inf.dataset, "Dataset directory or manifest");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "generator.mvv or checkpoint.mvv");
  infer_cmd->add_option("--split", inf.split);
  infer_cmd->add_option("--name", inf.name, "Method name for the output folder");
  infer_cmd->add_option("--dtype", inf.dtype);
  infer_cmd->add_option("--tile", inf.tile, "Tile extent (one or three values)");
  infer_cmd->add_option("--overlap", inf.overlap, "Voxels shared by neighbouring tile cores");
  infer_cmd->add_option("--margin", inf.margin, "Voxels dropped at each tile side (default: from training)");
  infer_cmd->add_option("--boundary", inf.boundary, "Tile fill past the volume: circular or zero-pad");
  infer_cmd->add_flag("--clamp", inf.clamp, "Clamp output to >= 0");

  EvaluateFlags ef;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score fused volumes against ground truth");
  add_globals(eval_cmd);
  eval_cmd->add_option("--dataset", ef.dataset, "Dataset directory or manifest");
  eval_cmd->add_option("--results", ef.results, "Directory holding one folder per method");
  eval_cmd->add_option("--split", ef.split);
  eval_cmd->add_option("--p-low", ef.p_low);
  eval_cmd->add_option("--p-high", ef.p_high);
  eval_cmd->add_option("--panels", ef.panels, "Number of samples to render as PNG panels");
  eval_cmd->add_flag("--include-gt", ef.include_gt);
  eval_cmd->add_flag("--no-raw", ef.no_raw);

  BenchmarkFlags bf;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time FFT, direct and parallel kernels");
  add_globals(bench_cmd);
  bench_cmd->add_option("--dims", bf.dims);
  bench_cmd->add_option("--kernel", bf.kernel);
  bench_cmd->add_option("--repeats", bf.repeats);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return config_error;
  }

  try {
    Context ctx{g, json::object(), &out, &err};
    if (!g.config.empty()) {
      try {
        ctx.file = json::parse(io::read_text(g.config));
      } catch (const json::exception& e) {
        throw ConfigError(g.config + ": " + e.what());
      }
      cfg::reject_unknown(ctx.file, {"seed", "threads", "out", "simulate", "fuse", "train", "infer", "evaluate", "benchmark"},
                          "config");
      if (!ctx.g.seed && ctx.file.contains("seed")) ctx.g.seed = ctx.file.at("seed").get<std::uint64_t>();
      if (!ctx.g.threads && ctx.file.contains("threads")) ctx.g.threads = ctx.file.at("threads").get<int>();
    }
    if (ctx.g.threads && *ctx.g.threads < 1) throw ConfigError("--threads must be >= 1");
    parallel::set_threads(parallel::resolve_threads(ctx.g.threads));
    if (sim_cmd->parsed()) cmd_simulate(ctx, sf);
    else if (fuse_cmd->parsed()) cmd_fuse(ctx, ff);
    else if (train_cmd->parsed()) cmd_train(ctx, tf);
    else if (infer_cmd->parsed()) cmd_infer(ctx, inf);
    else if (eval_cmd->parsed()) cmd_evaluate(ctx, ef);
    else if (bench_cmd->parsed()) cmd_benchmark(ctx, bf);
    return ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return io_error;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return io_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
}

}  // namespace mvf::cli
