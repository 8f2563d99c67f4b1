#include "mvf/nn/infer.hpp"

#include "mvf/error.hpp"
#include "mvf/json_config.hpp"
#include "mvf/nn/checkpoint.hpp"

namespace mvf::nn {

void to_json(nlohmann::json& j, const InferConfig& c) {
  j = {{"tile", {c.tile.nx, c.tile.ny, c.tile.nz}},
       {"overlap", c.overlap},
       {"margin", c.margin},
       {"boundary", to_string(c.boundary)},
       {"clamp_nonnegative", c.clamp_nonnegative}};
}

void from_json(const nlohmann::json& j, InferConfig& c) {
  const char* ctx = "infer";
  cfg::reject_unknown(j, {"tile", "overlap", "margin", "boundary", "clamp_nonnegative"}, ctx);
  if (j.contains("tile")) {
    std::vector<std::size_t> t;
    cfg::read(j, "tile", t, ctx);
    if (t.size() != 3) throw ConfigError("infer.tile must be [nx, ny, nz]");
    c.tile = {t[0], t[1], t[2]};
  }
  cfg::read(j, "overlap", c.overlap, ctx);
  if (j.contains("margin")) {
    std::vector<std::size_t> m;
    cfg::read(j, "margin", m, ctx);
    if (m.size() != 3) throw ConfigError("infer.margin must be [mx, my, mz]");
    c.margin = {m[0], m[1], m[2]};
  }
  if (j.contains("boundary")) {
    std::string b;
    cfg::read(j, "boundary", b, ctx);
    c.boundary = parse_boundary(b);
  }
  cfg::read(j, "clamp_nonnegative", c.clamp_nonnegative, ctx);
}

InferConfig load_inference_defaults(const std::filesystem::path& generator_path) {
  const Checkpoint ck = read_checkpoint(generator_path);
  InferConfig c;
  if (ck.meta.contains("inference")) c = ck.meta.at("inference").get<InferConfig>();
  return c;
}

std::size_t min_tile_extent(const GeneratorConfig& cfg) {
  return cfg.divisor() * static_cast<std::size_t>(cfg.kernel);
}

std::vector<std::size_t> tile_starts(std::size_t n, std::size_t tile, std::size_t overlap) {
  if (tile >= n) return {0};
  if (overlap >= tile) throw ConfigError("tile overlap must be smaller than the tile");
  const std::size_t step = tile - overlap;
  std::vector<std::size_t> s;
  for (std::size_t p = 0;; p += step) {
    if (p + tile >= n) {
      s.push_back(n - tile);
      break;
    }
    s.push_back(p);
  }
  return s;
}

namespace {

// Tile with origin o (may be negative or run past the end), filled by
// wrapping or with zeros outside the volume.
Tensor gather(const Tensor& x, const long o[3], Dims tile, BoundaryMode mode) {
  const Dims d = x.dims();
  Tensor t(x.channels(), tile);
  const long n[3] = {static_cast<long>(d.nx), static_cast<long>(d.ny), static_cast<long>(d.nz)};
  for (int c = 0; c < x.channels(); ++c)
    for (std::size_t k = 0; k < tile.nz; ++k)
      for (std::size_t j = 0; j < tile.ny; ++j)
        for (std::size_t i = 0; i < tile.nx; ++i) {
          long p[3] = {o[0] + static_cast<long>(i), o[1] + static_cast<long>(j), o[2] + static_cast<long>(k)};
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            if (mode == BoundaryMode::circular) p[a] = ((p[a] % n[a]) + n[a]) % n[a];
            else if (p[a] < 0 || p[a] >= n[a]) inside = false;
          }
          if (inside)
            t.at(c, i, j, k) =
                x.at(c, static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]), static_cast<std::size_t>(p[2]));
        }
  return t;
}

}  // namespace

Volume infer(const Generator& gen, const NetParams& params, const ViewSet& views, const InferConfig& cfg) {
  views.validate(1);
  const GeneratorConfig& g = gen.config();
  if (static_cast<int>(views.size()) != g.in_channels)
    throw Error("generator expects " + std::to_string(g.in_channels) + " views, got " + std::to_string(views.size()));
  const Dims d = views.dims();
  const Tensor x = Tensor::from_volumes(views.views);
  std::size_t t3[3];
  for (int a = 0; a < 3; ++a) {
    std::size_t t = cfg.tile[a] == 0 ? d[a] : std::min(cfg.tile[a], d[a]);
    if (t % g.divisor() != 0)
      throw ConfigError("tile extent " + std::to_string(t) + " along axis " + std::to_string(a) +
                        " is not divisible by " + std::to_string(g.divisor()));
    if (t < d[a] && t < min_tile_extent(g))
      throw ConfigError("tile extent " + std::to_string(t) + " is below the minimum " +
                        std::to_string(min_tile_extent(g)));
    t3[a] = t;
  }
  const Dims tile{t3[0], t3[1], t3[2]};
  const bool no_margin = cfg.margin[0] == 0 && cfg.margin[1] == 0 && cfg.margin[2] == 0;
  if (tile == d && no_margin) {
    Volume out = gen.forward(params, x).channel_volume(0);
    if (cfg.clamp_nonnegative) clamp_nonnegative(out);
    return out;
  }
  std::size_t c3[3];
  for (int a = 0; a < 3; ++a) {
    if (2 * cfg.margin[static_cast<std::size_t>(a)] >= tile[a])
      throw ConfigError("infer.margin leaves no tile core along axis " + std::to_string(a));
    c3[a] = tile[a] - 2 * cfg.margin[static_cast<std::size_t>(a)];
  }
  const Dims core{c3[0], c3[1], c3[2]};
  const std::size_t mx = cfg.margin[0], my = cfg.margin[1], mz = cfg.margin[2];
  auto tent = [](std::size_t i, std::size_t n) { return static_cast<double>(std::min(i + 1, n - i)); };
  Volume acc(d), wsum(d);
  for (std::size_t z0 : tile_starts(d.nz, core.nz, cfg.overlap))
    for (std::size_t y0 : tile_starts(d.ny, core.ny, cfg.overlap))
      for (std::size_t x0 : tile_starts(d.nx, core.nx, cfg.overlap)) {
        const long o[3] = {static_cast<long>(x0) - static_cast<long>(mx), static_cast<long>(y0) - static_cast<long>(my),
                           static_cast<long>(z0) - static_cast<long>(mz)};
        const Tensor out = gen.forward(params, gather(x, o, tile, cfg.boundary));
        for (std::size_t k = 0; k < core.nz; ++k)
          for (std::size_t j = 0; j < core.ny; ++j)
            for (std::size_t i = 0; i < core.nx; ++i) {
              const double w = tent(i, core.nx) * tent(j, core.ny) * tent(k, core.nz);
              acc(x0 + i, y0 + j, z0 + k) += w * out.at(0, mx + i, my + j, mz + k);
              wsum(x0 + i, y0 + j, z0 + k) += w;
            }
      }
  for (std::size_t i = 0; i < d.size(); ++i) acc[i] /= wsum[i];
  if (cfg.clamp_nonnegative) clamp_nonnegative(acc);
  return acc;
}

}  // namespace mvf::nn
