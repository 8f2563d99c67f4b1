#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/io.hpp"
#include "mvf/volume.hpp"

namespace mvf::sim {

using json = nlohmann::json;

enum class PhantomKind { embryo, nuclei };

struct PhantomConfig {
  PhantomKind kind = PhantomKind::embryo;
  Dims dims{64, 64, 64};
  int n_objects = 60;
  double radius_min = 2.5;
  double radius_max = 4.0;
  /// Embryo shell radius as a fraction of the smallest half-extent.
  double shell_radius_frac = 0.6;
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct NoiseConfig {
  double gaussian_sigma = 0.01;
  /// Expected photon count at intensity 1.0; 0 disables shot noise.
  double poisson_photons = 1000.0;
  std::uint64_t seed = 7;

  bool enabled() const { return gaussian_sigma > 0.0 || poisson_photons > 0.0; }
  void validate() const;
};

struct PsfConfig {
  std::size_t dims = 19;
  double sigma_lateral = 1.0;
  double sigma_axial = 3.0;

  void validate() const;
};

/// One rasterized object; semi-axes in voxels, center in voxel coordinates.
struct PlacedObject {
  double cx = 0, cy = 0, cz = 0;
  double ax = 1, ay = 1, az = 1;
  double intensity = 1;
};

struct Phantom {
  Volume volume;
  std::vector<PlacedObject> objects;
};

/// Deterministic in cfg.seed. Objects are axis-aligned ellipsoids with
/// intensity I * exp(-2 r^2) for normalized radius r <= 1 and exactly 0
/// outside; overlapping objects combine by maximum.
Phantom generate_phantom(const PhantomConfig& cfg);

/// Normalized anisotropic Gaussian, axial elongation along z. Records a
/// warning when more than 1% of the continuous Gaussian mass falls outside
/// the kernel.
Psf synthesize_psf(const PsfConfig& cfg);
double psf_tail_mass(const PsfConfig& cfg);

/// x = clamp>=0(poisson(latent * h) + gaussian). With noise disabled the
/// blurred volume is returned untouched.
Volume degrade_view(const Volume& latent, const Psf& psf, const NoiseConfig& noise,
                    BoundaryMode mode = BoundaryMode::circular);

/// Quarter turns about y for each view: {0,1,2,3} for four views, {0,2} for two.
std::vector<int> view_quarter_turns(int n_views);
std::vector<Psf> view_psfs(const Psf& base, int n_views);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Quad-view: 108/21/11 of 140 scaled proportionally. Two-view: 68 of 80
/// train, the rest shared by validation and test.
Split default_split(const std::vector<std::string>& ids, int n_views);

struct DatasetConfig {
  int n_views = 4;
  std::size_t n_samples = 140;
  io::Dtype dtype = io::Dtype::f32;
  BoundaryMode boundary = BoundaryMode::circular;
};

struct SampleEntry {
  std::string id;
  std::filesystem::path gt;
  std::vector<std::filesystem::path> views;
  std::vector<int> angles;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SampleEntry> samples;
  std::vector<std::filesystem::path> psfs;
  std::vector<int> angles;
  Split split;
  json configs;

  static DatasetManifest load(const std::filesystem::path& manifest_path);
  void save(const std::filesystem::path& manifest_path) const;
  const SampleEntry& sample(const std::string& id) const;
  const std::vector<std::string>& split_ids(const std::string& name) const;
  std::vector<Psf> load_psfs() const;
  /// Reads views only; never touches the ground-truth file.
  ViewSet load_views(const std::string& id) const;
  Volume load_ground_truth(const std::string& id) const;
  int n_views() const { return static_cast<int>(psfs.size()); }
};

/// Writes psfs/, one directory per sample (gt.mvv + view files) and
/// manifest.json under out_dir. An existing non-empty out_dir is an error
/// unless force is set.
DatasetManifest make_dataset(const PhantomConfig& phantom, const PsfConfig& psf, const NoiseConfig& noise,
                             const DatasetConfig& dataset, const std::filesystem::path& out_dir, bool force = false);

/// Desk-scale defaults for the quad-view embryo and two-view nuclei sets.
struct Preset {
  PhantomConfig phantom;
  PsfConfig psf;
  NoiseConfig noise;
  DatasetConfig dataset;
};
Preset embryo_preset();
Preset nuclei_preset();
Preset preset_by_name(const std::string& name);

void to_json(json& j, const PhantomConfig& c);
void from_json(const json& j, PhantomConfig& c);
void to_json(json& j, const NoiseConfig& c);
void from_json(const json& j, NoiseConfig& c);
void to_json(json& j, const PsfConfig& c);
void from_json(const json& j, PsfConfig& c);
void to_json(json& j, const DatasetConfig& c);
void from_json(const json& j, DatasetConfig& c);

}  // namespace mvf::sim
