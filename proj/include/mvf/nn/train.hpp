#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/nn/adam.hpp"
#include "mvf/nn/checkpoint.hpp"
#include "mvf/nn/discriminator.hpp"
#include "mvf/nn/generator.hpp"
#include "mvf/nn/losses.hpp"
#include "mvf/phantom.hpp"

namespace mvf::nn {

struct TrainConfig {
  TrainMode mode = TrainMode::self;
  double lambda_cycle = 10.0;
  double lambda_gradient = 1.0;
  AdamConfig adam;
  int batch = 1;
  int epochs = 90;
  /// Tile extent; a tile equal to the volume uses the whole sample.
  Dims tile_dims{32, 32, 32};
  /// Limits steps per epoch; 0 visits every input sample once.
  std::size_t steps_per_epoch = 0;
  std::uint64_t seed = 1;
  /// Fraction of the training split held out as unpaired ground truth (semi).
  double gt_split = 0.5;
  BoundaryMode boundary = BoundaryMode::circular;
  /// With circular boundaries, crop tiles with wrap-around instead of
  /// inside the volume.
  bool periodic_crops = true;

  void validate() const;
};

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode m);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One row of the loss history, averaged over the steps of an epoch.
struct EpochRecord {
  int epoch = 0;
  double cycle = 0.0;
  double adv_g = 0.0;
  std::vector<double> adv_d;
  double grad_loss = 0.0;
  double wall_time = 0.0;  // seconds; kept out of checkpoints so they stay reproducible
};

std::string history_csv(const std::vector<EpochRecord>& history, int n_scales);

/// Inputs of one generator step. z_real enables the ground-truth cycle path.
struct StepData {
  const Tensor* views = nullptr;
  const std::vector<ConvolutionOperator>* ops = nullptr;
  const Tensor* z_real = nullptr;
  Margin margin{0, 0, 0};
};

struct ObjectiveWeights {
  bool adversarial = false;
  double lambda_cycle = 10.0;
  double lambda_gradient = 0.0;
};

/// adv + lambda_cycle * (view cycle + gt cycle) + lambda_gradient * gradient.
/// Patch crops are drawn from crop_seed, so repeated calls see the same
/// patches. When grads is given, parameter gradients are added to it.
/// The generator output for the views is returned through z_out.
double generator_objective(const Generator& gen, const NetParams& gp, const std::vector<Discriminator>& discs,
                           const std::vector<NetParams>& dps, const DiscriminatorConfig& dcfg, const StepData& data,
                           const ObjectiveWeights& w, std::uint64_t crop_seed, NetParams* grads,
                           LossParts* parts = nullptr, Tensor* z_out = nullptr);

/// Sum over scales of the LS-GAN critic loss for one fake and one real tile.
double discriminator_objective(const std::vector<Discriminator>& discs, const std::vector<NetParams>& dps,
                               const DiscriminatorConfig& dcfg, const Tensor& fake, const Tensor& real,
                               std::uint64_t crop_seed, std::vector<NetParams>* grads,
                               std::vector<double>* per_scale = nullptr);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  NetParams generator;
  std::vector<NetParams> discriminators;
  std::vector<EpochRecord> history;
  std::vector<std::string> input_ids;
  std::vector<std::string> gt_ids;
};

/// Splits the training ids into (input, unpaired ground truth).
std::pair<std::vector<std::string>, std::vector<std::string>> partition_training_set(
    const std::vector<std::string>& train_ids, const TrainConfig& cfg);

/// Writes checkpoint.mvv and history.csv after every epoch and
/// generator.mvv at the end.
TrainResult train(const sim::DatasetManifest& manifest, const TrainConfig& tcfg, GeneratorConfig gcfg,
                  const DiscriminatorConfig& dcfg, const TrainOptions& opts);

/// Generator checkpoint with its config, and optionally the recommended
/// inference tiling, in the metadata.
void save_generator(const std::filesystem::path& path, const GeneratorConfig& cfg, const NetParams& params,
                    const nlohmann::json& inference = {});
std::pair<GeneratorConfig, NetParams> load_generator(const std::filesystem::path& path);

}  // namespace mvf::nn
