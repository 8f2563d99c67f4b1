#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "mvf/nn/layers.hpp"
#include "mvf/nn/params.hpp"

namespace mvf::nn {

struct DiscriminatorConfig {
  int n_scales = 2;
  /// One entry per scale. Scale 0 sees the whole tile, so its dims must
  /// equal the training tile dims.
  std::vector<Dims> patch_dims{{32, 32, 32}, {16, 16, 16}};
  int depth = 3;
  int base_channels = 8;
  int max_channels = 64;
  double slope = 0.2;
  bool norm = true;
  std::uint64_t seed = 2;

  void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

struct DiscriminatorRecord {
  bool valid = false;
  std::vector<Tensor> inputs;
  std::vector<Tensor> act_in;
  std::vector<NormCache> norms;
  Tensor head_input;
};

/// Patch critic for one scale: strided conv units, a 1x1x1 head, and the
/// global mean of the head map as the score.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, int scale);

  const Dims& patch_dims() const { return patch_; }
  NetParams init_params() const;
  NetParams zero_params() const;

  double forward(const NetParams& p, const Tensor& patch, DiscriminatorRecord* rec = nullptr) const;
  /// Returns the gradient with respect to the patch.
  Tensor backward(const NetParams& p, const DiscriminatorRecord& rec, double grad_score, NetParams& grads) const;

 private:
  struct Unit {
    ConvSpec conv;
    bool norm = false;
    std::size_t w = 0, b = 0;
  };
  std::vector<Unit> units_;
  Unit head_;
  Dims patch_;
  double slope_;
  std::uint64_t seed_;
  NetParams layout_;
};

/// Scale 0 returns the whole tile; scale j > 0 returns a uniform random crop
/// of patch_dims[j]. Offsets are written to offset when given.
Tensor crop_scale_patch(const Tensor& tile, const DiscriminatorConfig& cfg, int scale, std::mt19937_64& rng,
                        std::size_t* offset = nullptr);

}  // namespace mvf::nn
