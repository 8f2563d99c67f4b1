#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mvf/nn/layers.hpp"
#include "mvf/nn/params.hpp"

namespace mvf::nn {

struct GeneratorConfig {
  int in_channels = 4;
  int out_channels = 1;
  int levels = 3;
  int base_channels = 8;
  int max_channels = 256;
  int convs_per_level = 2;
  int kernel = 3;
  double slope = 0.2;
  bool norm = true;
  bool bias = true;
  /// Adds the mean of the input channels to the head output.
  bool input_residual = false;
  std::uint64_t seed = 1;

  void validate() const;
  int channels_at(int level) const;
  /// Spatial dims must be divisible by this along every axis.
  std::size_t divisor() const { return std::size_t{1} << (levels - 1); }
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

/// Saved activations of one conv + norm + activation unit.
struct UnitRecord {
  Tensor input;
  Tensor act_in;  // input of the LeakyReLU (norm output when norm is on)
  NormCache norm;
};

struct GeneratorRecord {
  bool valid = false;
  Dims dims{0, 0, 0};
  std::vector<UnitRecord> units;
  std::vector<PoolCache> pools;
  std::vector<Tensor> up_inputs;
  Tensor head_input;
};

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  /// Initializes parameters from cfg.seed (He-normal weights, zero biases).
  NetParams init_params() const;
  /// Layout-only parameter set (all zeros).
  NetParams zero_params() const;

  /// x: in_channels x dims; returns out_channels x dims.
  Tensor forward(const NetParams& p, const Tensor& x, GeneratorRecord* rec = nullptr) const;
  /// Accumulates parameter gradients into grads; returns the input gradient
  /// when need_input_grad is set.
  Tensor backward(const NetParams& p, const GeneratorRecord& rec, const Tensor& grad_out, NetParams& grads,
                  bool need_input_grad = false) const;

  void check_input(const Tensor& x) const;

 private:
  struct Unit {
    ConvSpec conv;
    std::size_t w = 0, b = 0;
  };
  struct Up {
    UpConvSpec spec;
    std::size_t w = 0, b = 0;
  };

  Tensor unit_forward(const NetParams& p, const Unit& u, const Tensor& x, UnitRecord* rec) const;
  Tensor unit_backward(const NetParams& p, const Unit& u, const UnitRecord& rec, const Tensor& g, NetParams& grads,
                       bool need_input_grad) const;

  GeneratorConfig cfg_;
  // enc_[l]: units of encoder level l; dec_[l]: units of decoder level l
  // (levels-1 entries, index l merges skip l).
  std::vector<std::vector<Unit>> enc_, dec_;
  std::vector<Up> ups_;
  Unit head_;
  NetParams layout_;
};

}  // namespace mvf::nn
