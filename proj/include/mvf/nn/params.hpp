#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mvf::nn {

struct ParamTensor {
  std::string id;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Ordered parameter store for one network.
struct NetParams {
  std::vector<ParamTensor> tensors;
  std::uint64_t seed = 0;

  std::size_t count() const;
  std::size_t add(std::string id, std::vector<std::size_t> shape);
  std::span<double> values(std::size_t i) { return tensors[i].values; }
  std::span<const double> values(std::size_t i) const { return tensors[i].values; }
  const ParamTensor& find(const std::string& id) const;

  NetParams zeros_like() const;
  void set_zero();
  bool all_finite() const;
  bool same_layout(const NetParams& other) const;
  /// Flat view across tensors in order, for finite-difference checks.
  double& flat(std::size_t k);
};

}  // namespace mvf::nn
