#include "mvf/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mvf/error.hpp"

namespace mvf::nn {

std::size_t NetParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

std::size_t NetParams::add(std::string id, std::vector<std::size_t> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  tensors.push_back({std::move(id), std::move(shape), std::vector<double>(n, 0.0)});
  return tensors.size() - 1;
}

const ParamTensor& NetParams::find(const std::string& id) const {
  for (const auto& t : tensors)
    if (t.id == id) return t;
  throw Error("no parameter tensor '" + id + "'");
}

NetParams NetParams::zeros_like() const {
  NetParams z = *this;
  z.set_zero();
  return z;
}

void NetParams::set_zero() {
  for (auto& t : tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool NetParams::all_finite() const {
  for (const auto& t : tensors)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool NetParams::same_layout(const NetParams& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].id != other.tensors[i].id || tensors[i].shape != other.tensors[i].shape) return false;
  return true;
}

double& NetParams::flat(std::size_t k) {
  for (auto& t : tensors) {
    if (k < t.values.size()) return t.values[k];
    k -= t.values.size();
  }
  throw Error("flat parameter index out of range");
}

}  // namespace mvf::nn
