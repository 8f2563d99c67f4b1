#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/nn/params.hpp"

namespace mvf::nn {

struct NamedParams {
  std::string name;
  NetParams params;
};

/// Container with "kind":"netparams": a JSON table of networks and tensors
/// followed by every value as little-endian f64, in table order.
struct Checkpoint {
  std::vector<NamedParams> nets;
  nlohmann::json meta = nlohmann::json::object();

  const NetParams& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mvf::nn
