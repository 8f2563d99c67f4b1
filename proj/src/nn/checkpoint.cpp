#include "mvf/nn/checkpoint.hpp"

#include "mvf/error.hpp"
#include "mvf/io.hpp"

namespace mvf::nn {

const NetParams& Checkpoint::get(const std::string& name) const {
  for (const auto& n : nets)
    if (n.name == name) return n.params;
  throw IoError("checkpoint has no network '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& n : nets)
    if (n.name == name) return true;
  return false;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json table = nlohmann::json::array();
  std::vector<double> blob;
  for (const auto& n : ckpt.nets) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : n.params.tensors) {
      tensors.push_back({{"id", t.id}, {"shape", t.shape}, {"offset", blob.size()}, {"count", t.values.size()}});
      blob.insert(blob.end(), t.values.begin(), t.values.end());
    }
    table.push_back({{"name", n.name}, {"seed", n.params.seed}, {"tensors", tensors}});
  }
  const nlohmann::json header = {{"kind", "netparams"}, {"dtype", "f64"}, {"networks", table}, {"meta", ckpt.meta}};
  const auto bytes = io::encode_f64(blob);
  io::write_container(path, header, bytes);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path);
  if (c.header.value("kind", "") != "netparams") throw IoError(path.string() + ": not a netparams checkpoint");
  const std::vector<double> blob = io::decode_f64(c.payload);
  Checkpoint ck;
  try {
    ck.meta = c.header.value("meta", nlohmann::json::object());
    for (const auto& n : c.header.at("networks")) {
      NamedParams np;
      np.name = n.at("name").get<std::string>();
      np.params.seed = n.at("seed").get<std::uint64_t>();
      for (const auto& t : n.at("tensors")) {
        const auto off = t.at("offset").get<std::size_t>();
        const auto cnt = t.at("count").get<std::size_t>();
        if (off + cnt > blob.size()) throw IoError(path.string() + ": tensor table exceeds payload");
        const std::size_t i = np.params.add(t.at("id").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>());
        if (np.params.tensors[i].values.size() != cnt) throw IoError(path.string() + ": tensor shape/count mismatch");
        std::copy_n(blob.begin() + static_cast<long>(off), cnt, np.params.tensors[i].values.begin());
      }
      ck.nets.push_back(std::move(np));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  return ck;
}

}  // namespace mvf::nn
