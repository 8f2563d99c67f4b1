#include "mvf/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "mvf/error.hpp"

namespace mvf::io {

namespace {

constexpr std::array<char, 8> kMagic{'M', 'V', 'V', 'O', 'L', '1', '\0', '\0'};

static_assert(std::endian::native == std::endian::little, "MVV1 I/O assumes a little-endian host");

std::mutex audit_mutex;
bool audit_on = false;
std::vector<std::string> audit_paths;

void record_read(const std::filesystem::path& path) {
  std::lock_guard lock(audit_mutex);
  if (audit_on) audit_paths.push_back(std::filesystem::absolute(path).lexically_normal().string());
}

Dims dims_from(const json& header) {
  const auto& d = header.at("dims");
  if (!d.is_array() || d.size() != 3) throw IoError("MVV1 header: dims must be [nx,ny,nz]");
  return {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
}

Volume decode_volume(const Container& c, const std::filesystem::path& path) {
  if (c.header.value("order", std::string("x-fastest")) != "x-fastest")
    throw IoError(path.string() + ": unsupported voxel order");
  const Dims dims = dims_from(c.header);
  const Dtype dtype = parse_dtype(c.header.at("dtype").get<std::string>());
  const std::size_t n = dims.size();
  std::vector<double> data(n);
  if (dtype == Dtype::f64) {
    if (c.payload.size() != n * 8) throw IoError(path.string() + ": payload size mismatch");
    std::memcpy(data.data(), c.payload.data(), n * 8);
  } else {
    if (c.payload.size() != n * 4) throw IoError(path.string() + ": payload size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, c.payload.data() + 4 * i, 4);
      data[i] = f;
    }
  }
  return Volume(dims, std::move(data));
}

}  // namespace

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw ConfigError("unknown dtype '" + s + "'");
}

std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

void write_container(const std::filesystem::path& path, const json& header, std::span<const unsigned char> payload) {
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto len = static_cast<std::uint32_t>(text.size());
  unsigned char len_bytes[4] = {static_cast<unsigned char>(len & 0xff), static_cast<unsigned char>((len >> 8) & 0xff),
                                static_cast<unsigned char>((len >> 16) & 0xff),
                                static_cast<unsigned char>((len >> 24) & 0xff)};
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  record_read(path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError(path.string() + ": not an MVV1 file");
  unsigned char len_bytes[4];
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  if (!in) throw IoError(path.string() + ": truncated header length");
  const std::uint32_t len = len_bytes[0] | (len_bytes[1] << 8) | (len_bytes[2] << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw IoError(path.string() + ": truncated header");
  Container c;
  try {
    c.header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad header JSON: " + e.what());
  }
  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return c;
}

void write_volume(const std::filesystem::path& path, const Volume& v, Dtype dtype, const json& extra) {
  json header = extra.is_object() ? extra : json::object();
  header["kind"] = header.value("kind", std::string("volume"));
  header["dims"] = {v.dims().nx, v.dims().ny, v.dims().nz};
  header["dtype"] = to_string(dtype);
  header["order"] = "x-fastest";
  std::vector<unsigned char> payload;
  if (dtype == Dtype::f64) {
    payload = encode_f64(v.data());
  } else {
    payload.resize(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float f = static_cast<float>(v[i]);
      std::memcpy(payload.data() + 4 * i, &f, 4);
    }
  }
  write_container(path, header, payload);
}

Volume read_volume(const std::filesystem::path& path) {
  Container c = read_container(path);
  const std::string kind = c.header.value("kind", std::string("volume"));
  if (kind != "volume" && kind != "psf") throw IoError(path.string() + ": expected a volume, found kind '" + kind + "'");
  return decode_volume(c, path);
}

void write_psf(const std::filesystem::path& path, const Psf& psf) {
  json extra{{"kind", "psf"}, {"center", {psf.center().nx, psf.center().ny, psf.center().nz}}};
  if (!psf.warning().empty()) extra["warning"] = psf.warning();
  write_volume(path, psf.kernel(), Dtype::f64, extra);
}

Psf read_psf(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.header.value("kind", std::string()) != "psf") throw IoError(path.string() + ": not a psf container");
  Psf psf(decode_volume(c, path));
  if (c.header.contains("warning")) psf.set_warning(c.header["warning"].get<std::string>());
  return psf;
}

std::vector<unsigned char> encode_f64(std::span<const double> values) {
  std::vector<unsigned char> out(values.size() * 8);
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

std::vector<double> decode_f64(std::span<const unsigned char> bytes) {
  if (bytes.size() % 8 != 0) throw IoError("f64 payload length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::uint64_t checksum(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t checksum(const Volume& v) { return checksum(encode_f64(v.data())); }

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checksum(bytes);
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void audit_enable(bool on) {
  std::lock_guard lock(audit_mutex);
  audit_on = on;
}

void audit_clear() {
  std::lock_guard lock(audit_mutex);
  audit_paths.clear();
}

std::vector<std::string> audit_log() {
  std::lock_guard lock(audit_mutex);
  return audit_paths;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mvf::io
