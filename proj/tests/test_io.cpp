#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "mvf/error.hpp"
#include "mvf/io.hpp"
#include "oracles.hpp"

using namespace mvf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "mvf_test_io";
  fs::create_directories(d);
  return d / name;
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("container layout: magic, little-endian length, json, payload") {
  const fs::path p = scratch("layout.mvv");
  const Volume v({2, 1, 1}, std::vector<double>{1.5, -2.0});
  io::write_volume(p, v, io::Dtype::f64);
  const auto b = file_bytes(p);
  REQUIRE(b.size() > 12);
  CHECK(std::memcmp(b.data(), "MVVOL1\0\0", 8) == 0);
  const std::uint32_t len = b[8] | (b[9] << 8) | (b[10] << 16) | (static_cast<std::uint32_t>(b[11]) << 24);
  const auto header = nlohmann::json::parse(std::string(b.begin() + 12, b.begin() + 12 + len));
  CHECK(header["dtype"] == "f64");
  CHECK(header["order"] == "x-fastest");
  CHECK(header["dims"] == nlohmann::json::array({2, 1, 1}));
  CHECK(b.size() == 12 + len + 16);
  double first;
  std::memcpy(&first, b.data() + 12 + len, 8);
  CHECK(first == 1.5);
}

TEST_CASE("volume round trip f64 exact, f32 within float precision") {
  std::mt19937_64 rng(5);
  const Volume v = oracle::random_volume({5, 3, 4}, rng);
  const fs::path p64 = scratch("v64.mvv"), p32 = scratch("v32.mvv");
  io::write_volume(p64, v, io::Dtype::f64);
  CHECK(io::read_volume(p64) == v);
  io::write_volume(p32, v, io::Dtype::f32);
  const Volume r = io::read_volume(p32);
  CHECK(r.dims() == v.dims());
  CHECK(max_abs_diff(r, v) < 1e-7);
}

TEST_CASE("psf round trip keeps center and warning") {
  std::mt19937_64 rng(6);
  Psf h(oracle::random_volume({3, 5, 7}, rng));
  h.set_warning("tail");
  const fs::path p = scratch("psf.mvv");
  io::write_psf(p, h);
  const Psf g = io::read_psf(p);
  CHECK(g == h);
  CHECK(g.warning() == "tail");
  const auto c = io::read_container(p);
  CHECK(c.header["kind"] == "psf");
  CHECK(c.header["center"] == nlohmann::json::array({1, 2, 3}));
}

TEST_CASE("corrupt files raise IoError") {
  const fs::path p = scratch("bad.mvv");
  io::write_text(p, "not a container");
  CHECK_THROWS_AS(io::read_volume(p), IoError);
  CHECK_THROWS_AS(io::read_volume(scratch("missing.mvv")), IoError);
  // truncated payload
  const fs::path q = scratch("trunc.mvv");
  io::write_volume(q, Volume({4, 4, 4}, 1.0));
  auto b = file_bytes(q);
  b.resize(b.size() - 5);
  std::ofstream(q, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<long>(b.size()));
  CHECK_THROWS_AS(io::read_volume(q), IoError);
}

TEST_CASE("checksums are stable and content sensitive") {
  CHECK(io::checksum(std::vector<unsigned char>{}) == 0xcbf29ce484222325ULL);
  const std::vector<unsigned char> a{'a'};
  CHECK(io::checksum(a) == 0xaf63dc4c8601ec8cULL);
  Volume v({2, 2, 2}, 1.0);
  const auto h = io::checksum(v);
  v[3] = 1.0000001;
  CHECK(io::checksum(v) != h);
  CHECK(io::hex(0x1fULL) == "000000000000001f");
}

TEST_CASE("f64 encoding round trip") {
  const std::vector<double> v{0.0, -1.25, 1e300, 5e-324};
  CHECK(io::decode_f64(io::encode_f64(v)) == v);
  CHECK_THROWS(io::decode_f64(std::vector<unsigned char>(7)));
}

TEST_CASE("audit log records reads only while enabled") {
  const fs::path p = scratch("audit.mvv");
  io::write_volume(p, Volume({1, 1, 1}, 2.0));
  io::audit_clear();
  io::read_volume(p);
  CHECK(io::audit_log().empty());
  io::audit_enable(true);
  io::read_volume(p);
  io::audit_enable(false);
  const auto log = io::audit_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0] == fs::absolute(p).lexically_normal().string());
}

TEST_CASE("dtype names") {
  CHECK(io::parse_dtype("f32") == io::Dtype::f32);
  CHECK(io::to_string(io::Dtype::f64) == "f64");
  CHECK_THROWS_AS(io::parse_dtype("u8"), ConfigError);
}
