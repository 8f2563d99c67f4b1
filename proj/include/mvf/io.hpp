#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/volume.hpp"

// MVV1 container: 8-byte magic "MVVOL1\0\0", a 4-byte little-endian header
// length, a UTF-8 JSON header, then raw little-endian payload bytes.
namespace mvf::io {

using json = nlohmann::json;

enum class Dtype { f32, f64 };

Dtype parse_dtype(const std::string& s);
std::string to_string(Dtype d);

struct Container {
  json header;
  std::vector<unsigned char> payload;
};

void write_container(const std::filesystem::path& path, const json& header, std::span<const unsigned char> payload);
Container read_container(const std::filesystem::path& path);

/// Writes {"kind":"volume","dims","dtype","order":"x-fastest"} plus any extra keys.
void write_volume(const std::filesystem::path& path, const Volume& v, Dtype dtype = Dtype::f32, const json& extra = {});
Volume read_volume(const std::filesystem::path& path);

/// Same container with "kind":"psf" and "center"; always stored as f64.
void write_psf(const std::filesystem::path& path, const Psf& psf);
Psf read_psf(const std::filesystem::path& path);

std::vector<unsigned char> encode_f64(std::span<const double> values);
std::vector<double> decode_f64(std::span<const unsigned char> bytes);

/// FNV-1a 64-bit hash, used for reproducibility checks.
std::uint64_t checksum(std::span<const unsigned char> bytes);
std::uint64_t checksum(const Volume& v);
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string hex(std::uint64_t h);

/// Records every container path opened for reading while enabled.
void audit_enable(bool on);
void audit_clear();
std::vector<std::string> audit_log();

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mvf::io
