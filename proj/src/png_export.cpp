#include "mvf/png_export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "mvf/error.hpp"

namespace mvf::png {

void write_gray(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<unsigned char>& pixels) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_slice_panel(const std::filesystem::path& path, const std::vector<std::pair<std::string, Volume>>& rows) {
  if (rows.empty()) throw Error("slice panel needs at least one volume");
  const Dims d = rows.front().second.dims();
  for (const auto& r : rows)
    if (r.second.dims() != d) throw Error("slice panel: all volumes must share dims");
  constexpr std::size_t gap = 2;
  const std::size_t width = d.nx + gap + d.nx + gap + d.ny;
  const std::size_t row_h = std::max(d.ny, d.nz);
  const std::size_t height = rows.size() * row_h + (rows.size() - 1) * gap;
  std::vector<unsigned char> px(width * height, 0);
  auto gray = [](double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Volume& v = rows[r].second;
    const std::size_t top = r * (row_h + gap);
    const std::size_t zc = d.nz / 2, yc = d.ny / 2, xc = d.nx / 2;
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) px[(top + y) * width + x] = gray(v(x, y, zc));
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t x = 0; x < d.nx; ++x) px[(top + z) * width + d.nx + gap + x] = gray(v(x, yc, z));
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y) px[(top + z) * width + 2 * (d.nx + gap) + y] = gray(v(xc, y, z));
  }
  write_gray(path, width, height, px);
}

}  // namespace mvf::png
