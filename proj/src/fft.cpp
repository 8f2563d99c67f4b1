#include "mvf/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "mvf/error.hpp"

namespace mvf::fft {

namespace {

enum class Kind { c2c_forward, c2c_inverse, r2c, c2r };

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;
using RealBuffer = std::unique_ptr<double[], FftwFree>;

ComplexBuffer alloc_complex(std::size_t n) {
  return ComplexBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::max<std::size_t>(n, 1))));
}
RealBuffer alloc_real(std::size_t n) {
  return RealBuffer(static_cast<double*>(fftw_malloc(sizeof(double) * std::max<std::size_t>(n, 1))));
}

void check_dims(Dims dims) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw Error("fft: zero-length axis in " + dims.str());
}

// Plans are built on scratch arrays and executed with the new-array API,
// which is thread-safe; only planning needs the lock.
fftw_plan get_plan(Kind kind, Dims dims) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, std::size_t, std::size_t>, fftw_plan> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(static_cast<int>(kind), dims.nx, dims.ny, dims.nz);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int nz = static_cast<int>(dims.nz), ny = static_cast<int>(dims.ny), nx = static_cast<int>(dims.nx);
  const std::size_t n = dims.size();
  const std::size_t nh = half_spectrum_size(dims);
  fftw_plan plan = nullptr;
  switch (kind) {
    case Kind::c2c_forward:
    case Kind::c2c_inverse: {
      auto a = alloc_complex(n), b = alloc_complex(n);
      plan = fftw_plan_dft_3d(nz, ny, nx, a.get(), b.get(), kind == Kind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD,
                              FFTW_ESTIMATE);
      break;
    }
    case Kind::r2c: {
      auto a = alloc_real(n);
      auto b = alloc_complex(nh);
      plan = fftw_plan_dft_r2c_3d(nz, ny, nx, a.get(), b.get(), FFTW_ESTIMATE);
      break;
    }
    case Kind::c2r: {
      auto a = alloc_complex(nh);
      auto b = alloc_real(n);
      plan = fftw_plan_dft_c2r_3d(nz, ny, nx, a.get(), b.get(), FFTW_ESTIMATE);
      break;
    }
  }
  if (!plan) throw Error("fft: planning failed for " + dims.str());
  cache.emplace(key, plan);
  return plan;
}

std::vector<Complex> c2c(std::span<const Complex> data, Dims dims, Kind kind) {
  check_dims(dims);
  const std::size_t n = dims.size();
  if (data.size() != n) throw Error("fft: data length does not match dims");
  fftw_plan plan = get_plan(kind, dims);
  auto in = alloc_complex(n), out = alloc_complex(n);
  std::memcpy(in.get(), data.data(), sizeof(fftw_complex) * n);
  fftw_execute_dft(plan, in.get(), out.get());
  std::vector<Complex> result(n);
  std::memcpy(static_cast<void*>(result.data()), out.get(), sizeof(fftw_complex) * n);
  return result;
}

}  // namespace

std::size_t half_spectrum_size(Dims dims) { return (dims.nx / 2 + 1) * dims.ny * dims.nz; }

std::vector<Complex> forward(std::span<const Complex> data, Dims dims) { return c2c(data, dims, Kind::c2c_forward); }

std::vector<Complex> inverse(std::span<const Complex> data, Dims dims) {
  auto out = c2c(data, dims, Kind::c2c_inverse);
  const double scale = 1.0 / static_cast<double>(dims.size());
  for (auto& c : out) c *= scale;
  return out;
}

std::vector<Complex> forward_real(std::span<const double> data, Dims dims) {
  check_dims(dims);
  const std::size_t n = dims.size();
  if (data.size() != n) throw Error("fft: data length does not match dims");
  const std::size_t nh = half_spectrum_size(dims);
  fftw_plan plan = get_plan(Kind::r2c, dims);
  auto in = alloc_real(n);
  auto out = alloc_complex(nh);
  std::memcpy(in.get(), data.data(), sizeof(double) * n);
  fftw_execute_dft_r2c(plan, in.get(), out.get());
  std::vector<Complex> result(nh);
  std::memcpy(static_cast<void*>(result.data()), out.get(), sizeof(fftw_complex) * nh);
  return result;
}

std::vector<double> inverse_real(std::span<const Complex> spectrum, Dims dims) {
  check_dims(dims);
  const std::size_t n = dims.size();
  const std::size_t nh = half_spectrum_size(dims);
  if (spectrum.size() != nh) throw Error("fft: spectrum length does not match dims");
  fftw_plan plan = get_plan(Kind::c2r, dims);
  auto in = alloc_complex(nh);
  auto out = alloc_real(n);
  std::memcpy(in.get(), spectrum.data(), sizeof(fftw_complex) * nh);
  fftw_execute_dft_c2r(plan, in.get(), out.get());
  std::vector<double> result(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = out[i] * scale;
  return result;
}

std::size_t good_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

}  // namespace mvf::fft
