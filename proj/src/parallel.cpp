#include "mvf/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "mvf/error.hpp"

namespace mvf::parallel {

void set_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be >= 1");
  omp_set_num_threads(n);
}

int threads() { return omp_get_max_threads(); }

int resolve_threads(std::optional<int> requested) {
  if (requested) return *requested;
  if (const char* env = std::getenv("MVFUSE_THREADS"); env && *env) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MVFUSE_THREADS is not an integer: ") + env);
    }
  }
  return omp_get_max_threads();
}

}  // namespace mvf::parallel
