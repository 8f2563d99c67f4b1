#pragma once

#include <optional>

namespace mvf::parallel {

/// Sets the OpenMP team size used by every parallel kernel.
void set_threads(int n);
int threads();
/// Explicit request wins, then MVFUSE_THREADS, then the OpenMP default.
int resolve_threads(std::optional<int> requested);

}  // namespace mvf::parallel
