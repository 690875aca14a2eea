#include "noisnn/runtime_env.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace noisnn {

int configured_threads() {
  const char* s = std::getenv("NOISNN_THREADS");
  if (!s || !*s) return 1;
  try {
    const int n = std::stoi(s);
    return n > 0 ? n : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

bool strict_mode() {
  const char* s = std::getenv("NOISNN_STRICT");
  return s && std::string(s) == "1";
}

void apply_runtime_env() {
  Eigen::setNbThreads(strict_mode() ? 1 : configured_threads());
#if defined(__GLIBC__)
  // Activation buffers are tens of MB and reallocated every batch. Keeping
  // them on the heap instead of fresh mmaps avoids a page-fault storm.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace noisnn
