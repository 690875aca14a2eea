#pragma once

namespace noisnn {

/// NOISNN_THREADS, defaulting to 1. Caps the threads Eigen's matrix products use.
int configured_threads();

/// NOISNN_STRICT=1 pins one thread so every float reduction runs in a fixed
/// order and repeated runs are bitwise identical.
bool strict_mode();

/// Applies both settings to the linear-algebra backend and tunes the
/// allocator for large short-lived buffers. Idempotent.
void apply_runtime_env();

}  // namespace noisnn
