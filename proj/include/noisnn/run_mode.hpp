#pragma once

#include <cstddef>
#include <string>

#include "noisnn/spiking.hpp"

namespace noisnn {

/// Which forward procedure evaluates a trained network.
///   stage 1: one noisy step (the training graph)
///   stage 2: T independent noisy steps, outputs averaged
///   stage 3: T steps with carried membrane potential and renormalized
///            injection, outputs averaged
struct RunMode {
  int stage = 1;
  std::size_t T = 1;
  RenormParams renorm;

  void validate() const;
  std::string describe() const;

  friend bool operator==(const RunMode&, const RunMode&) = default;
};

}  // namespace noisnn
