#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "noisnn/ops.hpp"
#include "noisnn/rng.hpp"
#include "noisnn/spiking.hpp"
#include "noisnn/tensor.hpp"

namespace noisnn {

enum class LayerKind { conv3, avgpool2, flatten, fc, spike };

/// One stage of a feedforward net. `in`/`out` are channel counts for conv3
/// and feature counts for fc; unused for the parameter-free kinds.
struct LayerSpec {
  LayerKind kind;
  std::size_t in = 0;
  std::size_t out = 0;

  bool has_weights() const { return kind == LayerKind::conv3 || kind == LayerKind::fc; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// How the final fc layer reports: binary spikes (default) or its
/// pre-activation.
enum class Readout { spikes, potentials };

std::string to_string(Readout r);
Readout parse_readout(const std::string& s);

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;  // per sample, without the batch dimension
  LIFParams lif;
  NoiseSpec noise;
  SurrogateParams surrogate;
  bool bias_enabled = true;
  Readout readout = Readout::spikes;

  std::size_t num_classes() const;
  /// Output shape of every layer, per sample.
  std::vector<Shape> shape_chain() const;
  /// Number of layers that receive noise and carry membrane state: each
  /// hidden spiking activation plus the output layer.
  std::size_t num_spiking_layers() const;
  void validate() const;
};

/// Parses "64C3-AP2-128C3-AP2-128C3-AP2-512FC-10FC" style strings. A spiking
/// activation follows every conv and every fc except the last; a flatten is
/// inserted before the first fc that sees a spatial input.
NetworkSpec parse_arch(std::string_view text, const Shape& input_shape);

std::string render_arch(const NetworkSpec& spec);

/// One weight tensor per conv/fc followed by its bias when biases are enabled.
/// Conv kernels are [Cout, Cin, 3, 3], fc weights [in, out].
using ParamSet = std::vector<Tensor>;

/// Weights uniform in +-sqrt(6 / fan_in); biases zero.
ParamSet init_params(const NetworkSpec& spec, Rng& rng);

std::vector<Shape> param_shapes(const NetworkSpec& spec);
std::size_t parameter_count(const NetworkSpec& spec);

}  // namespace noisnn
