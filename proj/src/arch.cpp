#include "noisnn/arch.hpp"

#include <cctype>
#include <cmath>

#include "noisnn/error.hpp"

namespace noisnn {

std::string to_string(Readout r) { return r == Readout::spikes ? "spikes" : "potentials"; }

Readout parse_readout(const std::string& s) {
  if (s == "spikes") return Readout::spikes;
  if (s == "potentials") return Readout::potentials;
  throw ConfigError("unknown readout '" + s + "' (expected spikes or potentials)");
}

namespace {

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv3: return "conv3";
    case LayerKind::avgpool2: return "avgpool2";
    case LayerKind::flatten: return "flatten";
    case LayerKind::fc: return "fc";
    case LayerKind::spike: return "spike";
  }
  return "?";
}

// Applies one layer to a per-sample shape, validating conformance.
Shape apply_layer(const LayerSpec& l, const Shape& s, std::size_t index) {
  auto fail = [&](const std::string& why) {
    return DimensionError("layer " + std::to_string(index) + " (" + kind_name(l.kind) +
                          "): " + why + ", input shape " + shape_str(s));
  };
  switch (l.kind) {
    case LayerKind::conv3:
      if (s.size() != 3) throw fail("expects [C,H,W]");
      if (s[0] != l.in) throw fail("declares " + std::to_string(l.in) + " input channels");
      if (l.out == 0) throw fail("needs at least one output channel");
      return {l.out, s[1], s[2]};
    case LayerKind::avgpool2:
      if (s.size() != 3) throw fail("expects [C,H,W]");
      if (s[1] < 2 || s[2] < 2) throw fail("spatial size below 2");
      return {s[0], s[1] / 2, s[2] / 2};
    case LayerKind::flatten:
      if (s.size() < 2) throw fail("nothing to flatten");
      return {shape_numel(s)};
    case LayerKind::fc:
      if (s.size() != 1) throw fail("expects a flat input");
      if (s[0] != l.in) throw fail("declares " + std::to_string(l.in) + " input features");
      if (l.out == 0) throw fail("needs at least one unit");
      return {l.out};
    case LayerKind::spike:
      return s;
  }
  return s;
}

}  // namespace

std::vector<Shape> NetworkSpec::shape_chain() const {
  std::vector<Shape> chain;
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    s = apply_layer(layers[i], s, i);
    chain.push_back(s);
  }
  return chain;
}

std::size_t NetworkSpec::num_classes() const {
  if (layers.empty() || layers.back().kind != LayerKind::fc) {
    throw ConfigError("network must end in an fc readout layer");
  }
  return layers.back().out;
}

std::size_t NetworkSpec::num_spiking_layers() const {
  std::size_t n = 1;  // output layer
  for (const auto& l : layers) n += l.kind == LayerKind::spike ? 1 : 0;
  return n;
}

void NetworkSpec::validate() const {
  if (input_shape.empty()) throw ConfigError("input shape is empty");
  num_classes();
  shape_chain();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].has_weights() && layers[i + 1].kind != LayerKind::spike) {
      throw ConfigError("layer " + std::to_string(i) + " (" + kind_name(layers[i].kind) +
                        ") must be followed by a spiking activation");
    }
  }
  lif.validate();
  noise.validate();
  surrogate.validate();
}

NetworkSpec parse_arch(std::string_view text, const Shape& input_shape) {
  struct Token {
    LayerKind kind;
    std::size_t n;
  };
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (true) {
    const std::size_t start = pos;
    std::size_t end = text.find('-', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view tok = text.substr(start, end - start);

    std::size_t digits = 0;
    while (digits < tok.size() && std::isdigit(static_cast<unsigned char>(tok[digits]))) ++digits;
    const std::string_view suffix = tok.substr(digits);
    std::size_t n = 0;
    for (std::size_t i = 0; i < digits; ++i) n = n * 10 + static_cast<std::size_t>(tok[i] - '0');

    if (digits > 0 && n > 0 && digits <= 9 && suffix == "C3") {
      tokens.push_back({LayerKind::conv3, n});
    } else if (digits > 0 && n > 0 && digits <= 9 && suffix == "FC") {
      tokens.push_back({LayerKind::fc, n});
    } else if (digits == 0 && suffix == "AP2") {
      tokens.push_back({LayerKind::avgpool2, 0});
    } else {
      throw ParseError("unknown layer token '" + std::string(tok) +
                           "' (expected <n>C3, AP2 or <n>FC)",
                       start);
    }
    if (end == text.size()) break;
    pos = end + 1;
  }

  NetworkSpec spec;
  spec.input_shape = input_shape;
  Shape s = input_shape;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    LayerSpec layer{t.kind};
    if (t.kind == LayerKind::fc && s.size() > 1) {
      LayerSpec flat{LayerKind::flatten};
      s = apply_layer(flat, s, spec.layers.size());
      spec.layers.push_back(flat);
    }
    if (t.kind == LayerKind::conv3) {
      layer.in = s.empty() ? 0 : s[0];
      layer.out = t.n;
    } else if (t.kind == LayerKind::fc) {
      layer.in = s.empty() ? 0 : s[0];
      layer.out = t.n;
    }
    s = apply_layer(layer, s, spec.layers.size());
    spec.layers.push_back(layer);
    if (layer.has_weights() && i + 1 < tokens.size()) {
      spec.layers.push_back({LayerKind::spike});
    }
  }
  spec.validate();
  return spec;
}

std::string render_arch(const NetworkSpec& spec) {
  std::string out;
  for (const auto& l : spec.layers) {
    std::string tok;
    switch (l.kind) {
      case LayerKind::conv3: tok = std::to_string(l.out) + "C3"; break;
      case LayerKind::avgpool2: tok = "AP2"; break;
      case LayerKind::fc: tok = std::to_string(l.out) + "FC"; break;
      default: continue;
    }
    if (!out.empty()) out += '-';
    out += tok;
  }
  return out;
}

std::vector<Shape> param_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::conv3) {
      shapes.push_back({l.out, l.in, 3, 3});
    } else if (l.kind == LayerKind::fc) {
      shapes.push_back({l.in, l.out});
    } else {
      continue;
    }
    if (spec.bias_enabled) shapes.push_back({l.out});
  }
  return shapes;
}

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : param_shapes(spec)) n += shape_numel(s);
  return n;
}

ParamSet init_params(const NetworkSpec& spec, Rng& rng) {
  ParamSet params;
  for (const auto& l : spec.layers) {
    if (!l.has_weights()) continue;
    const std::size_t fan_in = l.kind == LayerKind::conv3 ? l.in * 9 : l.in;
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    Shape ws = l.kind == LayerKind::conv3 ? Shape{l.out, l.in, 3, 3} : Shape{l.in, l.out};
    Tensor w(ws);
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& x : w.values()) x = dist(rng.engine());
    params.push_back(std::move(w));
    if (spec.bias_enabled) params.emplace_back(Shape{l.out});
  }
  return params;
}

}  // namespace noisnn
