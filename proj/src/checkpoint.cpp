#include "noisnn/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "noisnn/error.hpp"

namespace noisnn {
namespace {

constexpr char kMagic[] = "NSNN1";
constexpr std::size_t kMagicLen = 5;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{in[off + i]} << (8 * i);
  return v;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape_text(const std::string& s) {
  Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoul(part));
  return shape;
}

class Header {
 public:
  explicit Header(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("checkpoint header line without '=': " + line);
      kv_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  const std::string& get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw FormatError("checkpoint header missing key '" + key + "'");
    return it->second;
  }
  float f(const std::string& key) const { return parse_float(get(key)); }
  std::uint64_t u(const std::string& key) const { return std::stoull(get(key)); }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

std::string format_float(float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

float parse_float(const std::string& s) {
  float v = 0.0f;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw FormatError("not a float: '" + s + "'");
  }
  return v;
}

std::string render_header(const Checkpoint& c) {
  const auto& s = c.spec;
  std::string h;
  auto line = [&h](const std::string& k, const std::string& v) { h += k + "=" + v + "\n"; };
  line("arch", render_arch(s));
  line("input_shape", shape_text(s.input_shape));
  line("bias", s.bias_enabled ? "1" : "0");
  line("readout", to_string(s.readout));
  line("lif.lambda", format_float(s.lif.lambda));
  line("lif.v_th", format_float(s.lif.v_th));
  line("lif.v_reset", format_float(s.lif.v_reset));
  line("noise.family", to_string(s.noise.family));
  line("noise.mean", format_float(s.noise.mean));
  line("noise.half_range", format_float(s.noise.half_range));
  line("noise.clip", s.noise.clip ? "1" : "0");
  line("surrogate.a", format_float(s.surrogate.a));
  line("surrogate.v_th", format_float(s.surrogate.v_th));
  line("run.stage", std::to_string(c.mode.stage));
  line("run.T", std::to_string(c.mode.T));
  line("renorm.alpha", format_float(c.mode.renorm.alpha));
  line("renorm.beta", format_float(c.mode.renorm.beta));
  line("renorm.sigma_eps", format_float(c.mode.renorm.sigma_eps));
  line("seed", std::to_string(c.seed));
  line("created", c.created);
  line("arrays", std::to_string(c.params.size()));
  return h;
}

std::vector<std::uint8_t> encode_payload(const ParamSet& params) {
  std::vector<std::uint8_t> out;
  for (const auto& t : params) {
    put_u64(out, t.numel());
    for (float v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t payload_hash(const ParamSet& params) {
  const auto p = encode_payload(params);
  return fnv1a64(p.data(), p.size());
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.created.find('\n') != std::string::npos) {
    throw ConfigError("checkpoint 'created' metadata must be a single line");
  }
  const std::string header = render_header(ckpt);
  const auto payload = encode_payload(ckpt.params);
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  put_u64(out, fnv1a64(payload.data(), payload.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen || std::string(bytes.begin(), bytes.begin() + 4) != "NSNN") {
    throw VersionError("not an NSNN checkpoint (unknown magic)");
  }
  if (std::string(bytes.begin(), bytes.begin() + kMagicLen) != kMagic) {
    throw VersionError("unsupported checkpoint version '" +
                       std::string(1, static_cast<char>(bytes[4])) + "'");
  }
  std::size_t off = kMagicLen;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() < off + n) throw LengthError(std::string("checkpoint truncated in ") + what);
  };
  need(8, "header length");
  const std::uint64_t header_len = get_u64(bytes, off);
  off += 8;
  need(header_len, "header");
  const Header h(std::string(bytes.begin() + off, bytes.begin() + off + header_len));
  off += header_len;

  Checkpoint c;
  // A header that no longer describes a valid network is a damaged file,
  // whatever layer rejected it.
  try {
    const Shape input_shape = parse_shape_text(h.get("input_shape"));
    c.spec = parse_arch(h.get("arch"), input_shape);
    c.spec.bias_enabled = h.get("bias") == "1";
    c.spec.readout = parse_readout(h.get("readout"));
    c.spec.lif = {h.f("lif.lambda"), h.f("lif.v_th"), h.f("lif.v_reset")};
    c.spec.noise.family = parse_noise_family(h.get("noise.family"));
    c.spec.noise.mean = h.f("noise.mean");
    c.spec.noise.half_range = h.f("noise.half_range");
    c.spec.noise.clip = h.get("noise.clip") == "1";
    c.spec.surrogate = {h.f("surrogate.a"), h.f("surrogate.v_th")};
    c.spec.validate();
    c.mode.stage = static_cast<int>(h.u("run.stage"));
    c.mode.T = h.u("run.T");
    c.mode.renorm = {h.f("renorm.alpha"), h.f("renorm.beta"), h.f("renorm.sigma_eps")};
    c.seed = h.u("seed");
    c.created = h.get("created");
    c.mode.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint header invalid: ") + e.what());
  }

  const std::size_t payload_begin = off;
  const auto shapes = param_shapes(c.spec);
  if (h.u("arrays") != shapes.size()) {
    throw FormatError("header declares " + h.get("arrays") + " arrays, architecture needs " +
                      std::to_string(shapes.size()));
  }
  for (const auto& shape : shapes) {
    need(8, "array length");
    const std::uint64_t n = get_u64(bytes, off);
    off += 8;
    if (n != shape_numel(shape)) {
      throw CorruptionError("array length " + std::to_string(n) + " does not match shape " +
                            shape_str(shape));
    }
    need(n * 4, "array data");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i, off += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[off + b]} << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    c.params.emplace_back(shape, std::move(data));
  }
  need(8, "checksum");
  const std::uint64_t stored = get_u64(bytes, off);
  if (fnv1a64(bytes.data() + payload_begin, off - payload_begin) != stored) {
    throw CorruptionError("checkpoint payload checksum mismatch");
  }
  if (off + 8 != bytes.size()) throw CorruptionError("trailing bytes after checkpoint checksum");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace noisnn
