#pragma once

// NSNN1 checkpoint layout (all integers little-endian):
//
//   "NSNN1"                      5-byte magic; the trailing digit is the version
//   u64 header_length
//   header                       UTF-8 "key=value\n" lines
//   payload                      per parameter array: u64 element count,
//                                then that many float32 values
//   u64 checksum                 FNV-1a 64 over the payload bytes

#include <cstdint>
#include <string>
#include <vector>

#include "noisnn/arch.hpp"
#include "noisnn/run_mode.hpp"

namespace noisnn {

struct Checkpoint {
  NetworkSpec spec;
  RunMode mode;
  std::uint64_t seed = 0;
  std::string created;  // free-form creation metadata, preserved across re-saves
  ParamSet params;
};

std::string render_header(const Checkpoint& ckpt);
std::vector<std::uint8_t> encode_payload(const ParamSet& params);
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);
/// Checksum of the encoded parameter payload.
std::uint64_t payload_hash(const ParamSet& params);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Shortest decimal text that parses back to the same float ("inf" for +inf).
std::string format_float(float v);
float parse_float(const std::string& s);

}  // namespace noisnn
