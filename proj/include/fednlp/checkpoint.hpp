#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fednlp/tensor.hpp"

namespace fednlp {

// Binary checkpoint layout (all integers little-endian):
//   magic "FNLPCKPT" (8 bytes), version u32, tensor count u32,
//   then per tensor: name length u32 + name bytes, rank u32,
//   dims as u64 each, payload as raw little-endian IEEE-754 doubles.
// Round-trips are bit-exact.

std::vector<std::uint8_t> serialize_param_set(const ParamSet& params);
ParamSet deserialize_param_set(const std::vector<std::uint8_t>& bytes);

void save_param_set(const std::string& path, const ParamSet& params);
ParamSet load_param_set(const std::string& path);

// FNV-1a 64-bit over the serialized bytes, as 16 hex characters. Used for
// round logs and config snapshots.
std::string digest_hex(const std::vector<std::uint8_t>& bytes);
std::string param_set_digest(const ParamSet& params);

}  // namespace fednlp
