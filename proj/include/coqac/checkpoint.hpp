#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "coqac/autograd.hpp"
#include "json.hpp"

// Binary checkpoint layout (little-endian):
//
//   magic      4 bytes  "CQAC"
//   version    u32
//   header     u64 length + UTF-8 JSON (model/input config, free-form)
//   count      u32 number of parameter arrays
//   per array: u32 name length, name bytes, u32 rank, u64 extents[rank],
//              f64 values[product(extents)]
//   crc32      u32 over every preceding byte
namespace coqac::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  ParameterSet params;
};

std::string serialize_checkpoint(const nlohmann::json& header, const ParameterSet& params);
// Throws ChecksumError on truncation or corruption, CheckpointError on a
// bad magic or version mismatch.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     const ParameterSet& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coqac::nn
