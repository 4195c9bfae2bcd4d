#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mambahash/network.hpp"

namespace mambahash {

// Checkpoint layout (little-endian): "MBHH", u32 version, u32 length +
// model config text, u64 tensor count, then per tensor: u32 name length,
// name bytes, u8 dtype tag (1 = f64), u32 rank, u64 dims[rank], values.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

std::vector<std::uint8_t> encode_checkpoint(const MambaHashNet& net);
void save_checkpoint(const MambaHashNet& net, const std::string& path);

// Builds a network from the stored config and fills every parameter.
MambaHashNet decode_checkpoint(std::span<const std::uint8_t> bytes);
MambaHashNet load_checkpoint(const std::string& path);

// Loads into an existing network. The stored config and tensor table must
// match `net` exactly; nothing is written unless the whole file validates.
void load_checkpoint_into(MambaHashNet& net, const std::string& path);

}  // namespace mambahash
