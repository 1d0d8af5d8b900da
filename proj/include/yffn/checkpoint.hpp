#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "yffn/network.hpp"

namespace yffn {

/// A checkpoint is the full parameter set plus its configuration.
using Checkpoint = ModelParams;

/// Little-endian layout: magic "YFFN", format version u32, config block
/// (input_size, base_channels, anchors_per_scale, class_count as u32), one
/// entry per tensor (name length u32, name bytes, rank u32, extents u32...,
/// payload of 8-byte floats), terminated by a CRC32 of all preceding bytes.
/// Entry order is the for_each_tensor order, so serialization is canonical.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);

/// Inverse of serialize_checkpoint. Throws std::runtime_error with the byte
/// offset on malformed input; a bad CRC or truncated file never yields a
/// partially filled checkpoint.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// CRC-32 (IEEE 802.3 polynomial, zlib-compatible).
std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

}  // namespace yffn
