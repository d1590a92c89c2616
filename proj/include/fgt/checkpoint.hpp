#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgt/network.hpp"

namespace fgt {

/// Checkpoint layout (all integers little-endian):
///
///   "FGTB" | u16 version | u32 header_len | header (UTF-8 JSON) |
///   f32 blobs per layer in declaration order | u32 CRC-32 of everything
///   between the version field and the CRC.
///
/// The header carries the layer specs, input shape, trainable layer names,
/// seed and the name/shape of every stored tensor. Parameters are stored as
/// 32-bit floats; batch-norm layers also store running mean and variance.
inline constexpr char kCheckpointMagic[4] = {'F', 'G', 'T', 'B'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Network& net);
Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

/// Loads parameters, statistics and trainable flags into an existing network
/// of identical architecture; throws IntegrityError on any mismatch.
void load_checkpoint_into(Network& net, const std::filesystem::path& path);

}  // namespace fgt
