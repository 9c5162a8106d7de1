#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "irmap/features.hpp"

namespace irmap {

// One file per layer, little-endian:
//   "IRFS" u32 version, u32 width, u32 height, f64 fps, i32 layer,
//   i32 recoat_boundary, u32 frame_count, then frame_count * width * height u16 counts.
std::vector<std::uint8_t> encode_frames(const LayerStack& stack);
LayerStack decode_frames(std::span<const std::uint8_t> bytes);

std::filesystem::path layer_frames_path(const std::filesystem::path& dir, int layer);
void write_layer_frames(const std::filesystem::path& dir, const LayerStack& stack);
LayerStack read_layer_frames(const std::filesystem::path& dir, int layer);

}  // namespace irmap
