#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irmap/geometry.hpp"

namespace irmap {

struct StoreEntry {
    std::uint32_t index = 0;  // linear voxel index, x fastest
    float value = 0.0f;
    bool operator==(const StoreEntry& o) const noexcept;
};

struct FeatureBlock {
    std::uint32_t layer = 0;
    std::uint8_t feature_id = 0;
    std::vector<StoreEntry> entries;  // strictly increasing index
    bool operator==(const FeatureBlock&) const = default;
};

struct StorePart {
    std::uint16_t id = 0;
    std::string name;
    bool operator==(const StorePart&) const = default;
};

struct StoreHeader {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    VoxelPitch pitch;
    std::uint32_t nx = 1, ny = 1, nz = 1;
    std::vector<StorePart> parts;
    bool operator==(const StoreHeader& o) const noexcept;
};

struct VoxelFeatureStore {
    StoreHeader header;
    std::vector<FeatureBlock> blocks;

    const FeatureBlock* find(std::uint32_t layer, std::uint8_t feature_id) const noexcept;
    bool operator==(const VoxelFeatureStore&) const = default;
};

// Little-endian IRVX layout:
//   "IRVX" u32 version, f64 pitch[3], u32 dims[3],
//   u32 part_count {u16 id, u16 name_len, name bytes},
//   u32 block_count {u32 layer, u8 feature, u32 count, count x (u32 index, f32 value)}
std::vector<std::uint8_t> write_store(const VoxelFeatureStore& store);
VoxelFeatureStore read_store(std::span<const std::uint8_t> bytes);

// Thrown for damaged blocks; names the block being read.
class CorruptionError : public OffsetError {
public:
    CorruptionError(const std::string& what, std::size_t offset, std::optional<std::uint32_t> layer,
                    std::optional<std::uint8_t> feature);
    std::optional<std::uint32_t> layer() const noexcept { return layer_; }
    std::optional<std::uint8_t> feature() const noexcept { return feature_; }

private:
    std::optional<std::uint32_t> layer_;
    std::optional<std::uint8_t> feature_;
};

struct LayerFrames {
    int width = 0;
    int height = 0;
    std::size_t frames = 0;
};

struct ReductionReport {
    std::uint64_t raw_bytes = 0;
    std::uint64_t stored_bytes = 0;
    double ratio = 0.0;  // 1 - stored/raw, floored at 0
    bool meets_claim = false;  // ratio >= 0.99
};

ReductionReport reduction_report(std::span<const LayerFrames> layers, std::uint64_t stored_bytes);

enum class ExportFormat { Csv, Vtk, PgmHeatmap };

std::vector<std::uint8_t> export_grid(const VoxelFeatureStore& store, std::uint32_t layer, std::uint8_t feature_id,
                                      ExportFormat format);

}  // namespace irmap
