#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "irmap/config.hpp"
#include "irmap/store.hpp"

namespace irmap {

struct PartSet {
    VoxelMesh voxels;
    std::vector<StorePart> parts;
};

// Loads every STL of the run and voxelizes them on one grid spanning their union.
PartSet build_parts(const RunConfig& config);

std::vector<int> run_layers(const RunConfig& config, const VoxelMesh& voxels);

struct SimulatedLayer {
    RenderedLayer rendered;
    LayerMask mask;
    ScanPath path;
};

SimulatedLayer simulate_layer(const RunConfig& config, const VoxelMesh& voxels, int layer);

// Raw frames for a layer from the configured source, before spatial correction.
LayerStack acquire_layer(const RunConfig& config, const VoxelMesh& voxels, int layer);

// Maps raw camera pixels to the corrected view; identity without a correspondence file.
Homography correction_homography(const RunConfig& config);
LayerStack correct_stack(const LayerStack& raw, const Homography& raw_to_corrected);

struct LayerOutcome {
    int layer = 0;
    int frames = 0;
    int width = 0;
    int height = 0;
    std::size_t part_pixels = 0;
    std::size_t spatter_events = 0;
    std::vector<FeatureBlock> blocks;
    double seconds = 0.0;
};

LayerOutcome process_layer(const RunConfig& config, const VoxelMesh& voxels, const Homography& correction,
                           const LayerStack& raw, int layer);

struct RunResult {
    VoxelFeatureStore store;
    std::vector<std::uint8_t> store_bytes;
    std::string manifest;  // deterministic JSON
    std::string timing;    // wall-clock per layer, kept apart so the manifest stays reproducible
    ReductionReport reduction;
    std::vector<LayerOutcome> layers;
};

// Correction, conversion, extraction and voxel mapping for every selected
// layer; writes the store, `<store>.manifest.json` and `<store>.timing.json`.
RunResult run_pipeline(const RunConfig& config);

// Writes layer_NNNN.irf frame files for the run's layers.
void simulate_to_directory(const RunConfig& config, const std::filesystem::path& dir);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// 0 ok, 2 configuration, 3 data, 4 internal invariant.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace irmap
