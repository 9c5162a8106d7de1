#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irmap/features.hpp"
#include "irmap/geometry.hpp"
#include "irmap/radiometry.hpp"
#include "irmap/simulator.hpp"
#include "irmap/spatial.hpp"

namespace irmap {

// Flat `key = value` text; `#` starts a comment, blank lines are ignored.
// Duplicate keys and malformed lines raise ErrorKind::Config naming the line.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);

struct SimulationSpec {
    ScanParameters scan;
    ThermalParams thermal;
    RenderOptions render;
    double noise_fraction = 0.01;  // of camera_span_counts()
    int spatters_per_layer = 0;
    double spatter_delta_c = 250.0;
    double spatter_decay_s = 0.05;
    std::optional<std::filesystem::path> spatter_csv;  // rows: layer,emit_frame,x,y,delta_c,decay_s
    Homography distortion;                             // corrected view to raw camera view
};

enum class FrameSource { Simulation, Files };

struct RunConfig {
    FrameSource source = FrameSource::Simulation;
    std::optional<std::filesystem::path> frames_dir;
    std::vector<std::filesystem::path> stl;
    std::optional<std::filesystem::path> correspondences;
    std::filesystem::path out = "irmap.irvx";

    CalibrationProfile profile;
    FeatureParams features;
    std::vector<FeatureId> selected{kAllFeatures.begin(), kAllFeatures.end()};
    std::optional<std::pair<int, int>> layers;  // inclusive range
    int jobs = 1;
    std::uint64_t seed = 1;

    PixelGridFrame registration;
    SimulationSpec simulation;

    std::filesystem::path base_dir;  // relative paths resolve here

    // Every key after defaults, file values and overrides, as text.
    KeyValues resolved;
};

// Keys understood by make_config, with their default text.
const KeyValues& default_settings();

// Relative paths resolve against base_dir. Unknown keys, bad values and
// missing files raise ErrorKind::Config.
RunConfig make_config(const KeyValues& values, const std::filesystem::path& base_dir);

// Reads a key-value file or a run manifest (its "parameters" object), folds in
// a `profile` file if named, then applies overrides.
RunConfig load_config(const std::filesystem::path& path, const KeyValues& overrides = {});

std::pair<int, int> parse_layer_range(const std::string& text);
std::vector<FeatureId> parse_feature_list(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace irmap
