#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irmap/grid.hpp"
#include "irmap/imageops.hpp"
#include "irmap/radiometry.hpp"

namespace irmap {

// Spatter contributes two maps (generation and landing), giving eleven ids
// for the ten features.
enum class FeatureId : std::uint8_t {
    Interpass = 1,
    HeatIntensity = 2,
    ScanOrder = 3,
    LocalPredeposition = 4,
    MaxPredeposition = 5,
    SpatterGeneration = 6,
    SpatterLanding = 7,
    MeltPoolArea = 8,
    CoolingRate = 9,
    InterpassLaplacian = 10,
    AsPrintedLaplacian = 11,
};

inline constexpr std::array<FeatureId, 11> kAllFeatures = {
    FeatureId::Interpass,          FeatureId::HeatIntensity,     FeatureId::ScanOrder,
    FeatureId::LocalPredeposition, FeatureId::MaxPredeposition,  FeatureId::SpatterGeneration,
    FeatureId::SpatterLanding,     FeatureId::MeltPoolArea,      FeatureId::CoolingRate,
    FeatureId::InterpassLaplacian, FeatureId::AsPrintedLaplacian};

const char* feature_name(FeatureId id) noexcept;
const char* feature_units(FeatureId id) noexcept;
std::optional<FeatureId> feature_from_name(const std::string& name);

enum class Validity : std::uint8_t { Invalid = 0, Valid = 1, Clamped = 2 };

struct FeatureMap {
    FeatureId id = FeatureId::Interpass;
    int layer = 0;
    Grid2D grid;
    Grid<Validity> validity;
    double sentinel = 0.0;  // value held by invalid pixels

    bool valid(std::size_t i) const noexcept { return validity[i] != Validity::Invalid; }
    Mask valid_mask() const;
};

inline constexpr double kUnscanned = -1.0;

struct LayerStack {
    std::vector<CountFrame> frames;
    double fps = 30.0;
    int layer = 0;
    int recoat_boundary = 0;

    int width() const { return frames.at(0).width(); }
    int height() const { return frames.at(0).height(); }
    int frame_count() const noexcept { return static_cast<int>(frames.size()); }
    void validate() const;
};

struct FeatureParams {
    int offset_frames = 10;
    int cooling_window = 30;
    int prescan_cap = 3;
    double mask_sigma = 3.0;
    double blob_sigma = 1.0;
    int dilation_radius = 2;
    std::optional<double> activity_threshold;  // counts; default 660 C at unit emissivity
    std::optional<double> melt_threshold;      // counts; default 660 C at emissivity 0.1
    // Candidate floor as a multiple of the robust noise scale of -LoG.
    double spatter_noise_k = 6.0;
    // Candidates must be blob-like: ratio of the weaker to the stronger
    // principal curvature at the cluster peak. Rejects warm hatch trails.
    double spatter_min_isotropy = 0.3;
    // Spatter search is limited to the part bounds grown by this many pixels.
    int spatter_roi_margin = 16;

    void validate() const;
    double activity_counts(const CalibrationProfile& profile) const;
    double melt_counts(const CalibrationProfile& profile) const;
};

FeatureMap interpass(const LayerStack& stack, const CalibrationProfile& profile, const FeatureParams& params = {});

std::pair<FeatureMap, FeatureMap> heat_intensity_and_scan_order(const LayerStack& stack,
                                                                const CalibrationProfile& profile,
                                                                const FeatureParams& params = {});

FeatureMap local_predeposition(const LayerStack& stack, const FeatureMap& scan_order,
                               const CalibrationProfile& profile, const FeatureParams& params = {});
FeatureMap max_predeposition(const LayerStack& stack, const FeatureMap& scan_order, const CalibrationProfile& profile,
                             const FeatureParams& params = {});

struct SpatterFrameResult {
    Mask scan_mask;        // dilated high-gradient class
    LabelGrid candidates;  // 8-connected clusters outside the exclusion
    double threshold = 0.0;
};

// `exclude` (optional) is removed from candidates along with the scan mask.
SpatterFrameResult spatter_frame_filter(const Grid2D& temperature, const FeatureParams& params = {},
                                        const Mask* exclude = nullptr);

struct SpatterRecord {
    int frame = 0;
    std::vector<PixelXY> landing_pixels;
    PointXY centroid;
    std::size_t size = 0;
    std::vector<PixelXY> source_pixels;
};

struct SpatterLayerResult {
    FeatureMap generation;
    FeatureMap landing;
    std::vector<SpatterRecord> records;
};

// `part` bounds the search region; null searches the whole frame.
SpatterLayerResult spatter_layer(const LayerStack& stack, const FeatureMap& scan_order,
                                 const CalibrationProfile& profile, const FeatureParams& params = {},
                                 const Mask* part = nullptr);

FeatureMap melt_pool_area(const LayerStack& stack, const FeatureMap& scan_order, double threshold_counts);

FeatureMap cooling_rate(const LayerStack& stack, const FeatureMap& scan_order, const CalibrationProfile& profile,
                        const FeatureParams& params = {});

FeatureMap interpass_laplacian(const FeatureMap& interpass_map, const Mask* part = nullptr, double sigma = 1.0);
// Uses the stack's final frame.
FeatureMap asprinted_laplacian(const LayerStack& stack, const CalibrationProfile& profile, const Mask* part = nullptr,
                               double sigma = 1.0);
// Same, from unquantized final-frame counts.
FeatureMap asprinted_laplacian(const Grid2D& last_counts, const CalibrationProfile& profile, const Mask* part = nullptr,
                               double sigma = 1.0);

struct LayerFeatures {
    std::vector<FeatureMap> maps;  // one per FeatureId, in kAllFeatures order
    std::vector<SpatterRecord> spatter;

    const FeatureMap& get(FeatureId id) const;
};

LayerFeatures extract_layer(const LayerStack& stack, const CalibrationProfile& profile, const FeatureParams& params,
                            const Mask* part = nullptr);

}  // namespace irmap
