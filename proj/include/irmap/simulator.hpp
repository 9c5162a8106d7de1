#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "irmap/features.hpp"
#include "irmap/geometry.hpp"
#include "irmap/radiometry.hpp"
#include "irmap/spatial.hpp"

namespace irmap {

struct ScanParameters {
    double scan_speed_mm_s = 960.0;
    double hatch_um = 110.0;
    double stripe_width_mm = 10.0;
    double stripe_overlap_mm = 0.08;
    double rotation_per_layer_deg = 66.7;
    double layer_thickness_um = 40.0;

    void validate() const;
    double orientation_deg(int layer) const;
};

struct PathSample {
    PointXY pos;   // corrected-view pixel coordinates
    double time_s;  // from the start of scanning
};

struct ScanPath {
    std::vector<PathSample> samples;
    double length_mm = 0.0;
    double duration_s = 0.0;
    double orientation_deg = 0.0;
    double step_mm = 0.0;
    double hatch_mm = 0.0;
    double pixel_mm = 0.0;  // pixel pitch of the corrected view
    int stripes = 0;
    int layer = 0;
    std::vector<PixelXY> overlap_pixels;  // pixels hatched by two stripes
};

// Stripes of hatch lines clipped to the mask pixels; time only accrues on
// in-mask path, jumps are instantaneous.
ScanPath generate_scan_path(const LayerMask& mask, const ScanParameters& params, int layer, double step_mm = 0.02);

struct ThermalParams {
    double ambient_c = 80.0;
    // Linear ambient ramp across the frame width, in C end to end (0 = flat).
    double ambient_gradient_c = 0.0;
    // Rise under the beam from a single pass; overlapping hatch passes add to it.
    double peak_c = 300.0;
    double footprint_px = 1.0;  // Gaussian sigma of the hot spot
    double decay_s = 0.03;
    // Slow, wide component that builds up residual heat across the layer.
    // residual_c is the rise of an area scanned all at once, before decay.
    double residual_c = 0.0;
    double residual_footprint_px = 6.0;
    double residual_decay_s = 1.5;

    void validate() const;
    double ambient_at(double x, int width) const noexcept;
};

struct SpatterEvent {
    int emit_frame = 0;
    PixelXY landing;
    double peak_delta_c = 300.0;
    double decay_s = 0.05;
    double radius_px = 0.7;  // Gaussian sigma of the hot particle
};

struct RenderOptions {
    int width = 640;
    int height = 480;
    double fps = 30.0;
    int prescan_frames = 3;
    double start_phase = 0.5;  // laser starts this fraction of a frame after the last pre-scan frame
    int cooldown_frames = 32;
    double noise_sigma_counts = 0.0;
    std::uint64_t seed = 1;
    // Pixels left as bare metal by a recoat fault: as-printed emissivity from frame 0.
    std::vector<PixelXY> bare_metal;
    // Relative emissivity jitter on stripe-overlap pixels once printed.
    double overlap_emissivity_jitter = 0.0;
    bool keep_truth_frames = false;

    void validate() const;
};

struct GroundTruth {
    Grid<std::int32_t> true_scan_order;  // -1 where never active
    std::vector<SpatterEvent> spatter_events;
    Grid2D true_interpass;
    Grid2D emissivity_map;  // emissivity in force at the last frame
    Homography applied_homography;
    std::vector<Grid2D> true_frames;  // only with keep_truth_frames
    int first_scan_frame = 0;
};

struct RenderedLayer {
    LayerStack stack;
    GroundTruth truth;
};

RenderedLayer render_frames(const ScanPath& path, const LayerMask& mask, const ThermalParams& thermal,
                            const std::vector<SpatterEvent>& spatters, const Homography& h,
                            const RenderOptions& options, const CalibrationProfile& profile);

// Random landings in a ring 4..13 px outside the part bounds, at least 4 px
// apart, emitted in frames [first_frame, last_frame]. Deterministic in seed
// and layer.
std::vector<SpatterEvent> schedule_spatters(const LayerMask& mask, int count, int first_frame, int last_frame,
                                            double delta_c, double decay_s, std::uint64_t seed, int width, int height);

// Count span of a 0..650 C camera range at unit emissivity; noise levels are
// quoted as fractions of it.
double camera_span_counts(const CalibrationProfile& profile);

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace irmap
