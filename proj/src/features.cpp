#include "irmap/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace irmap {

namespace {

FeatureMap blank(FeatureId id, const LayerStack& stack, double sentinel) {
    return {id, stack.layer, Grid2D(stack.width(), stack.height(), sentinel),
            Grid<Validity>(stack.width(), stack.height(), Validity::Invalid), sentinel};
}

void check_scan_order(const LayerStack& stack, const FeatureMap& scan_order) {
    require(scan_order.id == FeatureId::ScanOrder, ErrorKind::Parameter, "expected a scan-order map");
    require(scan_order.grid.width() == stack.width() && scan_order.grid.height() == stack.height(),
            ErrorKind::Parameter, "scan-order map does not match the stack");
}

// Scan frame of pixel i, or -1 when unscanned.
int scan_frame(const FeatureMap& scan_order, std::size_t i) {
    return scan_order.valid(i) ? static_cast<int>(scan_order.grid[i]) : -1;
}

void apply_part(FeatureMap& map, const Mask* part) {
    if (part == nullptr) return;
    require(part->same_shape(map.grid), ErrorKind::Parameter, "part mask does not match the feature grid");
    for (std::size_t i = 0; i < map.grid.size(); ++i)
        if (!(*part)[i]) {
            map.validity[i] = Validity::Invalid;
            map.grid[i] = map.sentinel;
        }
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct Roi {
    int x0 = 0, y0 = 0, width = 0, height = 0;
};

Roi search_region(const Mask* part, int width, int height, int margin) {
    if (part == nullptr) return {0, 0, width, height};
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if ((*part)(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return {0, 0, width, height};
    x0 = std::max(0, x0 - margin);
    y0 = std::max(0, y0 - margin);
    x1 = std::min(width - 1, x1 + margin);
    y1 = std::min(height - 1, y1 + margin);
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace

const char* feature_name(FeatureId id) noexcept {
    switch (id) {
        case FeatureId::Interpass: return "interpass";
        case FeatureId::HeatIntensity: return "heat_intensity";
        case FeatureId::ScanOrder: return "scan_order";
        case FeatureId::LocalPredeposition: return "local_predeposition";
        case FeatureId::MaxPredeposition: return "max_predeposition";
        case FeatureId::SpatterGeneration: return "spatter_generation";
        case FeatureId::SpatterLanding: return "spatter_landing";
        case FeatureId::MeltPoolArea: return "melt_pool_area";
        case FeatureId::CoolingRate: return "cooling_rate";
        case FeatureId::InterpassLaplacian: return "interpass_laplacian";
        case FeatureId::AsPrintedLaplacian: return "asprinted_laplacian";
    }
    return "unknown";
}

const char* feature_units(FeatureId id) noexcept {
    switch (id) {
        case FeatureId::Interpass:
        case FeatureId::LocalPredeposition:
        case FeatureId::MaxPredeposition: return "degC";
        case FeatureId::HeatIntensity: return "counts";
        case FeatureId::ScanOrder: return "frame";
        case FeatureId::SpatterGeneration:
        case FeatureId::SpatterLanding: return "count";
        case FeatureId::MeltPoolArea: return "pixels";
        case FeatureId::CoolingRate: return "degC/s";
        case FeatureId::InterpassLaplacian:
        case FeatureId::AsPrintedLaplacian: return "degC/px^2";
    }
    return "";
}

std::optional<FeatureId> feature_from_name(const std::string& name) {
    for (FeatureId id : kAllFeatures)
        if (name == feature_name(id)) return id;
    return std::nullopt;
}

Mask FeatureMap::valid_mask() const {
    Mask m(grid.width(), grid.height(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = valid(i) ? 1 : 0;
    return m;
}

void LayerStack::validate() const {
    require(!frames.empty(), ErrorKind::Parameter, "layer stack has no frames");
    require(std::isfinite(fps) && fps > 0.0, ErrorKind::Parameter, "frame rate must be positive");
    for (const auto& f : frames)
        require(f.same_shape(frames.front()), ErrorKind::Parameter, "frames in a stack must share dimensions");
}

void FeatureParams::validate() const {
    require(offset_frames >= 0, ErrorKind::Parameter, "offset_frames must be non-negative");
    require(cooling_window >= 1, ErrorKind::Parameter, "cooling_window must be positive");
    require(prescan_cap >= 1, ErrorKind::Parameter, "prescan_cap must be positive");
    require(mask_sigma > 0.0 && blob_sigma > 0.0, ErrorKind::Parameter, "filter sigmas must be positive");
    require(dilation_radius >= 0, ErrorKind::Parameter, "dilation_radius must be non-negative");
    require(spatter_noise_k >= 0.0, ErrorKind::Parameter, "spatter_noise_k must be non-negative");
    require(spatter_min_isotropy >= 0.0 && spatter_min_isotropy <= 1.0, ErrorKind::Parameter,
            "spatter_min_isotropy must lie in [0, 1]");
    require(spatter_roi_margin >= 0, ErrorKind::Parameter, "spatter_roi_margin must be non-negative");
    if (activity_threshold) require(*activity_threshold > 0.0, ErrorKind::Parameter, "activity_threshold must be positive");
    if (melt_threshold) require(*melt_threshold > 0.0, ErrorKind::Parameter, "melt_threshold must be positive");
}

double FeatureParams::activity_counts(const CalibrationProfile& profile) const {
    return activity_threshold.value_or(forward_counts(660.0, 1.0, profile));
}

double FeatureParams::melt_counts(const CalibrationProfile& profile) const {
    return melt_threshold.value_or(forward_counts(660.0, 0.1, profile));
}

FeatureMap interpass(const LayerStack& stack, const CalibrationProfile& profile, const FeatureParams& params) {
    stack.validate();
    params.validate();
    const double active = params.activity_counts(profile);
    int first_active = stack.frame_count();
    for (int f = 0; f < stack.frame_count() && first_active == stack.frame_count(); ++f) {
        const auto v = stack.frames[static_cast<std::size_t>(f)].values();
        if (std::any_of(v.begin(), v.end(), [&](std::uint16_t c) { return c > active; })) first_active = f;
    }
    if (first_active == 0) fail(ErrorKind::NoPrescan, "laser active in the first frame of layer " + std::to_string(stack.layer));
    const int k = std::min(first_active, params.prescan_cap);

    const CountTable powder(profile.emissivity_powder, profile);
    FeatureMap out = blank(FeatureId::Interpass, stack, kFloorSentinelC);
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        double sum = 0.0;
        bool ok = true;
        for (int f = 0; f < k; ++f) {
            const std::uint16_t c = stack.frames[static_cast<std::size_t>(f)][i];
            ok = ok && !powder.below_floor(c);
            sum += powder(c);
        }
        if (ok) {
            out.grid[i] = sum / k;
            out.validity[i] = Validity::Valid;
        }
    }
    return out;
}

std::pair<FeatureMap, FeatureMap> heat_intensity_and_scan_order(const LayerStack& stack,
                                                                const CalibrationProfile& profile,
                                                                const FeatureParams& params) {
    stack.validate();
    params.validate();
    ReductionState state(stack.width(), stack.height());
    for (int f = 0; f < stack.frame_count(); ++f) state.fold(stack.frames[static_cast<std::size_t>(f)].values(), f);

    const double active = params.activity_counts(profile);
    FeatureMap heat = blank(FeatureId::HeatIntensity, stack, kUnscanned);
    FeatureMap order = blank(FeatureId::ScanOrder, stack, kUnscanned);
    for (std::size_t i = 0; i < heat.grid.size(); ++i) {
        if (!(state.max_value()[i] > active)) continue;
        heat.grid[i] = state.max_value()[i];
        heat.validity[i] = Validity::Valid;
        order.grid[i] = state.argmax_frame()[i];
        order.validity[i] = Validity::Valid;
    }
    return {std::move(heat), std::move(order)};
}

FeatureMap local_predeposition(const LayerStack& stack, const FeatureMap& scan_order,
                               const CalibrationProfile& profile, const FeatureParams& params) {
    stack.validate();
    params.validate();
    check_scan_order(stack, scan_order);
    const CountTable powder(profile.emissivity_powder, profile);
    FeatureMap out = blank(FeatureId::LocalPredeposition, stack, kFloorSentinelC);
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        const int s = scan_frame(scan_order, i);
        if (s < 0) continue;
        const int f = s - params.offset_frames;
        const std::uint16_t c = stack.frames[static_cast<std::size_t>(std::max(f, 0))][i];
        if (powder.below_floor(c)) continue;
        out.grid[i] = powder(c);
        out.validity[i] = f < 0 ? Validity::Clamped : Validity::Valid;
    }
    return out;
}

FeatureMap max_predeposition(const LayerStack& stack, const FeatureMap& scan_order, const CalibrationProfile& profile,
                             const FeatureParams& params) {
    stack.validate();
    params.validate();
    check_scan_order(stack, scan_order);
    const CountTable powder(profile.emissivity_powder, profile);
    FeatureMap out = blank(FeatureId::MaxPredeposition, stack, kFloorSentinelC);
    // Counts map monotonically to temperature, so the window max is taken in counts.
    std::vector<std::uint16_t> peak(out.grid.size(), 0);
    std::vector<int> last(out.grid.size(), -1);
    for (std::size_t i = 0; i < peak.size(); ++i) {
        const int s = scan_frame(scan_order, i);
        if (s >= 0) last[i] = std::max(s - params.offset_frames, 0);
    }
    for (int f = 0; f < stack.frame_count(); ++f) {
        const auto& frame = stack.frames[static_cast<std::size_t>(f)];
        for (std::size_t i = 0; i < peak.size(); ++i)
            if (f <= last[i]) peak[i] = std::max(peak[i], frame[i]);
    }
    for (std::size_t i = 0; i < peak.size(); ++i) {
        const int s = scan_frame(scan_order, i);
        if (s < 0 || powder.below_floor(peak[i])) continue;
        out.grid[i] = powder(peak[i]);
        out.validity[i] = s - params.offset_frames < 0 ? Validity::Clamped : Validity::Valid;
    }
    return out;
}

SpatterFrameResult spatter_frame_filter(const Grid2D& temperature, const FeatureParams& params, const Mask* exclude) {
    params.validate();
    const int w = temperature.width(), h = temperature.height();
    SpatterFrameResult out{Mask(w, h, 0), LabelGrid{Grid<std::int32_t>(w, h, 0), 0}, 0.0};
    if (exclude) require(exclude->same_shape(temperature), ErrorKind::Parameter, "exclusion mask shape mismatch");

    const Grid2D grad = gaussian_gradient_magnitude(temperature, params.mask_sigma);
    OtsuSplit split;
    try {
        split = otsu_split(grad.values());
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateHistogram) throw;
        return out;
    }
    Mask track(w, h, 0);
    for (std::size_t i = 0; i < grad.size(); ++i) track[i] = grad[i] >= split.threshold ? 1 : 0;
    out.scan_mask = dilate(track, params.dilation_radius);

    Grid2D response = gaussian_laplace(temperature, params.blob_sigma);
    std::vector<double> free_values, positive;
    for (std::size_t i = 0; i < response.size(); ++i) {
        response[i] = -response[i];
        if (out.scan_mask[i] || (exclude && (*exclude)[i])) continue;
        free_values.push_back(response[i]);
        if (response[i] > 0.0) positive.push_back(response[i]);
    }
    if (positive.size() < 2) return out;

    double threshold = 0.0;
    try {
        threshold = otsu_split(positive).threshold;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateHistogram) throw;
        return out;
    }
    // Robust noise scale: 1.4826 * median absolute deviation.
    const double centre = median_of(free_values);
    for (double& v : free_values) v = std::abs(v - centre);
    const double noise = 1.4826 * median_of(free_values);
    out.threshold = std::max(threshold, centre + params.spatter_noise_k * noise);

    Mask hot(w, h, 0);
    for (std::size_t i = 0; i < response.size(); ++i)
        hot[i] = (response[i] >= out.threshold && response[i] > 0.0 && !out.scan_mask[i] &&
                  !(exclude && (*exclude)[i]))
                     ? 1
                     : 0;
    LabelGrid clusters = label_components(hot, 8);
    if (clusters.count == 0) return out;

    std::vector<std::size_t> peak(static_cast<std::size_t>(clusters.count), 0);
    std::vector<double> peak_value(peak.size(), -INFINITY);
    for (std::size_t i = 0; i < response.size(); ++i)
        if (const int l = clusters.labels[i]; l > 0 && response[i] > peak_value[l - 1]) {
            peak_value[l - 1] = response[i];
            peak[l - 1] = i;
        }
    const Hessian hess = gaussian_hessian(temperature, params.blob_sigma);
    std::vector<std::int32_t> relabel(peak.size() + 1, 0);
    std::int32_t kept = 0;
    for (std::size_t n = 0; n < peak.size(); ++n) {
        const std::size_t i = peak[n];
        const double mean = 0.5 * (hess.xx[i] + hess.yy[i]);
        const double radius = std::hypot(0.5 * (hess.xx[i] - hess.yy[i]), hess.xy[i]);
        const double strong = mean - radius, weak = mean + radius;
        if (strong < 0.0 && weak < 0.0 && weak / strong >= params.spatter_min_isotropy) relabel[n + 1] = ++kept;
    }
    for (auto& l : clusters.labels.values()) l = relabel[static_cast<std::size_t>(l)];
    clusters.count = kept;
    out.candidates = std::move(clusters);
    return out;
}

SpatterLayerResult spatter_layer(const LayerStack& stack, const FeatureMap& scan_order,
                                 const CalibrationProfile& profile, const FeatureParams& params, const Mask* part) {
    stack.validate();
    params.validate();
    check_scan_order(stack, scan_order);
    if (part) require(part->width() == stack.width() && part->height() == stack.height(), ErrorKind::Parameter,
                      "part mask does not match the stack");

    SpatterLayerResult out{blank(FeatureId::SpatterGeneration, stack, 0.0), blank(FeatureId::SpatterLanding, stack, 0.0),
                           {}};
    for (std::size_t i = 0; i < out.generation.grid.size(); ++i) {
        if (scan_frame(scan_order, i) >= 0) out.generation.validity[i] = Validity::Valid;
        out.landing.validity[i] = Validity::Valid;
    }

    // Filters run on a guard band around the search region so clusters at
    // its edge see the same neighbourhood as in a full-frame pass.
    const Roi inner = search_region(part, stack.width(), stack.height(), params.spatter_roi_margin);
    const int guard = kernel_radius(std::max(params.mask_sigma, params.blob_sigma));
    const Roi roi = search_region(part, stack.width(), stack.height(), params.spatter_roi_margin + guard);
    const auto in_inner = [&](PixelXY p) {
        return p.x >= inner.x0 && p.y >= inner.y0 && p.x < inner.x0 + inner.width && p.y < inner.y0 + inner.height;
    };
    const CountTable powder(profile.emissivity_powder, profile);
    const CountTable printed(profile.emissivity_printed, profile);
    Mask counted(roi.width, roi.height, 0);
    Grid2D temp(roi.width, roi.height);
    Mask scanned(roi.width, roi.height, 0);

    std::vector<std::vector<std::size_t>> laser_at(static_cast<std::size_t>(stack.frame_count()));
    for (std::size_t i = 0; i < scan_order.grid.size(); ++i)
        if (const int s = scan_frame(scan_order, i); s >= 0) laser_at[static_cast<std::size_t>(s)].push_back(i);

    for (int t = 0; t < stack.frame_count(); ++t) {
        const auto& frame = stack.frames[static_cast<std::size_t>(t)];
        for (int y = 0; y < roi.height; ++y)
            for (int x = 0; x < roi.width; ++x) {
                const std::size_t i = frame.index(roi.x0 + x, roi.y0 + y);
                const int s = scan_frame(scan_order, i);
                const bool done = s >= 0 && s <= t;
                // The pool under the laser heats up a frame before it crosses activity.
                scanned(x, y) = s >= 0 && s <= t + 1 ? 1 : 0;
                temp(x, y) = done ? printed(frame[i]) : powder(frame[i]);
            }
        // Scanned track and the laser position are excluded with the same dilation.
        const Mask exclude = dilate(scanned, params.dilation_radius);
        const SpatterFrameResult res = spatter_frame_filter(temp, params, &exclude);
        if (res.candidates.count == 0) continue;

        std::vector<SpatterRecord> found(static_cast<std::size_t>(res.candidates.count));
        std::vector<bool> seen_before(found.size(), false), outside(found.size(), false);
        for (int y = 0; y < roi.height; ++y)
            for (int x = 0; x < roi.width; ++x) {
                const int l = res.candidates.labels(x, y);
                if (l == 0) continue;
                const auto n = static_cast<std::size_t>(l - 1);
                found[n].landing_pixels.push_back({roi.x0 + x, roi.y0 + y});
                if (counted(x, y)) seen_before[n] = true;
                if (!in_inner({roi.x0 + x, roi.y0 + y})) outside[n] = true;
            }
        std::vector<PixelXY> sources;
        for (std::size_t i : laser_at[static_cast<std::size_t>(t)])
            sources.push_back({static_cast<int>(i % static_cast<std::size_t>(stack.width())),
                               static_cast<int>(i / static_cast<std::size_t>(stack.width()))});
        int fresh = 0;
        for (std::size_t n = 0; n < found.size(); ++n) {
            auto& rec = found[n];
            if (outside[n]) continue;
            for (const auto& p : rec.landing_pixels) counted(p.x - roi.x0, p.y - roi.y0) = 1;
            if (seen_before[n]) continue;
            rec.frame = t;
            rec.size = rec.landing_pixels.size();
            double cx = 0.0, cy = 0.0;
            for (const auto& p : rec.landing_pixels) {
                cx += p.x;
                cy += p.y;
                out.landing.grid(p.x, p.y) += 1.0;
            }
            rec.centroid = {cx / static_cast<double>(rec.size), cy / static_cast<double>(rec.size)};
            rec.source_pixels = sources;
            out.records.push_back(std::move(rec));
            ++fresh;
        }
        for (std::size_t i : laser_at[static_cast<std::size_t>(t)]) out.generation.grid[i] += fresh;
    }
    return out;
}

FeatureMap melt_pool_area(const LayerStack& stack, const FeatureMap& scan_order, double threshold_counts) {
    stack.validate();
    check_scan_order(stack, scan_order);
    require(std::isfinite(threshold_counts), ErrorKind::Parameter, "melt threshold must be finite");
    std::vector<double> area(static_cast<std::size_t>(stack.frame_count()), 0.0);
    for (int f = 0; f < stack.frame_count(); ++f) {
        const auto v = stack.frames[static_cast<std::size_t>(f)].values();
        area[static_cast<std::size_t>(f)] =
            static_cast<double>(std::count_if(v.begin(), v.end(), [&](std::uint16_t c) { return c > threshold_counts; }));
    }
    FeatureMap out = blank(FeatureId::MeltPoolArea, stack, kUnscanned);
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        if (const int s = scan_frame(scan_order, i); s >= 0) {
            out.grid[i] = area[static_cast<std::size_t>(s)];
            out.validity[i] = Validity::Valid;
        }
    return out;
}

FeatureMap cooling_rate(const LayerStack& stack, const FeatureMap& scan_order, const CalibrationProfile& profile,
                        const FeatureParams& params) {
    stack.validate();
    params.validate();
    check_scan_order(stack, scan_order);
    const CountTable printed(profile.emissivity_printed, profile);
    FeatureMap out = blank(FeatureId::CoolingRate, stack, std::numeric_limits<double>::quiet_NaN());
    const int w = params.cooling_window;
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        const int s = scan_frame(scan_order, i);
        if (s < 0 || s + w >= stack.frame_count()) continue;
        const std::uint16_t hot = stack.frames[static_cast<std::size_t>(s)][i];
        const std::uint16_t cool = stack.frames[static_cast<std::size_t>(s + w)][i];
        if (printed.below_floor(hot) || printed.below_floor(cool)) continue;
        out.grid[i] = (printed(hot) - printed(cool)) * stack.fps / w;
        out.validity[i] = Validity::Valid;
    }
    return out;
}

FeatureMap interpass_laplacian(const FeatureMap& interpass_map, const Mask* part, double sigma) {
    require(interpass_map.id == FeatureId::Interpass, ErrorKind::Parameter, "expected an interpass map");
    FeatureMap out{FeatureId::InterpassLaplacian, interpass_map.layer, gaussian_laplace(interpass_map.grid, sigma),
                   interpass_map.validity, 0.0};
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        if (!out.valid(i)) out.grid[i] = out.sentinel;
    apply_part(out, part);
    return out;
}

FeatureMap asprinted_laplacian(const Grid2D& last_counts, const CalibrationProfile& profile, const Mask* part,
                               double sigma) {
    const TemperatureFrame last =
        convert_frame(last_counts, Grid<SurfaceClass>(last_counts.width(), last_counts.height(), SurfaceClass::as_printed()),
                      profile);
    FeatureMap out{FeatureId::AsPrintedLaplacian, 0, gaussian_laplace(last.celsius, sigma),
                   Grid<Validity>(last_counts.width(), last_counts.height(), Validity::Valid), 0.0};
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        if (last.below_floor[i]) {
            out.validity[i] = Validity::Invalid;
            out.grid[i] = out.sentinel;
        }
    apply_part(out, part);
    return out;
}

FeatureMap asprinted_laplacian(const LayerStack& stack, const CalibrationProfile& profile, const Mask* part,
                               double sigma) {
    stack.validate();
    FeatureMap out = asprinted_laplacian(to_double(stack.frames.back()), profile, part, sigma);
    out.layer = stack.layer;
    return out;
}

const FeatureMap& LayerFeatures::get(FeatureId id) const {
    for (const auto& m : maps)
        if (m.id == id) return m;
    fail(ErrorKind::Invariant, std::string("feature ") + feature_name(id) + " missing from layer output");
}

LayerFeatures extract_layer(const LayerStack& stack, const CalibrationProfile& profile, const FeatureParams& params,
                            const Mask* part) {
    stack.validate();
    params.validate();
    profile.validate();
    LayerFeatures out;
    FeatureMap pre = interpass(stack, profile, params);
    auto [heat, order] = heat_intensity_and_scan_order(stack, profile, params);
    FeatureMap local = local_predeposition(stack, order, profile, params);
    FeatureMap maxpre = max_predeposition(stack, order, profile, params);
    SpatterLayerResult spatter = spatter_layer(stack, order, profile, params, part);
    FeatureMap melt = melt_pool_area(stack, order, params.melt_counts(profile));
    FeatureMap cool = cooling_rate(stack, order, profile, params);
    FeatureMap lap = interpass_laplacian(pre, part, params.blob_sigma);
    FeatureMap printed_lap = asprinted_laplacian(stack, profile, part, params.blob_sigma);

    out.maps.push_back(std::move(pre));
    out.maps.push_back(std::move(heat));
    out.maps.push_back(std::move(order));
    out.maps.push_back(std::move(local));
    out.maps.push_back(std::move(maxpre));
    out.maps.push_back(std::move(spatter.generation));
    out.maps.push_back(std::move(spatter.landing));
    out.maps.push_back(std::move(melt));
    out.maps.push_back(std::move(cool));
    out.maps.push_back(std::move(lap));
    out.maps.push_back(std::move(printed_lap));
    out.spatter = std::move(spatter.records);
    for (auto& m : out.maps) m.layer = stack.layer;
    return out;
}

}  // namespace irmap
