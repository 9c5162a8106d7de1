#include "irmap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <boost/random/normal_distribution.hpp>

namespace irmap {

void ScanParameters::validate() const {
    for (double v : {scan_speed_mm_s, hatch_um, stripe_width_mm, stripe_overlap_mm, layer_thickness_um})
        require(std::isfinite(v) && v > 0.0, ErrorKind::Parameter, "scan parameters must be positive");
    require(std::isfinite(rotation_per_layer_deg), ErrorKind::Parameter, "rotation must be finite");
    require(stripe_overlap_mm < stripe_width_mm, ErrorKind::Parameter, "stripe overlap must be below stripe width");
}

double ScanParameters::orientation_deg(int layer) const {
    const double a = std::fmod(layer * rotation_per_layer_deg, 180.0);
    return a < 0.0 ? a + 180.0 : a;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

ScanPath generate_scan_path(const LayerMask& mask, const ScanParameters& params, int layer, double step_mm) {
    params.validate();
    require(step_mm > 0.0 && std::isfinite(step_mm), ErrorKind::Parameter, "path step must be positive");
    ScanPath path;
    path.layer = layer;
    path.orientation_deg = params.orientation_deg(layer);
    path.step_mm = step_mm;
    path.hatch_mm = params.hatch_um / 1000.0;
    path.pixel_mm = mask.registration.pitch_um / 1000.0;
    if (mask.empty()) return path;

    const Mask inside = mask.to_mask();
    const double px = path.pixel_mm;
    const double theta = path.orientation_deg * std::numbers::pi / 180.0;
    const double ux = std::cos(theta), uy = std::sin(theta);
    // v is u rotated by +90 degrees; hatch lines advance along it.
    const double vx = -uy, vy = ux;

    double umin = INFINITY, umax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
    for (const auto& p : mask.pixels)
        for (double dx : {-0.5, 0.5})
            for (double dy : {-0.5, 0.5}) {
                const double X = (p.x + dx) * px, Y = (p.y + dy) * px;
                const double u = X * ux + Y * uy, v = X * vx + Y * vy;
                umin = std::min(umin, u);
                umax = std::max(umax, u);
                vmin = std::min(vmin, v);
                vmax = std::max(vmax, v);
            }

    const double width = params.stripe_width_mm, overlap = params.stripe_overlap_mm;
    const double span = umax - umin;
    path.stripes = span <= width ? 1 : static_cast<int>(std::ceil((span - overlap) / (width - overlap) - 1e-9));

    const auto in_mask = [&](double u, double v, PixelXY& pix) {
        const double X = u * ux + v * vx, Y = u * uy + v * vy;
        pix = {static_cast<int>(std::lround(X / px)), static_cast<int>(std::lround(Y / px))};
        return inside.contains(pix.x, pix.y) && inside(pix.x, pix.y) != 0;
    };

    std::vector<int> first_stripe(inside.size(), -1);
    std::set<PixelXY> overlap_set;
    double elapsed = 0.0;
    long line = 0;
    for (int s = 0; s < path.stripes; ++s) {
        const double u0 = umin + s * (width - overlap);
        const double u1 = std::min(u0 + width, umax);
        const int steps = std::max(1, static_cast<int>(std::ceil((u1 - u0) / step_mm - 1e-9)));
        const double du = (u1 - u0) / steps;
        for (double v = vmin + 0.5 * path.hatch_mm; v < vmax; v += path.hatch_mm, ++line) {
            const bool forward = line % 2 == 0;
            for (int m = 0; m < steps; ++m) {
                const double u = forward ? u0 + (m + 0.5) * du : u1 - (m + 0.5) * du;
                PixelXY pix;
                if (!in_mask(u, v, pix)) continue;
                path.samples.push_back({{(u * ux + v * vx) / px, (u * uy + v * vy) / px},
                                        elapsed + 0.5 * du / params.scan_speed_mm_s});
                elapsed += du / params.scan_speed_mm_s;
                path.length_mm += du;
                auto& owner = first_stripe[inside.index(pix.x, pix.y)];
                if (owner < 0)
                    owner = s;
                else if (owner != s)
                    overlap_set.insert(pix);
            }
        }
    }
    path.duration_s = elapsed;
    path.overlap_pixels.assign(overlap_set.begin(), overlap_set.end());
    return path;
}

void ThermalParams::validate() const {
    require(std::isfinite(ambient_c) && ambient_c > -273.15, ErrorKind::Parameter, "ambient must exceed absolute zero");
    require(std::isfinite(ambient_gradient_c), ErrorKind::Parameter, "ambient gradient must be finite");
    require(std::isfinite(peak_c) && peak_c >= 0.0, ErrorKind::Parameter, "peak rise must be non-negative");
    require(footprint_px >= 1.0 && footprint_px <= 7.0, ErrorKind::Parameter, "footprint must lie in [1, 7] px");
    require(decay_s > 0.0 && std::isfinite(decay_s), ErrorKind::Parameter, "decay must be positive");
    require(std::isfinite(residual_c) && residual_c >= 0.0, ErrorKind::Parameter, "residual rise must be non-negative");
    require(residual_footprint_px > 0.0 && residual_decay_s > 0.0, ErrorKind::Parameter,
            "residual footprint and decay must be positive");
}

double ThermalParams::ambient_at(double x, int width) const noexcept {
    if (width <= 1) return ambient_c;
    return ambient_c + ambient_gradient_c * (x / (width - 1) - 0.5);
}

void RenderOptions::validate() const {
    require(width > 0 && height > 0, ErrorKind::Parameter, "frame size must be positive");
    require(fps > 0.0 && std::isfinite(fps), ErrorKind::Parameter, "frame rate must be positive");
    require(prescan_frames >= 1, ErrorKind::Parameter, "at least one pre-scan frame is required");
    require(start_phase > 0.0 && start_phase < 1.0, ErrorKind::Parameter, "start phase must lie in (0, 1)");
    require(cooldown_frames >= 0, ErrorKind::Parameter, "cooldown frames must be non-negative");
    require(noise_sigma_counts >= 0.0 && std::isfinite(noise_sigma_counts), ErrorKind::Parameter,
            "noise sigma must be non-negative");
    require(overlap_emissivity_jitter >= 0.0 && overlap_emissivity_jitter < 1.0, ErrorKind::Parameter,
            "emissivity jitter must lie in [0, 1)");
    for (const auto& p : bare_metal)
        require(p.x >= 0 && p.y >= 0 && p.x < width && p.y < height, ErrorKind::Parameter,
                "bare-metal pixel outside the frame");
}

double camera_span_counts(const CalibrationProfile& profile) {
    return profile.model.signal(650.0) - profile.model.signal(0.0);
}

std::vector<SpatterEvent> schedule_spatters(const LayerMask& mask, int count, int first_frame, int last_frame,
                                            double delta_c, double decay_s, std::uint64_t seed, int width, int height) {
    constexpr int kLandingSpacingPx = 3;
    require(count >= 0, ErrorKind::Parameter, "spatter count must be non-negative");
    require(first_frame <= last_frame, ErrorKind::Parameter, "spatter frame range is empty");
    std::vector<SpatterEvent> events;
    if (count == 0 || mask.empty()) return events;
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (const auto& p : mask.pixels) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(0x5A77u + static_cast<std::uint64_t>(mask.layer))));
    const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int attempts = 0; static_cast<int>(events.size()) < count; ++attempts) {
        require(attempts < 1000 * count, ErrorKind::Parameter, "no room around the part for spatter landings");
        const int off = pick(4, 13);
        PixelXY p;
        switch (pick(0, 3)) {
            case 0: p = {x1 + off, pick(y0, y1)}; break;
            case 1: p = {x0 - off, pick(y0, y1)}; break;
            case 2: p = {pick(x0, x1), y1 + off}; break;
            default: p = {pick(x0, x1), y0 - off}; break;
        }
        if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) continue;
        // Landings stay apart so each one is separately observable.
        if (std::any_of(events.begin(), events.end(), [&](const SpatterEvent& o) {
                return std::abs(o.landing.x - p.x) <= kLandingSpacingPx && std::abs(o.landing.y - p.y) <= kLandingSpacingPx;
            }))
            continue;
        SpatterEvent e;
        e.emit_frame = pick(first_frame, last_frame);
        e.landing = p;
        e.peak_delta_c = delta_c;
        e.decay_s = decay_s;
        events.push_back(e);
    }
    return events;
}

namespace {

struct Box {
    int x0, y0, x1, y1;  // inclusive
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool empty() const { return x1 < x0 || y1 < y0; }
};

// Adds exp(-d^2/2s^2)*amp around (cx, cy), restricted to the box.
void splat(Grid2D& field, const Box& box, double cx, double cy, double sigma, double amp) {
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    const int xa = std::max(box.x0, static_cast<int>(std::floor(cx)) - r);
    const int xb = std::min(box.x1, static_cast<int>(std::ceil(cx)) + r);
    const int ya = std::max(box.y0, static_cast<int>(std::floor(cy)) - r);
    const int yb = std::min(box.y1, static_cast<int>(std::ceil(cy)) + r);
    if (xa > xb || ya > yb) return;
    double gx[64], gy[64];
    const double k = -0.5 / (sigma * sigma);
    for (int x = xa; x <= xb; ++x) gx[x - xa] = std::exp(k * (x - cx) * (x - cx));
    for (int y = ya; y <= yb; ++y) gy[y - ya] = amp * std::exp(k * (y - cy) * (y - cy));
    for (int y = ya; y <= yb; ++y)
        for (int x = xa; x <= xb; ++x) field(x - box.x0, y - box.y0) += gy[y - ya] * gx[x - xa];
}

// Zero-padded separable blur with a unit-sum kernel.
Grid2D blur_zero(const Grid2D& in, double sigma) {
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> taps(2 * static_cast<std::size_t>(r) + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += taps[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& t : taps) t /= sum;
    Grid2D tmp(in.width(), in.height()), out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) {
            double acc = 0.0;
            for (int i = std::max(-r, -x); i <= std::min(r, in.width() - 1 - x); ++i) acc += taps[i + r] * in(x + i, y);
            tmp(x, y) = acc;
        }
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) {
            double acc = 0.0;
            for (int i = std::max(-r, -y); i <= std::min(r, in.height() - 1 - y); ++i)
                acc += taps[i + r] * tmp(x, y + i);
            out(x, y) = acc;
        }
    return out;
}

std::uint16_t to_count(double c) {
    if (!(c > 0.0)) return 0;
    if (c >= 65535.0) return 65535;
    return static_cast<std::uint16_t>(std::lround(c));
}

}  // namespace

RenderedLayer render_frames(const ScanPath& path, const LayerMask& mask, const ThermalParams& thermal,
                            const std::vector<SpatterEvent>& spatters, const Homography& h,
                            const RenderOptions& options, const CalibrationProfile& profile) {
    thermal.validate();
    options.validate();
    profile.validate();
    const int W = options.width, H = options.height;
    const double fps = options.fps;
    const double t_start = (options.prescan_frames - 1 + options.start_phase) / fps;
    const int scan_frames = static_cast<int>(std::ceil(path.duration_s * fps - 1e-9));
    const int frame_count = options.prescan_frames + scan_frames + options.cooldown_frames;

    for (const auto& e : spatters) {
        require(e.emit_frame >= 0 && e.emit_frame < frame_count, ErrorKind::Parameter,
                "spatter emit frame " + std::to_string(e.emit_frame) + " outside 0.." + std::to_string(frame_count - 1));
        require(e.landing.x >= 0 && e.landing.y >= 0 && e.landing.x < W && e.landing.y < H, ErrorKind::Parameter,
                "spatter landing pixel outside the frame");
        require(e.peak_delta_c > 0.0 && e.decay_s > 0.0 && e.radius_px > 0.0 && e.radius_px <= 7.0, ErrorKind::Parameter,
                "spatter rise, decay and radius must be positive");
    }

    // Region where anything departs from ambient.
    Box roi{W, H, -1, -1};
    const auto grow = [&](double cx, double cy, double reach) {
        roi.x0 = std::min(roi.x0, static_cast<int>(std::floor(cx - reach)));
        roi.y0 = std::min(roi.y0, static_cast<int>(std::floor(cy - reach)));
        roi.x1 = std::max(roi.x1, static_cast<int>(std::ceil(cx + reach)));
        roi.y1 = std::max(roi.y1, static_cast<int>(std::ceil(cy + reach)));
    };
    const double reach = 4.0 * std::max(thermal.footprint_px, thermal.residual_c > 0 ? thermal.residual_footprint_px : 0.0) + 1;
    for (const auto& s : path.samples) grow(s.pos.x, s.pos.y, reach);
    for (const auto& e : spatters) grow(e.landing.x, e.landing.y, 4.0 * e.radius_px + 1);
    for (const auto& p : mask.pixels) grow(p.x, p.y, 1);
    roi = {std::max(roi.x0, 0), std::max(roi.y0, 0), std::min(roi.x1, W - 1), std::min(roi.y1, H - 1)};

    // Pass 1: true rise above ambient on the ROI for every frame.
    const double sigma = thermal.footprint_px;
    const double ds_px = path.pixel_mm > 0 ? path.step_mm / path.pixel_mm : 0.0;
    const double amp = thermal.peak_c * ds_px / (sigma * std::sqrt(std::numbers::pi / 2.0));
    const double res_amp = path.pixel_mm > 0
                               ? thermal.residual_c * path.step_mm * path.hatch_mm / (path.pixel_mm * path.pixel_mm)
                               : 0.0;
    std::vector<Grid2D> rise;
    if (!roi.empty()) {
        rise.reserve(static_cast<std::size_t>(frame_count));
        Grid2D fast(roi.width(), roi.height()), slow(roi.width(), roi.height());
        const double fast_keep = std::exp(-1.0 / (fps * thermal.decay_s));
        const double slow_keep = std::exp(-1.0 / (fps * thermal.residual_decay_s));
        std::size_t next = 0;
        for (int f = 0; f < frame_count; ++f) {
            const double tf = f / fps;
            for (double& v : fast.values()) v *= fast_keep;
            for (double& v : slow.values()) v *= slow_keep;
            Grid2D deposit(roi.width(), roi.height());
            bool deposited = false;
            for (; next < path.samples.size() && t_start + path.samples[next].time_s <= tf; ++next) {
                const auto& s = path.samples[next];
                const double age = tf - (t_start + s.time_s);
                splat(fast, roi, s.pos.x, s.pos.y, sigma, amp * std::exp(-age / thermal.decay_s));
                if (res_amp > 0.0) {
                    const int x = static_cast<int>(std::lround(s.pos.x)) - roi.x0;
                    const int y = static_cast<int>(std::lround(s.pos.y)) - roi.y0;
                    if (deposit.contains(x, y)) {
                        deposit(x, y) += res_amp * std::exp(-age / thermal.residual_decay_s);
                        deposited = true;
                    }
                }
            }
            if (deposited) {
                const Grid2D spread = blur_zero(deposit, thermal.residual_footprint_px);
                for (std::size_t i = 0; i < slow.size(); ++i) slow[i] += spread[i];
            }
            Grid2D total = fast;
            for (std::size_t i = 0; i < total.size(); ++i) total[i] += slow[i];
            for (const auto& e : spatters) {
                if (f < e.emit_frame) continue;
                const double a = e.peak_delta_c * std::exp(-(f - e.emit_frame) / (fps * e.decay_s));
                splat(total, roi, e.landing.x, e.landing.y, e.radius_px, a);
            }
            rise.push_back(std::move(total));
        }
    }

    RenderedLayer out;
    auto& truth = out.truth;
    truth.spatter_events = spatters;
    truth.applied_homography = h;
    truth.first_scan_frame = options.prescan_frames;
    truth.true_scan_order = Grid<std::int32_t>(W, H, -1);

    std::vector<double> ambient(static_cast<std::size_t>(W));
    for (int x = 0; x < W; ++x) ambient[x] = thermal.ambient_at(x, W);

    // True scan order: frame of maximum true temperature among active pixels.
    const double eps_powder = profile.emissivity_powder, eps_printed = profile.emissivity_printed;
    const double active = FeatureParams{}.activity_counts(profile);
    if (!roi.empty())
        for (int y = roi.y0; y <= roi.y1; ++y)
            for (int x = roi.x0; x <= roi.x1; ++x) {
                const std::size_t i = static_cast<std::size_t>(y - roi.y0) * roi.width() + (x - roi.x0);
                int best = 0;
                for (int f = 1; f < frame_count; ++f)
                    if (rise[f][i] > rise[best][i]) best = f;
                if (frame_count > 0 && forward_counts(ambient[x] + rise[best][i], eps_powder, profile) > active)
                    truth.true_scan_order(x, y) = best;
            }

    // Emissivity: powder until the true scan frame, as-printed after, for part pixels.
    const Mask part = mask.empty() ? Mask(W, H, 0) : mask.to_mask();
    require(part.width() == W && part.height() == H, ErrorKind::Parameter, "mask registration does not match frame size");
    Grid2D printed_eps(W, H, eps_printed);
    if (options.overlap_emissivity_jitter > 0.0) {
        std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(0xE5E5u + static_cast<std::uint64_t>(path.layer))));
        boost::random::normal_distribution<double> n01(0.0, 1.0);
        for (const auto& p : path.overlap_pixels)
            if (printed_eps.contains(p.x, p.y))
                printed_eps(p.x, p.y) =
                    std::clamp(eps_printed * (1.0 + options.overlap_emissivity_jitter * n01(rng)), 0.01, 1.0);
    }
    Mask bare(W, H, 0);
    for (const auto& p : options.bare_metal) bare(p.x, p.y) = 1;
    const auto emissivity = [&](int x, int y, int f) {
        if (bare(x, y)) return printed_eps(x, y);
        const int s = truth.true_scan_order(x, y);
        if (part(x, y) && s >= 0 && f > s) return printed_eps(x, y);
        return eps_powder;
    };

    truth.emissivity_map = Grid2D(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) truth.emissivity_map(x, y) = emissivity(x, y, frame_count);

    const int k = std::min(options.prescan_frames, 3);
    truth.true_interpass = Grid2D(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int f = 0; f < k; ++f) {
                double t = ambient[x];
                if (!roi.empty() && x >= roi.x0 && x <= roi.x1 && y >= roi.y0 && y <= roi.y1)
                    t += rise[f](x - roi.x0, y - roi.y0);
                acc += t;
            }
            truth.true_interpass(x, y) = acc / k;
        }

    // Pass 2: counts per frame, camera distortion, noise.
    Grid2D base(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) base(x, y) = forward_counts(ambient[x], emissivity(x, y, 0), profile);
    const bool warp = !h.is_identity();
    out.stack.fps = fps;
    out.stack.layer = path.layer;
    out.stack.frames.reserve(static_cast<std::size_t>(frame_count));
    for (int f = 0; f < frame_count; ++f) {
        Grid2D counts = base;
        for (const auto& p : options.bare_metal) counts(p.x, p.y) = forward_counts(ambient[p.x], printed_eps(p.x, p.y), profile);
        if (!roi.empty())
            for (int y = roi.y0; y <= roi.y1; ++y)
                for (int x = roi.x0; x <= roi.x1; ++x)
                    counts(x, y) =
                        forward_counts(ambient[x] + rise[f](x - roi.x0, y - roi.y0), emissivity(x, y, f), profile);
        if (options.keep_truth_frames) {
            Grid2D t(W, H);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) t(x, y) = ambient[x];
            if (!roi.empty())
                for (int y = roi.y0; y <= roi.y1; ++y)
                    for (int x = roi.x0; x <= roi.x1; ++x) t(x, y) += rise[f](x - roi.x0, y - roi.y0);
            truth.true_frames.push_back(std::move(t));
        }
        if (warp) {
            WarpedFrame wf = warp_frame(counts, h, W, H);
            for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = wf.valid[i] ? wf.values[i] : base[i];
        }
        CountFrame frame(W, H);
        if (options.noise_sigma_counts > 0.0) {
            std::mt19937_64 rng(splitmix64(options.seed ^
                                           splitmix64((static_cast<std::uint64_t>(path.layer) << 32) ^
                                                      static_cast<std::uint64_t>(f))));
            boost::random::normal_distribution<double> noise(0.0, options.noise_sigma_counts);
            for (std::size_t i = 0; i < counts.size(); ++i) frame[i] = to_count(counts[i] + noise(rng));
        } else {
            for (std::size_t i = 0; i < counts.size(); ++i) frame[i] = to_count(counts[i]);
        }
        out.stack.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace irmap
