#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "irmap/simulator.hpp"

using namespace irmap;

namespace {

struct Block {
    VoxelMesh vox = voxelize(make_box({-9.72, -9.72, 0.0}, {9.72, 9.72, 0.4}), VoxelPitch{}, {-9.72, -9.72});
    PixelGridFrame reg = [] {
        PixelGridFrame r;
        r.origin_pixel = {320, 240};
        return r;
    }();
    LayerMask mask(int layer) const { return layer_mask(vox, layer, reg); }
};

double distance(PointXY a, PointXY b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST_CASE("scan parameters") {
    const ScanParameters p;
    CHECK(p.orientation_deg(0) == 0.0);
    CHECK(p.orientation_deg(1) == doctest::Approx(66.7));
    CHECK(p.orientation_deg(3) == doctest::Approx(200.1 - 180.0));
    for (int l = 0; l < 40; ++l) {
        CHECK(p.orientation_deg(l) >= 0.0);
        CHECK(p.orientation_deg(l) < 180.0);
    }
    ScanParameters bad;
    bad.hatch_um = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scan path over the demo block") {
    const Block b;
    const LayerMask m0 = b.mask(0);
    REQUIRE(m0.size() == 54 * 54);
    const ScanPath p0 = generate_scan_path(m0, ScanParameters{}, 0);
    CHECK(p0.stripes == 2);
    CHECK(p0.hatch_mm == doctest::Approx(0.11));
    CHECK(p0.pixel_mm == doctest::Approx(0.36));
    // Hatching a 19.44 mm square at 110 um takes about 19.44^2 / 0.11 mm of track.
    CHECK(p0.length_mm == doctest::Approx(19.44 * 19.44 / 0.11).epsilon(0.03));
    CHECK(p0.duration_s == doctest::Approx(p0.length_mm / 960.0).epsilon(1e-9));

    // Time is monotone; along a hatch line the speed is the scan speed, and
    // moves to the next line or stripe take no time.
    const Mask inside = m0.to_mask();
    for (std::size_t n = 1; n < p0.samples.size(); ++n) {
        const auto& a = p0.samples[n - 1];
        const auto& c = p0.samples[n];
        CHECK(c.time_s >= a.time_s);
        const double dt = c.time_s - a.time_s;
        const double mm = distance(a.pos, c.pos) * p0.pixel_mm;
        if (mm < 0.5 * p0.hatch_mm) CHECK(mm / dt == doctest::Approx(960.0).epsilon(0.05));
    }
    for (const auto& s : p0.samples) {
        const int x = static_cast<int>(std::lround(s.pos.x)), y = static_cast<int>(std::lround(s.pos.y));
        CHECK(inside.contains(x, y));
    }
    // One frame period at 30 fps covers 32 mm of hatched track.
    double track_mm = 0.0;
    for (std::size_t n = 1; n < p0.samples.size() && p0.samples[n].time_s <= 1.0 / 30.0; ++n)
        if (p0.samples[n].time_s > p0.samples[n - 1].time_s)
            track_mm += distance(p0.samples[n - 1].pos, p0.samples[n].pos) * p0.pixel_mm;
    CHECK(track_mm == doctest::Approx(32.0).epsilon(0.01));

    const ScanPath p1 = generate_scan_path(b.mask(1), ScanParameters{}, 1);
    CHECK(p1.orientation_deg - p0.orientation_deg == doctest::Approx(66.7));
    CHECK(p1.layer == 1);
    CHECK(generate_scan_path(m0, ScanParameters{}, 0).samples.size() == p0.samples.size());
}

TEST_CASE("rendering") {
    const Block b;
    const CalibrationProfile profile;
    const LayerMask m = b.mask(0);

    SUBCASE("empty path leaves the platform at ambient") {
        ScanPath empty;
        RenderOptions opt;
        opt.width = 64;
        opt.height = 48;
        PixelGridFrame reg;
        reg.origin_pixel = {32, 24};
        const LayerMask none{0, {}, {}, reg};
        const RenderedLayer r = render_frames(empty, none, ThermalParams{}, {}, Homography(), opt, profile);
        const auto expected = static_cast<std::uint16_t>(std::lround(forward_counts(80.0, 0.63, profile)));
        REQUIRE(r.stack.frame_count() >= opt.prescan_frames);
        for (const auto& f : r.stack.frames)
            for (auto c : f.values()) CHECK(c == expected);
        for (auto s : r.truth.true_scan_order.values()) CHECK(s == -1);
    }

    SUBCASE("deterministic in the seed and consistent with its truth") {
        const ScanPath path = generate_scan_path(m, ScanParameters{}, 0);
        RenderOptions opt;
        opt.noise_sigma_counts = 0.01 * camera_span_counts(profile);
        opt.seed = 99;
        const ThermalParams th;
        const RenderedLayer a = render_frames(path, m, th, {}, Homography(), opt, profile);
        const RenderedLayer c = render_frames(path, m, th, {}, Homography(), opt, profile);
        CHECK(a.stack.frames == c.stack.frames);
        opt.seed = 100;
        const RenderedLayer d = render_frames(path, m, th, {}, Homography(), opt, profile);
        CHECK_FALSE(a.stack.frames == d.stack.frames);

        const int expected_frames = opt.prescan_frames + static_cast<int>(std::ceil(path.duration_s * opt.fps)) + opt.cooldown_frames;
        CHECK(std::abs(a.stack.frame_count() - expected_frames) <= 1);
        CHECK(a.truth.first_scan_frame == opt.prescan_frames);

        // Truth marks a pixel scanned once its rise crosses the activity level;
        // a few part corners fall short of it.
        const Mask inside = m.to_mask();
        std::size_t scanned = 0;
        for (int y = 0; y < inside.height(); ++y)
            for (int x = 0; x < inside.width(); ++x) {
                const int s = a.truth.true_scan_order(x, y);
                if (s < 0) continue;
                CHECK(inside(x, y) == 1);
                CHECK(s >= opt.prescan_frames);
                CHECK(s < a.stack.frame_count());
                ++scanned;
            }
        CHECK(scanned >= 0.99 * static_cast<double>(m.size()));
        for (int f = 0; f < opt.prescan_frames; ++f)
            for (auto cnt : a.stack.frames[static_cast<std::size_t>(f)].values())
                CHECK(cnt < FeatureParams{}.activity_counts(profile));
    }

    SUBCASE("spatter events") {
        const int last = 20;
        const auto events = schedule_spatters(m, 12, 5, last, 250.0, 0.05, 7, 640, 480);
        const auto again = schedule_spatters(m, 12, 5, last, 250.0, 0.05, 7, 640, 480);
        REQUIRE(events.size() == 12);
        REQUIRE(again.size() == 12);
        for (std::size_t n = 0; n < events.size(); ++n) {
            CHECK(events[n].emit_frame == again[n].emit_frame);
            CHECK(events[n].landing == again[n].landing);
        }
        int lo_x = 640, hi_x = 0, lo_y = 480, hi_y = 0;
        for (const auto& p : m.pixels) {
            lo_x = std::min(lo_x, p.x);
            hi_x = std::max(hi_x, p.x);
            lo_y = std::min(lo_y, p.y);
            hi_y = std::max(hi_y, p.y);
        }
        for (const auto& e : events) {
            CHECK(e.emit_frame >= 5);
            CHECK(e.emit_frame <= last);
            const int dx = std::max({lo_x - e.landing.x, e.landing.x - hi_x, 0});
            const int dy = std::max({lo_y - e.landing.y, e.landing.y - hi_y, 0});
            const int ring = std::max(dx, dy);
            CHECK(ring >= 4);
            CHECK(ring <= 13);
        }
        ScanPath path = generate_scan_path(m, ScanParameters{}, 0);
        std::vector<SpatterEvent> bad{{1000, {10, 10}}};
        CHECK_THROWS_AS(render_frames(path, m, ThermalParams{}, bad, Homography(), RenderOptions{}, profile), Error);
        std::vector<SpatterEvent> wide{{5, {10, 10}, 250.0, 0.05, 9.0}};
        CHECK_THROWS_AS(render_frames(path, m, ThermalParams{}, wide, Homography(), RenderOptions{}, profile), Error);
    }
}

TEST_CASE("parameter validation and helpers") {
    ThermalParams th;
    th.footprint_px = 0.5;
    CHECK_THROWS_AS(th.validate(), Error);
    th.footprint_px = 8.0;
    CHECK_THROWS_AS(th.validate(), Error);
    ThermalParams ramp;
    ramp.ambient_gradient_c = 20.0;
    CHECK(ramp.ambient_at(0.0, 640) < ramp.ambient_at(639.0, 640));
    CHECK(ramp.ambient_at(639.0, 640) - ramp.ambient_at(0.0, 640) == doctest::Approx(20.0).epsilon(0.01));
    RenderOptions opt;
    opt.prescan_frames = 0;
    CHECK_THROWS_AS(opt.validate(), Error);
    const CalibrationProfile profile;
    CHECK(camera_span_counts(profile) > 0.0);
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(splitmix64(i));
    CHECK(seen.size() == 1000);
}
