#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "irmap/features.hpp"

using namespace irmap;

namespace {

const CalibrationProfile kProfile;

std::uint16_t counts_at(double t_c, double eps) {
    return static_cast<std::uint16_t>(std::clamp(std::lround(forward_counts(t_c, eps, kProfile)), 0L, 65535L));
}

// Stack of `frames` frames whose temperature at (x, y, f) comes from `temp`.
LayerStack make_stack(int w, int h, int frames, double eps, const std::function<double(int, int, int)>& temp) {
    LayerStack s;
    for (int f = 0; f < frames; ++f) {
        CountFrame frame(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) frame(x, y) = counts_at(temp(x, y, f), eps);
        s.frames.push_back(std::move(frame));
    }
    return s;
}

double hot_spot(int x, int y, double cx, double cy, double peak, double sigma) {
    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return peak * std::exp(-0.5 * r2 / (sigma * sigma));
}

}  // namespace

TEST_CASE("feature identifiers") {
    CHECK(kAllFeatures.size() == 11);
    for (FeatureId id : kAllFeatures) {
        CHECK(feature_from_name(feature_name(id)) == id);
        CHECK(std::string(feature_units(id)).size() > 0);
    }
    CHECK_FALSE(feature_from_name("porosity").has_value());
}

TEST_CASE("interpass") {
    SUBCASE("uniform platform temperature") {
        const LayerStack s = make_stack(8, 6, 5, 0.63, [](int, int, int) { return 80.0; });
        const FeatureMap m = interpass(s, kProfile);
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            CHECK(m.valid(i));
            CHECK(std::abs(m.grid[i] - 80.0) < 0.1);
        }
    }
    SUBCASE("single pre-scan frame") {
        const LayerStack s = make_stack(8, 6, 4, 0.63, [](int x, int, int f) {
            return f == 0 ? 90.0 + x : (x == 3 ? 1800.0 : 120.0);
        });
        const FeatureMap m = interpass(s, kProfile);
        const CountTable powder(0.63, kProfile);
        for (int x = 0; x < 8; ++x) CHECK(m.grid(x, 2) == powder(s.frames[0](x, 2)));
    }
    SUBCASE("pre-scan window is capped") {
        const LayerStack s = make_stack(4, 4, 8, 0.63, [](int, int, int f) { return f < 3 ? 100.0 : 200.0; });
        FeatureParams p;
        p.activity_threshold = 60000.0;
        CHECK(std::abs(interpass(s, kProfile, p).grid(1, 1) - 100.0) < 0.1);
    }
    SUBCASE("laser already active") {
        const LayerStack s = make_stack(4, 4, 3, 0.63, [](int x, int, int) { return x == 0 ? 1800.0 : 80.0; });
        try {
            interpass(s, kProfile);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NoPrescan);
        }
    }
}

TEST_CASE("heat intensity and scan order") {
    const LayerStack s = make_stack(6, 4, 30, 0.63, [](int x, int y, int f) {
        if (x == 2 && y == 1) return f == 17 ? 1700.0 : 100.0;
        if (x == 4 && y == 2) return f == 20 || f == 21 ? 1500.0 : 100.0;
        return 100.0;
    });
    const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
    CHECK(order.grid(2, 1) == 17);
    CHECK(heat.grid(2, 1) == s.frames[17](2, 1));
    CHECK(order.grid(4, 2) == 20);
    CHECK_FALSE(order.valid(order.grid.index(0, 0)));
    CHECK(order.grid(0, 0) == kUnscanned);
    CHECK(heat.grid(0, 0) == kUnscanned);
    // Every scanned pixel's order indexes a frame holding its intensity.
    for (std::size_t i = 0; i < order.grid.size(); ++i)
        if (order.valid(i)) CHECK(s.frames[static_cast<std::size_t>(order.grid[i])][i] == heat.grid[i]);
}

TEST_CASE("pre-deposition temperatures") {
    SUBCASE("constant background reads the constant") {
        const LayerStack s = make_stack(5, 5, 40, 0.63, [](int x, int y, int f) {
            return (x + y == f - 15) ? 1700.0 : 150.0;
        });
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
        const FeatureMap local = local_predeposition(s, order, kProfile);
        const FeatureMap maxp = max_predeposition(s, order, kProfile);
        const CountTable powder(0.63, kProfile);
        for (std::size_t i = 0; i < order.grid.size(); ++i) {
            REQUIRE(order.valid(i));
            CHECK(local.validity[i] == Validity::Valid);
            CHECK(local.grid[i] == powder(counts_at(150.0, 0.63)));
            CHECK(maxp.grid[i] == local.grid[i]);
        }
    }
    SUBCASE("early scan is clamped to frame 0") {
        const LayerStack s = make_stack(3, 3, 20, 0.63, [](int x, int, int f) {
            if (x == 1) return f == 4 ? 1700.0 : 200.0 - f;
            return 200.0 - f;
        });
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
        const FeatureMap local = local_predeposition(s, order, kProfile);
        const std::size_t i = local.grid.index(1, 1);
        CHECK(order.grid[i] == 4);
        CHECK(local.validity[i] == Validity::Clamped);
        CHECK(local.grid[i] == CountTable(0.63, kProfile)(s.frames[0][i]));
        CHECK_FALSE(local.valid(local.grid.index(0, 0)));
    }
    SUBCASE("monotone cooling keeps the frame-0 maximum") {
        const LayerStack s = make_stack(3, 3, 50, 0.63, [](int x, int, int f) {
            if (x == 1) return f == 40 ? 1700.0 : 300.0 - 2.0 * f;
            return 300.0 - 2.0 * f;
        });
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
        const FeatureMap maxp = max_predeposition(s, order, kProfile);
        CHECK(std::abs(maxp.grid(1, 1) - 300.0) < 0.1);
    }
    SUBCASE("spike before the window is seen only by the maximum") {
        const LayerStack s = make_stack(3, 3, 50, 0.63, [](int x, int, int f) {
            if (x != 1) return 120.0;
            if (f == 40) return 1700.0;
            if (f >= 12) return 120.0 + 400.0 * std::exp(-(f - 12) / 1.5);
            return 120.0;
        });
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
        const FeatureMap local = local_predeposition(s, order, kProfile);
        const FeatureMap maxp = max_predeposition(s, order, kProfile);
        CHECK(order.grid(1, 1) == 40);
        CHECK(std::abs(maxp.grid(1, 1) - 520.0) < 0.5);
        CHECK(std::abs(local.grid(1, 1) - 120.0) < 0.5);
    }
}

TEST_CASE("spatter frame filter") {
    SUBCASE("cold uniform frame") {
        const SpatterFrameResult r = spatter_frame_filter(Grid2D(64, 48, 80.0));
        CHECK(r.candidates.count == 0);
    }
    // Melt pool at (110, 60) trailing a cooling track back to x = 30, plus
    // three hot particles well away from both.
    auto scene = [](bool dot_on_track) {
        Grid2D t(160, 120, 80.0);
        for (int y = 0; y < 120; ++y)
            for (int x = 0; x < 160; ++x) {
                double v = 80.0 + hot_spot(x, y, 110, 60, 1400, 2.0);
                if (x >= 30 && x <= 110) v += (150.0 + 5.0 * (x - 30)) * std::exp(-0.5 * (y - 60) * (y - 60) / 1.2);
                for (auto [cx, cy] : {std::pair{40, 20}, {130, 100}, {145, 25}}) v += hot_spot(x, y, cx, cy, 250, 0.7);
                if (dot_on_track) v += hot_spot(x, y, 70, 61, 250, 0.7);
                t(x, y) = v;
            }
        return t;
    };
    SUBCASE("three particles beside the track") {
        const SpatterFrameResult r = spatter_frame_filter(scene(false));
        CHECK(r.candidates.count == 3);
        // The hot end of the track and the melt pool fall in the high-gradient class.
        for (int y = 56; y <= 64; ++y)
            for (int x = 80; x <= 112; x += 4) CHECK(r.scan_mask(x, y) == 1);
        for (std::size_t i = 0; i < r.scan_mask.size(); ++i)
            if (r.candidates.labels[i] > 0) CHECK(r.scan_mask[i] == 0);
        for (auto [cx, cy] : {std::pair{40, 20}, {130, 100}, {145, 25}}) CHECK(r.candidates.labels(cx, cy) > 0);
    }
    SUBCASE("particle inside the track mask is suppressed") {
        const SpatterFrameResult r = spatter_frame_filter(scene(true));
        CHECK(r.candidates.count == 3);
        CHECK(r.candidates.labels(70, 61) == 0);
    }
}

TEST_CASE("spatter layer dedup and bookkeeping") {
    // Laser crosses row 30 one pixel per frame; a particle lands at frame 12
    // and stays hot for six frames.
    const LayerStack s = make_stack(96, 64, 40, 0.63, [](int x, int y, int f) {
        double v = 90.0;
        const int lx = 20 + f;
        if (f >= 3) v += hot_spot(x, y, lx, 30, 1500, 1.0);
        if (f >= 12 && f < 18) v += hot_spot(x, y, 60, 50, 300 - 20.0 * (f - 12), 0.7);
        return v;
    });
    const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
    const SpatterLayerResult r = spatter_layer(s, order, kProfile);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].frame == 12);
    CHECK(std::abs(r.records[0].centroid.x - 60) <= 1.0);
    CHECK(std::abs(r.records[0].centroid.y - 50) <= 1.0);
    double gen = 0.0, land_clusters = 0.0;
    for (std::size_t i = 0; i < r.generation.grid.size(); ++i)
        if (order.valid(i) && order.grid[i] == 12) gen = std::max(gen, r.generation.grid[i]);
    CHECK(gen == 1.0);
    for (const auto& rec : r.records) {
        CHECK(rec.size == rec.landing_pixels.size());
        for (const auto& p : rec.landing_pixels) land_clusters += 1.0 / static_cast<double>(rec.size) * r.landing.grid(p.x, p.y);
        for (const auto& p : rec.source_pixels) CHECK(order.grid(p.x, p.y) == rec.frame);
    }
    CHECK(land_clusters == doctest::Approx(1.0));

    const LayerStack quiet = make_stack(96, 64, 40, 0.63, [](int x, int y, int f) {
        return 90.0 + (f >= 3 ? hot_spot(x, y, 20 + f, 30, 1500, 1.0) : 0.0);
    });
    const auto [qh, qo] = heat_intensity_and_scan_order(quiet, kProfile);
    const SpatterLayerResult q = spatter_layer(quiet, qo, kProfile);
    CHECK(q.records.empty());
    for (double v : q.generation.grid.values()) CHECK(v == 0.0);
    for (double v : q.landing.grid.values()) CHECK(v == 0.0);
}

TEST_CASE("melt pool area") {
    // Each frame holds a 2x2 melt pool at a new place.
    const LayerStack s = make_stack(40, 10, 20, 0.63, [](int x, int y, int f) {
        const int x0 = 2 * f;
        return (f >= 2 && x >= x0 && x < x0 + 2 && y >= 4 && y < 6) ? 1700.0 : 100.0;
    });
    const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile);
    const FeatureParams p;
    const FeatureMap area = melt_pool_area(s, order, p.melt_counts(kProfile));
    for (std::size_t i = 0; i < area.grid.size(); ++i)
        if (order.valid(i)) CHECK(area.grid[i] == 4.0);
    CHECK(area.grid(0, 0) == kUnscanned);

    const FeatureMap none = melt_pool_area(s, order, 65535.0);
    for (std::size_t i = 0; i < none.grid.size(); ++i)
        if (order.valid(i)) CHECK(none.grid[i] == 0.0);
}

TEST_CASE("cooling rate") {
    const double tau_c = 0.5, delta = 500.0, ambient = 80.0, fps = 30.0;
    const int scan = 10;
    auto decay = [&](int x, int, int f) {
        const int s = scan + x;
        if (f < s) return ambient;
        return ambient + delta * std::exp(-(f - s) / (fps * tau_c));
    };
    FeatureParams p;
    p.activity_threshold = forward_counts(400.0, 0.21, kProfile);
    SUBCASE("analytic exponential decay") {
        const LayerStack s = make_stack(6, 2, 60, 0.21, decay);
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile, p);
        const FeatureMap rate = cooling_rate(s, order, kProfile, p);
        const double expected = delta * (1.0 - std::exp(-1.0 / tau_c));
        for (int x = 0; x < 6; ++x) {
            REQUIRE(order.grid(x, 0) == scan + x);
            CHECK(std::abs(rate.grid(x, 0) - expected) <= 0.005 * expected);
        }
    }
    SUBCASE("windows past the last frame are invalid, not zero") {
        const LayerStack s = make_stack(6, 2, 44, 0.21, decay);
        const auto [heat, order] = heat_intensity_and_scan_order(s, kProfile, p);
        const FeatureMap rate = cooling_rate(s, order, kProfile, p);
        for (int x = 0; x < 6; ++x) {
            const bool complete = scan + x + 30 <= 43;
            CHECK(rate.valid(rate.grid.index(x, 0)) == complete);
            if (!complete) CHECK(std::isnan(rate.grid(x, 0)));
        }
    }
    SUBCASE("a held temperature gives zero") {
        FeatureParams q;
        q.activity_threshold = forward_counts(600.0, 0.21, kProfile);
        const LayerStack steady = make_stack(4, 2, 50, 0.21, [](int, int, int) { return 900.0; });
        const auto [sh, so] = heat_intensity_and_scan_order(steady, kProfile, q);
        const FeatureMap rate = cooling_rate(steady, so, kProfile, q);
        for (std::size_t i = 0; i < rate.grid.size(); ++i) {
            CHECK(so.grid[i] == 0);
            CHECK(rate.grid[i] == 0.0);
        }
    }
}

TEST_CASE("laplacian anomaly maps") {
    SUBCASE("smooth interpass field") {
        FeatureMap ip{FeatureId::Interpass, 0, Grid2D(40, 40), Grid<Validity>(40, 40, Validity::Valid), kFloorSentinelC};
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) ip.grid(x, y) = 80.0 + 0.5 * x + 0.25 * y;
        const FeatureMap lap = interpass_laplacian(ip);
        // Mirrored borders bend a ramp, so only the interior is flat.
        for (int y = 5; y < 35; ++y)
            for (int x = 5; x < 35; ++x) CHECK(std::abs(lap.grid(x, y)) < 1e-9);
        FeatureMap shifted = ip;
        for (auto& v : shifted.grid.values()) v += 100.0;
        const FeatureMap lap2 = interpass_laplacian(shifted);
        for (std::size_t i = 0; i < lap.grid.size(); ++i) CHECK(std::abs(lap2.grid[i] - lap.grid[i]) < 1e-9);
    }
    SUBCASE("as-printed: uniform frame and constant offset") {
        Grid2D a(32, 32), b(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double t = 200.0 + 30.0 * std::sin(x / 3.0) + 10.0 * y;
                a(x, y) = forward_counts(t, 0.21, kProfile);
                b(x, y) = forward_counts(t + 50.0, 0.21, kProfile);
            }
        const FeatureMap la = asprinted_laplacian(a, kProfile), lb = asprinted_laplacian(b, kProfile);
        for (std::size_t i = 0; i < la.grid.size(); ++i) CHECK(std::abs(la.grid[i] - lb.grid[i]) <= 1e-6);
        const FeatureMap flat = asprinted_laplacian(Grid2D(16, 16, forward_counts(250.0, 0.21, kProfile)), kProfile);
        for (double v : flat.grid.values()) CHECK(std::abs(v) < 1e-9);
    }
}

TEST_CASE("extract_layer returns every feature deterministically") {
    const LayerStack s = make_stack(48, 32, 40, 0.63, [](int x, int y, int f) {
        return 90.0 + (f >= 3 ? hot_spot(x, y, 5 + f, 16, 1500, 1.0) : 0.0);
    });
    const LayerFeatures a = extract_layer(s, kProfile, {});
    const LayerFeatures b = extract_layer(s, kProfile, {});
    REQUIRE(a.maps.size() == kAllFeatures.size());
    for (std::size_t n = 0; n < kAllFeatures.size(); ++n) {
        CHECK(a.maps[n].id == kAllFeatures[n]);
        CHECK(&a.get(kAllFeatures[n]) == &a.maps[n]);
        for (std::size_t i = 0; i < a.maps[n].grid.size(); ++i) {
            const double u = a.maps[n].grid[i], v = b.maps[n].grid[i];
            CHECK(((std::isnan(u) && std::isnan(v)) || u == v));
        }
    }
    const auto& local = a.get(FeatureId::LocalPredeposition);
    const auto& maxp = a.get(FeatureId::MaxPredeposition);
    for (std::size_t i = 0; i < local.grid.size(); ++i)
        if (local.valid(i) && maxp.valid(i)) CHECK(maxp.grid[i] >= local.grid[i]);
}
