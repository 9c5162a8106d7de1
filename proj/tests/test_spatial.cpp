#include <doctest.h>

#include <random>

#include "irmap/spatial.hpp"
#include "oracles.hpp"

using namespace irmap;

namespace {

// Raw camera pixels to plate mm: roughly 0.36 mm/px with a mild tilt.
Homography random_image_to_world(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double s = 0.36;
    return Homography(Homography::Matrix{{{s * (1 + 0.05 * u(rng)), s * 0.05 * u(rng), -115.0 + 5 * u(rng)},
                                          {s * 0.05 * u(rng), s * (1 + 0.05 * u(rng)), -86.0 + 5 * u(rng)},
                                          {1e-4 * u(rng), 1e-4 * u(rng), 1.0}}});
}

double max_entry_diff(const Homography& a, const Homography& b) {
    double m = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(a(r, c) - b(r, c)));
    return m;
}

}  // namespace

TEST_CASE("homography construction") {
    CHECK(Homography().is_identity());
    const Homography h(Homography::Matrix{{{2, 0, 4}, {0, 2, 6}, {0, 0, 2}}});
    CHECK(h(2, 2) == 1.0);
    CHECK(h(0, 2) == 2.0);
    CHECK_THROWS_AS(Homography(Homography::Matrix{{{1, 2, 0}, {2, 4, 0}, {0, 0, 1}}}), Error);
    std::mt19937_64 rng(8);
    const Homography a = random_image_to_world(rng), b = random_image_to_world(rng);
    const PointXY p{123.0, 45.0};
    const PointXY composed = apply_homography(p, a.compose(b));
    const PointXY chained = apply_homography(apply_homography(p, b), a);
    CHECK(composed.x == doctest::Approx(chained.x).epsilon(1e-12));
    CHECK(composed.y == doctest::Approx(chained.y).epsilon(1e-12));
    CHECK(max_entry_diff(a.compose(a.inverse()), Homography()) < 1e-12);
}

TEST_CASE("estimate_homography") {
    SUBCASE("identity correspondences") {
        std::vector<PointCorrespondence> c;
        for (auto p : outer_square_corners()) c.push_back({p, p});
        const auto est = estimate_homography(c);
        CHECK(max_entry_diff(est.h, Homography()) < 1e-12);
        CHECK(est.max_residual < 1e-12);
    }
    SUBCASE("exact recovery from four and from many points") {
        std::mt19937_64 rng(123);
        std::uniform_real_distribution<double> px(20.0, 620.0), py(20.0, 460.0);
        for (int n = 0; n < 100; ++n) {
            const Homography truth = random_image_to_world(rng);
            const std::vector<PointXY> quad{{100, 80}, {540, 90}, {530, 400}, {110, 390}};
            std::vector<PointCorrespondence> four, many;
            for (auto q : quad) four.push_back({q, apply_homography(q, truth)});
            for (int k = 0; k < 9; ++k) {
                const PointXY q{px(rng), py(rng)};
                many.push_back({q, apply_homography(q, truth)});
            }
            CHECK(max_entry_diff(estimate_homography(four).h, truth) < 1e-9);
            CHECK(max_entry_diff(estimate_homography(many).h, truth) < 1e-9);
        }
    }
    SUBCASE("twelve noisy markers") {
        std::mt19937_64 rng(77);
        std::normal_distribution<double> noise(0.0, 0.5);
        const Homography truth = random_image_to_world(rng);
        const Homography world_to_image = truth.inverse();
        std::vector<PointCorrespondence> c;
        for (auto w : plate_markers()) {
            const PointXY q = apply_homography(w, world_to_image);
            c.push_back({{q.x + noise(rng), q.y + noise(rng)}, w});
        }
        const auto est = estimate_homography(c);
        double worst_px = 0.0;
        for (auto w : plate_markers()) {
            const PointXY back = apply_homography(apply_homography(w, world_to_image), est.h);
            worst_px = std::max(worst_px, std::hypot(back.x - w.x, back.y - w.y) / 0.36);
        }
        CHECK(worst_px <= 1.0);
    }
    SUBCASE("degenerate input") {
        std::vector<PointCorrespondence> c{{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}, {{2, 2}, {2, 2}}, {{0, 5}, {0, 5}}};
        try {
            estimate_homography(c);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Degeneracy);
        }
        c.pop_back();
        CHECK_THROWS_AS(estimate_homography(c), Error);
    }
}

TEST_CASE("apply_homography") {
    CHECK(apply_homography({3.5, -2.0}, Homography()).x == 3.5);
    const PointXY t = apply_homography({10.0, 20.0}, Homography::translation(5.0, -3.0));
    CHECK(t.x == 15.0);
    CHECK(t.y == 17.0);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 600.0);
    for (int n = 0; n < 50; ++n) {
        const Homography h = random_image_to_world(rng);
        const PointXY p{u(rng), u(rng)};
        const auto& m = h.matrix();
        const double w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        const PointXY q = apply_homography(p, h);
        CHECK(q.x == doctest::Approx((m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w).epsilon(1e-14));
        CHECK(q.y == doctest::Approx((m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w).epsilon(1e-14));
        const PointXY back = apply_homography(q, h.inverse());
        CHECK(std::abs(back.x - p.x) < 1e-9);
        CHECK(std::abs(back.y - p.y) < 1e-9);
    }
    const Homography persp(Homography::Matrix{{{1, 0, 0}, {0, 1, 0}, {0.01, 0, 1}}});
    try {
        apply_homography({-100.0, 0.0}, persp);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Horizon);
    }
}

TEST_CASE("warp_frame") {
    std::mt19937_64 rng(5);
    SUBCASE("identity") {
        const Grid2D f = oracle::random_grid(rng, 20, 15);
        const WarpedFrame w = warp_frame(f, Homography(), 20, 15);
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(w.valid[i] == 1);
            CHECK(std::abs(w.values[i] - f[i]) <= 1e-9);
        }
    }
    SUBCASE("constant frame stays constant where covered") {
        const Homography h(Homography::Matrix{{{0.9, 0.1, 4}, {-0.05, 1.1, -3}, {2e-4, 1e-4, 1}}});
        const WarpedFrame w = warp_frame(Grid2D(64, 48, 321.0), h, 64, 48);
        std::size_t covered = 0;
        for (std::size_t i = 0; i < w.values.size(); ++i)
            if (w.valid[i]) {
                ++covered;
                CHECK(std::abs(w.values[i] - 321.0) < 1e-9);
            } else {
                CHECK(w.values[i] == 0.0);
            }
        CHECK(covered > 2000);
        CHECK(covered < 64 * 48);
    }
    SUBCASE("round trip on a smooth field") {
        Grid2D f(96, 72);
        for (int y = 0; y < 72; ++y)
            for (int x = 0; x < 96; ++x) f(x, y) = 100.0 + 50.0 * std::sin(x / 9.0) * std::cos(y / 11.0);
        const Homography h(Homography::Matrix{{{1.02, 0.03, 2.5}, {-0.02, 0.98, 1.5}, {1e-4, -5e-5, 1}}});
        const WarpedFrame fwd = warp_frame(f, h, 96, 72);
        const WarpedFrame back = warp_frame(fwd.values, h.inverse(), 96, 72);
        for (int y = 8; y < 64; ++y)
            for (int x = 8; x < 88; ++x) CHECK(std::abs(back.values(x, y) - f(x, y)) <= 0.02 * 100.0);
    }
}

TEST_CASE("pixel pitch") {
    CHECK(estimate_pixel_pitch({0, 0}, {416.667, 0}, 150.0) == doctest::Approx(360.0).epsilon(1e-5));
    CHECK(estimate_pixel_pitch({10, 10}, {10, 148.889}, 50.0) == doctest::Approx(360.0).epsilon(1e-5));
    CHECK(estimate_pixel_pitch({0, 0}, {10, 0}, 10.0) == doctest::Approx(1000.0));
    // Rigid rotation of the pair leaves the pitch unchanged.
    for (double a = 0.0; a < 6.3; a += 0.7) {
        const PointXY p1{100.0 + 3 * std::cos(a), 50.0}, p2{p1.x + 200.0 * std::cos(a), p1.y + 200.0 * std::sin(a)};
        CHECK(estimate_pixel_pitch(p1, p2, 72.0) == doctest::Approx(360.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(estimate_pixel_pitch({1, 1}, {1, 1}, 10.0), Error);
}

TEST_CASE("plate layout and registration frame") {
    const auto markers = plate_markers();
    CHECK(markers.size() == 12);
    CHECK(outer_square_corners().size() == 4);
    PixelGridFrame reg;
    reg.origin_pixel = {320, 240};
    const PointXY p = reg.to_pixel({0.36, -0.72});
    CHECK(p.x == doctest::Approx(321.0));
    CHECK(p.y == doctest::Approx(238.0));
    reg.origin_pixel = {700, 0};
    CHECK_THROWS_AS(reg.validate(), Error);
}

TEST_CASE("correspondence file") {
    const auto c = parse_correspondences("# plate\n-75,-75, 101.5, 80.25\n75,-75,540,82 # corner\n\n");
    REQUIRE(c.size() == 2);
    CHECK(c[0].world.x == -75.0);
    CHECK(c[0].image.x == 101.5);
    CHECK(c[0].image.y == 80.25);
    try {
        parse_correspondences("1,2,3,4\n1,2,x,4\n");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}
