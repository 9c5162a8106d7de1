#pragma once

// Slow, direct reference implementations used to check the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "irmap/geometry.hpp"
#include "irmap/grid.hpp"

namespace oracle {

inline int mirror(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

// Sampled Gaussian derivative taps of order 0..2 at offsets -r..r,
// normalized by their discrete moments.
inline std::vector<double> taps(double sigma, int order) {
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<long double> g;
    long double m0 = 0, m2 = 0, m4 = 0;
    for (int k = -r; k <= r; ++k) {
        const long double v = std::exp(-static_cast<long double>(k * k) / (2.0L * sigma * sigma));
        g.push_back(v);
        m0 += v;
        m2 += v * k * k;
        m4 += v * k * k * k * k;
    }
    std::vector<double> out;
    for (int k = -r; k <= r; ++k) {
        const long double v = g[static_cast<std::size_t>(k + r)];
        if (order == 0) out.push_back(static_cast<double>(v / m0));
        if (order == 1) out.push_back(static_cast<double>(k * v / m2));
        if (order == 2) {
            // t = (a k^2 + b) v with sum(t) = 0 and sum(k^2 t) = 2.
            const long double det = m2 * m2 - m4 * m0;
            const long double a = -2.0L * m0 / det, b = 2.0L * m2 / det;
            out.push_back(static_cast<double>((a * k * k + b) * v));
        }
    }
    return out;
}

// Dense 2D correlation with the outer-product kernel kx(dx) * ky(dy).
inline irmap::Grid2D dense(const irmap::Grid2D& img, const std::vector<double>& kx, const std::vector<double>& ky) {
    const int rx = static_cast<int>(kx.size() / 2), ry = static_cast<int>(ky.size() / 2);
    irmap::Grid2D out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            long double acc = 0;
            for (int dy = -ry; dy <= ry; ++dy)
                for (int dx = -rx; dx <= rx; ++dx)
                    acc += static_cast<long double>(kx[static_cast<std::size_t>(dx + rx)]) *
                           ky[static_cast<std::size_t>(dy + ry)] *
                           img(mirror(x + dx, img.width()), mirror(y + dy, img.height()));
            out(x, y) = static_cast<double>(acc);
        }
    return out;
}

inline irmap::Grid2D blur(const irmap::Grid2D& img, double s) { return dense(img, taps(s, 0), taps(s, 0)); }

inline irmap::Grid2D laplace(const irmap::Grid2D& img, double s) {
    auto a = dense(img, taps(s, 2), taps(s, 0));
    const auto b = dense(img, taps(s, 0), taps(s, 2));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline irmap::Grid2D gradient(const irmap::Grid2D& img, double s) {
    auto a = dense(img, taps(s, 1), taps(s, 0));
    const auto b = dense(img, taps(s, 0), taps(s, 1));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::sqrt(a[i] * a[i] + b[i] * b[i]);
    return a;
}

// Exhaustive two-class split over 256 bins: tries every threshold bin and
// keeps the lowest one attaining the largest between-class variance.
inline int otsu_bin(const std::vector<double>& values) {
    double lo = values[0], hi = values[0];
    for (double v : values) lo = std::min(lo, v), hi = std::max(hi, v);
    std::array<long double, 256> hist{};
    for (double v : values) {
        int b = static_cast<int>(std::floor((v - lo) * 256.0 / (hi - lo)));
        hist[static_cast<std::size_t>(std::clamp(b, 0, 255))] += 1;
    }
    const long double n = static_cast<long double>(values.size());
    std::vector<long double> score(256, -1);
    for (int t = 1; t < 256; ++t) {
        long double n0 = 0, s0 = 0, s1 = 0;
        for (int b = 0; b < 256; ++b) {
            const long double c = hist[static_cast<std::size_t>(b)];
            if (b < t) {
                n0 += c;
                s0 += b * c;
            } else {
                s1 += b * c;
            }
        }
        const long double n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const long double gap = s0 / n0 - s1 / n1;
        score[static_cast<std::size_t>(t)] = n0 * n1 * gap * gap;
    }
    long double best = -1;
    for (long double s : score) best = std::max(best, s);
    for (int t = 1; t < 256; ++t)
        if (score[static_cast<std::size_t>(t)] >= best * (1 - 1e-15L)) return t;
    return 0;
}

// Number of clusters by recursive flood fill.
inline int flood_count(const irmap::Mask& m, int connectivity) {
    irmap::Mask seen(m.width(), m.height(), 0);
    int count = 0;
    auto fill = [&](auto&& self, int x, int y) -> void {
        if (!m.contains(x, y) || !m(x, y) || seen(x, y)) return;
        seen(x, y) = 1;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if ((dx || dy) && (connectivity == 8 || dx == 0 || dy == 0)) self(self, x + dx, y + dy);
    };
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(x, y) && !seen(x, y)) {
                ++count;
                fill(fill, x, y);
            }
    return count;
}

inline irmap::Grid2D random_grid(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    irmap::Grid2D g(w, h);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

inline irmap::Mask random_mask(std::mt19937_64& rng, int w, int h, double p) {
    std::bernoulli_distribution b(p);
    irmap::Mask m(w, h, 0);
    for (auto& v : m.values()) v = b(rng) ? 1 : 0;
    return m;
}

// Volume of a closed mesh by point sampling: for each (y, z) sample row the
// +x crossings are found directly and the x samples between pairs counted.
inline double sampled_volume(const irmap::TriangleMesh& mesh, double dx, double dy, double dz) {
    const auto bb = mesh.bounds();
    std::size_t inside = 0;
    std::vector<double> xs;
    for (double z = bb.min.z + dz / 2; z < bb.max.z; z += dz)
        for (double y = bb.min.y + dy / 2; y < bb.max.y; y += dy) {
            xs.clear();
            for (const auto& t : mesh.triangles) {
                const auto& [a, b, c] = t.v;
                if (std::max({a.y, b.y, c.y}) < y || std::min({a.y, b.y, c.y}) > y) continue;
                if (std::max({a.z, b.z, c.z}) < z || std::min({a.z, b.z, c.z}) > z) continue;
                // Barycentric coordinates of (y, z) in the triangle's yz projection.
                const double d = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
                if (d == 0.0) continue;
                const double u = ((y - a.y) * (c.z - a.z) - (c.y - a.y) * (z - a.z)) / d;
                const double v = ((b.y - a.y) * (z - a.z) - (y - a.y) * (b.z - a.z)) / d;
                if (u < 0 || v < 0 || u + v > 1) continue;
                xs.push_back(a.x + u * (b.x - a.x) + v * (c.x - a.x));
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
                const double lo = std::ceil((xs[k] - bb.min.x) / dx - 0.5);
                const double hi = std::floor((xs[k + 1] - bb.min.x) / dx - 0.5);
                if (hi >= lo) inside += static_cast<std::size_t>(hi - lo + 1);
            }
        }
    return static_cast<double>(inside) * dx * dy * dz;
}

}  // namespace oracle
