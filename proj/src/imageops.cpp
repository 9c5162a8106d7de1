#include "irmap/imageops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace irmap {

namespace {

void check_sigma(double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::Parameter,
            "sigma must be positive, got " + std::to_string(sigma));
}

// Horizontal pass: out(x, y) = sum_k in(x + k, y) * taps[k + r].
Grid2D correlate_rows(const Grid2D& in, std::span<const double> taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const int w = in.width();
    Grid2D out(w, in.height());
    std::vector<double> padded(static_cast<std::size_t>(w + 2 * r));
    for (int y = 0; y < in.height(); ++y) {
        auto src = in.row(y);
        for (int i = -r; i < w + r; ++i) padded[static_cast<std::size_t>(i + r)] = src[static_cast<std::size_t>(reflect101(i, w))];
        auto dst = out.row(y);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            const double* p = padded.data() + x;
            for (std::size_t k = 0; k < taps.size(); ++k) acc += p[k] * taps[k];
            dst[static_cast<std::size_t>(x)] = acc;
        }
    }
    return out;
}

// Vertical pass, accumulated row by row to stay cache friendly.
Grid2D correlate_cols(const Grid2D& in, std::span<const double> taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const int h = in.height();
    Grid2D out(in.width(), h);
    for (int y = 0; y < h; ++y) {
        auto dst = out.row(y);
        for (int k = -r; k <= r; ++k) {
            const double wk = taps[static_cast<std::size_t>(k + r)];
            auto src = in.row(reflect101(y + k, h));
            for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += wk * src[x];
        }
    }
    return out;
}

Grid2D separable(const Grid2D& img, std::span<const double> along_x, std::span<const double> along_y) {
    return correlate_cols(correlate_rows(img, along_x), along_y);
}

}  // namespace

int reflect101(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

int kernel_radius(double sigma) { return static_cast<int>(std::ceil(4.0 * sigma)); }

std::vector<double> gaussian_taps(double sigma, int order) {
    check_sigma(sigma);
    require(order >= 0 && order <= 2, ErrorKind::Parameter, "derivative order must be 0, 1 or 2");
    const int r = kernel_radius(sigma);
    std::vector<double> phi(static_cast<std::size_t>(2 * r + 1));
    double m0 = 0.0, m2 = 0.0, m4 = 0.0;
    for (int k = -r; k <= r; ++k) {
        const double v = std::exp(-0.5 * k * k / (sigma * sigma));
        phi[static_cast<std::size_t>(k + r)] = v;
        m0 += v;
        m2 += v * k * k;
        m4 += v * k * k * k * k;
    }
    std::vector<double> taps(phi.size());
    for (int k = -r; k <= r; ++k) {
        const double v = phi[static_cast<std::size_t>(k + r)];
        double t = 0.0;
        if (order == 0) {
            t = v / m0;
        } else if (order == 1) {
            t = k * v / m2;
        } else {
            const double s = m2 / m0;
            t = 2.0 * (k * k - s) * v / (m4 - s * m2);
        }
        taps[static_cast<std::size_t>(k + r)] = t;
    }
    return taps;
}

Grid2D gaussian_blur(const Grid2D& img, double sigma) {
    const auto g = gaussian_taps(sigma, 0);
    return separable(img, g, g);
}

Grid2D gaussian_gradient_magnitude(const Grid2D& img, double sigma) {
    const auto g = gaussian_taps(sigma, 0);
    const auto d = gaussian_taps(sigma, 1);
    Grid2D gx = separable(img, d, g);
    const Grid2D gy = separable(img, g, d);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = std::hypot(gx[i], gy[i]);
    return gx;
}

Grid2D gaussian_laplace(const Grid2D& img, double sigma) {
    const auto g = gaussian_taps(sigma, 0);
    const auto dd = gaussian_taps(sigma, 2);
    Grid2D out = separable(img, dd, g);
    const Grid2D yy = separable(img, g, dd);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += yy[i];
    return out;
}

Hessian gaussian_hessian(const Grid2D& img, double sigma) {
    const auto g = gaussian_taps(sigma, 0);
    const auto d = gaussian_taps(sigma, 1);
    const auto dd = gaussian_taps(sigma, 2);
    return {separable(img, dd, g), separable(img, g, dd), separable(img, d, d)};
}

int otsu_bin_of(double v, double lo, double hi) noexcept {
    const double b = std::floor((v - lo) * 256.0 / (hi - lo));
    if (b < 0.0) return 0;
    if (b > 255.0) return 255;
    return static_cast<int>(b);
}

OtsuSplit otsu_split(std::span<const double> values) {
    require(!values.empty(), ErrorKind::Parameter, "otsu on empty input");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    require(std::isfinite(lo) && std::isfinite(hi), ErrorKind::Parameter, "otsu input must be finite");
    if (!(hi > lo)) fail(ErrorKind::DegenerateHistogram, "all values fall in one histogram bin");

    std::array<std::int64_t, 256> hist{};
    for (double v : values) ++hist[static_cast<std::size_t>(otsu_bin_of(v, lo, hi))];

    // Bin indices stand in for values: the affine map to bin centres does not
    // move the argmax. Integer sums keep equal partitions bitwise tied.
    std::int64_t n = 0, s = 0;
    for (int b = 0; b < 256; ++b) {
        n += hist[static_cast<std::size_t>(b)];
        s += static_cast<std::int64_t>(b) * hist[static_cast<std::size_t>(b)];
    }
    // Scores are diff^2 / (n0 * n1) where diff = n0 * n1 * (mean gap) stays
    // below 64 n^2, so the 128-bit square is exact for n under ~5.4e8.
    require(n < 500'000'000, ErrorKind::Parameter, "otsu input too large for exact scoring");

    int best_t = 0;
    unsigned __int128 best_num = 0, best_den = 1;
    std::int64_t n0 = 0, s0 = 0;
    for (int t = 1; t < 256; ++t) {
        n0 += hist[static_cast<std::size_t>(t - 1)];
        s0 += static_cast<std::int64_t>(t - 1) * hist[static_cast<std::size_t>(t - 1)];
        const std::int64_t n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const __int128 diff = static_cast<__int128>(n) * s0 - static_cast<__int128>(n0) * s;
        const auto mag = static_cast<unsigned __int128>(diff < 0 ? -diff : diff);
        const unsigned __int128 num = mag * mag;
        const auto den = static_cast<unsigned __int128>(n0) * static_cast<unsigned __int128>(n1);
        const unsigned __int128 q = num / den, best_q = best_num / best_den;
        // Compare num/den against best_num/best_den without rounding.
        if (best_t == 0 || q > best_q || (q == best_q && (num % den) * best_den > (best_num % best_den) * den)) {
            best_t = t;
            best_num = num;
            best_den = den;
        }
    }
    if (best_t == 0) fail(ErrorKind::DegenerateHistogram, "all values fall in one histogram bin");
    return {best_t, lo + best_t * (hi - lo) / 256.0};
}

std::vector<double> otsu_thresholds(const Grid2D& img, int classes) {
    require(classes == 2, ErrorKind::Parameter, "only two-class Otsu is supported");
    return {otsu_split(img.values()).threshold};
}

namespace {

struct DisjointSet {
    std::vector<std::int32_t> parent;
    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[static_cast<std::size_t>(b)] = a;
        else parent[static_cast<std::size_t>(a)] = b;
    }
};

template <typename T>
LabelGrid label_impl(const Grid<T>& binary, int connectivity) {
    require(connectivity == 4 || connectivity == 8, ErrorKind::Parameter, "connectivity must be 4 or 8");
    const int w = binary.width(), h = binary.height();
    Grid<std::int32_t> prov(w, h, 0);
    DisjointSet sets;
    sets.make();  // slot 0 is background

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const T v = binary(x, y);
            require(v == T{0} || v == T{1}, ErrorKind::Parameter, "label_components input must be binary");
            if (v == T{0}) continue;
            std::int32_t label = 0;
            auto visit = [&](int nx, int ny) {
                if (!binary.contains(nx, ny)) return;
                const std::int32_t l = prov(nx, ny);
                if (l == 0) return;
                if (label == 0) label = l;
                else sets.unite(label, l);
            };
            visit(x - 1, y);
            visit(x, y - 1);
            if (connectivity == 8) {
                visit(x - 1, y - 1);
                visit(x + 1, y - 1);
            }
            prov(x, y) = label != 0 ? label : sets.make();
        }
    }

    // Renumber roots in raster order of first appearance.
    std::vector<std::int32_t> final_label(sets.parent.size(), 0);
    LabelGrid out{Grid<std::int32_t>(w, h, 0), 0};
    for (std::size_t i = 0; i < prov.size(); ++i) {
        if (prov[i] == 0) continue;
        const auto root = static_cast<std::size_t>(sets.find(prov[i]));
        if (final_label[root] == 0) final_label[root] = ++out.count;
        out.labels[i] = final_label[root];
    }
    return out;
}

}  // namespace

LabelGrid label_components(const Grid2D& binary, int connectivity) { return label_impl(binary, connectivity); }
LabelGrid label_components(const Mask& binary, int connectivity) { return label_impl(binary, connectivity); }

Mask dilate(const Mask& mask, int radius) {
    require(radius >= 0, ErrorKind::Parameter, "dilation radius must be non-negative");
    if (radius == 0) return mask;
    std::vector<PixelXY> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offsets.push_back({dx, dy});
    Mask out(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            for (const auto& o : offsets)
                if (out.contains(x + o.x, y + o.y)) out(x + o.x, y + o.y) = 1;
        }
    }
    return out;
}

ReductionState::ReductionState(int width, int height)
    : max_(width, height, -std::numeric_limits<double>::infinity()), argmax_(width, height, kNever) {}

template <typename T>
void ReductionState::fold_impl(std::span<const T> frame, int frame_idx) {
    require(frame.size() == max_.size(), ErrorKind::Parameter, "frame dimensions do not match reduction state");
    require(frame_idx > last_idx_, ErrorKind::Parameter, "frame indices must increase strictly");
    last_idx_ = frame_idx;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const double v = static_cast<double>(frame[i]);
        if (v > max_[i]) {
            max_[i] = v;
            argmax_[i] = frame_idx;
        }
    }
}

void ReductionState::fold(std::span<const double> frame, int frame_idx) { fold_impl(frame, frame_idx); }
void ReductionState::fold(std::span<const std::uint16_t> frame, int frame_idx) { fold_impl(frame, frame_idx); }

ReductionState fold_max_argmax(ReductionState state, const Grid2D& frame, int frame_idx) {
    require(frame.width() == state.width() && frame.height() == state.height(), ErrorKind::Parameter,
            "frame dimensions do not match reduction state");
    state.fold(frame.values(), frame_idx);
    return state;
}

}  // namespace irmap
