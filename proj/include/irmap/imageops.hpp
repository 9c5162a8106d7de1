#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "irmap/grid.hpp"

namespace irmap {

// All convolutions use reflect-101 borders and a kernel radius of ceil(4 sigma).
Grid2D gaussian_blur(const Grid2D& img, double sigma);
Grid2D gaussian_gradient_magnitude(const Grid2D& img, double sigma);
Grid2D gaussian_laplace(const Grid2D& img, double sigma);

struct Hessian {
    Grid2D xx, yy, xy;
};
Hessian gaussian_hessian(const Grid2D& img, double sigma);

// Correlation taps for offsets -r..r. order 0 sums to 1; order 1 is exact on
// linear signals; order 2 sums to 0 and is exact on quadratics.
std::vector<double> gaussian_taps(double sigma, int order);
int kernel_radius(double sigma);
int reflect101(int i, int n) noexcept;

struct OtsuSplit {
    int bin = 0;          // first bin of the high class, 1..255
    double threshold = 0; // value at the lower edge of that bin
};

// Two-class split over 256 uniform bins spanning [min, max] of the input.
OtsuSplit otsu_split(std::span<const double> values);
std::vector<double> otsu_thresholds(const Grid2D& img, int classes);
int otsu_bin_of(double v, double lo, double hi) noexcept;

struct LabelGrid {
    Grid<std::int32_t> labels;
    int count = 0;
};

LabelGrid label_components(const Grid2D& binary, int connectivity);
LabelGrid label_components(const Mask& binary, int connectivity);

Mask dilate(const Mask& mask, int radius);

class ReductionState {
public:
    static constexpr std::int32_t kNever = -1;

    ReductionState(int width, int height);

    const Grid2D& max_value() const noexcept { return max_; }
    const Grid<std::int32_t>& argmax_frame() const noexcept { return argmax_; }
    int width() const noexcept { return max_.width(); }
    int height() const noexcept { return max_.height(); }

    // Strictly greater values replace the running max, so the first frame to
    // reach a plateau keeps the index.
    void fold(std::span<const double> frame, int frame_idx);
    void fold(std::span<const std::uint16_t> frame, int frame_idx);

private:
    template <typename T>
    void fold_impl(std::span<const T> frame, int frame_idx);

    Grid2D max_;
    Grid<std::int32_t> argmax_;
    int last_idx_ = kNever;
};

ReductionState fold_max_argmax(ReductionState state, const Grid2D& frame, int frame_idx);

}  // namespace irmap
