#pragma once

#include <array>
#include <span>
#include <vector>

#include "irmap/grid.hpp"

namespace irmap {

// Projective map of the plane, stored row-major with h[2][2] == 1.
class Homography {
public:
    using Matrix = std::array<std::array<double, 3>, 3>;

    Homography();  // identity
    // Normalizes so the bottom-right entry is 1; rejects singular matrices.
    explicit Homography(const Matrix& m);

    static Homography translation(double dx, double dy);

    const Matrix& matrix() const noexcept { return m_; }
    double operator()(int r, int c) const noexcept {
        return m_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    double determinant() const noexcept;
    Homography inverse() const;
    // (this * other): applies other first.
    Homography compose(const Homography& other) const;
    bool is_identity() const noexcept;

private:
    Matrix m_;
};

struct PointCorrespondence {
    PointXY image;  // raw frame pixel
    PointXY world;  // target coordinates (plate mm or corrected pixels)
};

struct HomographyEstimate {
    Homography h;
    double max_residual = 0.0;  // in target units
};

// Maps image -> world. Four points are solved exactly; more use the
// normalized direct linear transform.
HomographyEstimate estimate_homography(std::span<const PointCorrespondence> corr);

PointXY apply_homography(PointXY p, const Homography& h);

struct WarpedFrame {
    Grid2D values;  // 0 where invalid
    Mask valid;
};

// Output pixel q samples the source bilinearly at h^-1(q).
WarpedFrame warp_frame(const Grid2D& frame, const Homography& h, int out_width, int out_height);

struct PixelGridFrame {
    double pitch_um = 360.0;
    PixelXY origin_pixel;  // plate centre
    int width = 640;
    int height = 480;

    void validate() const;
    // Plate mm (centre origin, +y along image rows) to corrected pixel coordinates.
    PointXY to_pixel(PointXY world_mm) const noexcept;
};

double estimate_pixel_pitch(PointXY p1, PointXY p2, double known_length_mm);

// The twelve plate markers: corners of the 50, 100 and 150 mm squares, in
// plate mm.
std::vector<PointXY> plate_markers();
std::vector<PointXY> outer_square_corners();

// Correspondence file rows: world_x_mm,world_y_mm,image_x_px,image_y_px; '#' comments.
std::vector<PointCorrespondence> parse_correspondences(const std::string& text);

}  // namespace irmap
