#include "irmap/spatial.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace irmap {

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const Homography::Matrix& m) {
    Mat3 e;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return e;
}

Homography::Matrix from_eigen(const Mat3& e) {
    Homography::Matrix m{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = e(r, c);
    return m;
}

double triangle_area2(PointXY a, PointXY b, PointXY c) {
    return std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

// Any collinear triple makes the four-point system rank deficient.
void check_general_position(std::span<const PointCorrespondence> c) {
    auto check = [&](auto pick) {
        double scale = 0.0;
        for (const auto& p : c) scale = std::max({scale, std::abs(pick(p).x), std::abs(pick(p).y)});
        const double tol = 1e-9 * std::max(1.0, scale * scale);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j)
                for (std::size_t k = j + 1; k < 4; ++k)
                    if (triangle_area2(pick(c[i]), pick(c[j]), pick(c[k])) <= tol)
                        fail(ErrorKind::Degeneracy, "three of the four correspondences are collinear");
    };
    check([](const PointCorrespondence& p) { return p.image; });
    check([](const PointCorrespondence& p) { return p.world; });
}

Mat3 solve_four(std::span<const PointCorrespondence> c) {
    check_general_position(c);
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = c[static_cast<std::size_t>(i)].image.x, y = c[static_cast<std::size_t>(i)].image.y;
        const double u = c[static_cast<std::size_t>(i)].world.x, v = c[static_cast<std::size_t>(i)].world.y;
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (lu.rank() < 8) fail(ErrorKind::Degeneracy, "four-point system is rank deficient");
    const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
    Mat3 m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
    return m;
}

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Mat3 normalizer(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += (p - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    if (mean_dist <= 0.0) fail(ErrorKind::Degeneracy, "all correspondence points coincide");
    const double s = std::sqrt(2.0) / mean_dist;
    Mat3 t;
    t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
    return t;
}

Mat3 solve_dlt(std::span<const PointCorrespondence> c) {
    std::vector<Eigen::Vector2d> src, dst;
    for (const auto& p : c) {
        src.emplace_back(p.image.x, p.image.y);
        dst.emplace_back(p.world.x, p.world.y);
    }
    const Mat3 ts = normalizer(src), td = normalizer(dst);
    Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(c.size()), 9);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Eigen::Vector3d s = ts * src[i].homogeneous();
        const Eigen::Vector3d d = td * dst[i].homogeneous();
        const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
        const auto r = static_cast<Eigen::Index>(2 * i);
        a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // A second vanishing singular value means the solution is not unique.
    if (sv(sv.size() - 2) <= 1e-12 * sv(0)) fail(ErrorKind::Degeneracy, "correspondences do not determine a homography");
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return td.inverse() * hn * ts;
}

}  // namespace

Homography::Homography() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

Homography::Homography(const Matrix& m) {
    const double scale = m[2][2];
    require(std::isfinite(scale) && std::abs(scale) > 1e-15, ErrorKind::Degeneracy,
            "homography cannot be normalized: h22 vanishes");
    for (auto& row : m_) row.fill(0.0);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            m_[r][c] = m[r][c] / scale;
            require(std::isfinite(m_[r][c]), ErrorKind::Parameter, "homography entries must be finite");
        }
    m_[2][2] = 1.0;
    require(std::abs(determinant()) > 1e-12, ErrorKind::Degeneracy, "homography is singular");
}

Homography Homography::translation(double dx, double dy) { return Homography(Matrix{{{1, 0, dx}, {0, 1, dy}, {0, 0, 1}}}); }

double Homography::determinant() const noexcept { return to_eigen(m_).determinant(); }

Homography Homography::inverse() const { return Homography(from_eigen(to_eigen(m_).inverse())); }

Homography Homography::compose(const Homography& other) const {
    return Homography(from_eigen(to_eigen(m_) * to_eigen(other.m_)));
}

bool Homography::is_identity() const noexcept { return m_ == Homography().m_; }

HomographyEstimate estimate_homography(std::span<const PointCorrespondence> corr) {
    require(corr.size() >= 4, ErrorKind::Parameter, "at least four correspondences are required");
    for (const auto& p : corr)
        require(std::isfinite(p.image.x) && std::isfinite(p.image.y) && std::isfinite(p.world.x) &&
                    std::isfinite(p.world.y),
                ErrorKind::Parameter, "correspondence coordinates must be finite");
    const Mat3 m = corr.size() == 4 ? solve_four(corr) : solve_dlt(corr);
    if (std::abs(m(2, 2)) <= 1e-15 * m.cwiseAbs().maxCoeff())
        fail(ErrorKind::Degeneracy, "estimated homography maps the origin to infinity");
    HomographyEstimate out{Homography(from_eigen(m)), 0.0};
    for (const auto& p : corr) {
        const PointXY q = apply_homography(p.image, out.h);
        out.max_residual = std::max(out.max_residual, std::hypot(q.x - p.world.x, q.y - p.world.y));
    }
    return out;
}

PointXY apply_homography(PointXY p, const Homography& h) {
    const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
    if (std::abs(w) < 1e-12) fail(ErrorKind::Horizon, "point lies on the horizon line");
    return {(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / w, (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / w};
}

WarpedFrame warp_frame(const Grid2D& frame, const Homography& h, int out_width, int out_height) {
    WarpedFrame out{Grid2D(out_width, out_height, 0.0), Mask(out_width, out_height, 0)};
    const Homography inv = h.inverse();
    const double max_x = frame.width() - 1, max_y = frame.height() - 1;
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
            if (std::abs(w) < 1e-12) continue;
            const double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
            const double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
            if (!(sx >= 0.0 && sy >= 0.0 && sx <= max_x && sy <= max_y)) continue;
            const int x0 = std::min(static_cast<int>(sx), frame.width() - 1);
            const int y0 = std::min(static_cast<int>(sy), frame.height() - 1);
            const int x1 = std::min(x0 + 1, frame.width() - 1);
            const int y1 = std::min(y0 + 1, frame.height() - 1);
            const double fx = sx - x0, fy = sy - y0;
            const double top = frame(x0, y0) + fx * (frame(x1, y0) - frame(x0, y0));
            const double bottom = frame(x0, y1) + fx * (frame(x1, y1) - frame(x0, y1));
            out.values(x, y) = top + fy * (bottom - top);
            out.valid(x, y) = 1;
        }
    }
    return out;
}

void PixelGridFrame::validate() const {
    require(std::isfinite(pitch_um) && pitch_um > 0.0, ErrorKind::Parameter, "pixel pitch must be positive");
    require(width >= 1 && height >= 1, ErrorKind::Parameter, "frame dimensions must be positive");
    require(origin_pixel.x >= 0 && origin_pixel.y >= 0 && origin_pixel.x < width && origin_pixel.y < height,
            ErrorKind::Parameter, "plate origin lies outside the frame");
}

PointXY PixelGridFrame::to_pixel(PointXY world_mm) const noexcept {
    return {origin_pixel.x + world_mm.x * 1000.0 / pitch_um, origin_pixel.y + world_mm.y * 1000.0 / pitch_um};
}

double estimate_pixel_pitch(PointXY p1, PointXY p2, double known_length_mm) {
    require(std::isfinite(known_length_mm) && known_length_mm > 0.0, ErrorKind::Parameter,
            "known length must be positive");
    const double d = std::hypot(p2.x - p1.x, p2.y - p1.y);
    require(d > 0.0, ErrorKind::Parameter, "pitch points coincide");
    return known_length_mm * 1000.0 / d;
}

std::vector<PointXY> plate_markers() {
    std::vector<PointXY> out;
    for (double side : {150.0, 100.0, 50.0}) {
        const double h = side / 2.0;
        out.insert(out.end(), {{-h, -h}, {h, -h}, {h, h}, {-h, h}});
    }
    return out;
}

std::vector<PointXY> outer_square_corners() { return {{-75.0, -75.0}, {75.0, -75.0}, {75.0, 75.0}, {-75.0, 75.0}}; }

std::vector<PointCorrespondence> parse_correspondences(const std::string& text) {
    std::vector<PointCorrespondence> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        double v[4];
        char comma = 0;
        bool ok = static_cast<bool>(row >> v[0]);
        for (int i = 1; ok && i < 4; ++i) ok = (row >> comma) && comma == ',' && (row >> v[i]);
        std::string rest;
        if (!ok || (row >> rest && rest.find_first_not_of(" \t\r") != std::string::npos))
            fail(ErrorKind::Parse, "correspondence line " + std::to_string(line_no) + " is malformed");
        out.push_back({{v[2], v[3]}, {v[0], v[1]}});
    }
    return out;
}

}  // namespace irmap
