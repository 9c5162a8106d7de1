#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "irmap/error.hpp"

namespace irmap {

// Row-major 2D raster. x runs along a row, y selects the row.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;

    Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
        require(width >= 1 && height >= 1, ErrorKind::Parameter, "grid dimensions must be positive");
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }

    Grid(int width, int height, std::vector<T> values) : width_(width), height_(height), data_(std::move(values)) {
        require(width >= 1 && height >= 1, ErrorKind::Parameter, "grid dimensions must be positive");
        require(data_.size() == size(), ErrorKind::Parameter, "grid value count does not match dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::span<T> row(int y) noexcept { return {data_.data() + index(0, y), static_cast<std::size_t>(width_)}; }
    std::span<const T> row(int y) const noexcept {
        return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
    }

    bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using Grid2D = Grid<double>;
using CountFrame = Grid<std::uint16_t>;
using Mask = Grid<std::uint8_t>;

inline bool all_finite(const Grid2D& g) {
    return std::all_of(g.values().begin(), g.values().end(), [](double v) { return std::isfinite(v); });
}

template <typename T>
Grid2D to_double(const Grid<T>& g) {
    Grid2D out(g.width(), g.height());
    std::transform(g.values().begin(), g.values().end(), out.values().begin(),
                   [](T v) { return static_cast<double>(v); });
    return out;
}

struct PixelXY {
    int x = 0;
    int y = 0;
    bool operator==(const PixelXY&) const = default;
    auto operator<=>(const PixelXY&) const = default;
};

struct PointXY {
    double x = 0.0;
    double y = 0.0;
};

}  // namespace irmap
