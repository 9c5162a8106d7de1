#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irmap/grid.hpp"
#include "irmap/spatial.hpp"

namespace irmap {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    bool operator==(const Vec3&) const = default;
};

struct Triangle {
    std::array<Vec3, 3> v;
    Vec3 normal;
};

struct BoundingBox {
    Vec3 min;
    Vec3 max;
};

struct TriangleMesh {
    std::vector<Triangle> triangles;

    BoundingBox bounds() const;
    bool watertight() const;
    TriangleMesh translated(Vec3 offset) const;
};

// Binary or ASCII STL. Binary truncation throws OffsetError; ASCII syntax
// errors name the line.
TriangleMesh parse_stl(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_binary_stl(const TriangleMesh& mesh);

struct VoxelPitch {
    double x_um = 360.0;
    double y_um = 360.0;
    double z_um = 40.0;
};

class VoxelMesh {
public:
    VoxelMesh() = default;
    VoxelMesh(VoxelPitch pitch, PointXY origin_mm, int nx, int ny, int nz);

    VoxelPitch pitch() const noexcept { return pitch_; }
    PointXY origin_mm() const noexcept { return origin_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    int nz() const noexcept { return nz_; }
    std::size_t voxel_count() const noexcept { return part_.size(); }
    std::uint32_t linear_index(int i, int j, int k) const noexcept {
        return static_cast<std::uint32_t>(i + nx_ * (j + ny_ * k));
    }

    // 0 is empty; parts are numbered from 1.
    std::uint16_t part_at(int i, int j, int k) const noexcept { return part_[linear_index(i, j, k)]; }
    void set_part(int i, int j, int k, std::uint16_t id) noexcept { part_[linear_index(i, j, k)] = id; }
    bool occupied(int i, int j, int k) const noexcept { return part_at(i, j, k) != 0; }
    std::span<const std::uint16_t> parts() const noexcept { return part_; }

    std::size_t occupied_count() const;
    std::size_t occupied_in_layer(int layer) const;
    // Build layer holding a voxel centre at height z.
    int layer_of_z(double z_mm) const;

    // Voxel containing the plate centre, the registration anchor.
    std::array<int, 2> plate_centre_voxel() const;

    bool exact() const noexcept { return exact_; }
    void mark_inexact() noexcept { exact_ = false; }

private:
    VoxelPitch pitch_;
    PointXY origin_;
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<std::uint16_t> part_;
    bool exact_ = true;
};

// Grid spans the mesh bounds in x/y from origin_mm and z from the plate (z=0).
VoxelMesh voxelize(const TriangleMesh& mesh, VoxelPitch pitch, PointXY origin_mm);
// Parts share one grid of the given size; later parts overwrite earlier ones.
VoxelMesh voxelize_parts(std::span<const TriangleMesh> parts, VoxelPitch pitch, PointXY origin_mm, int nx, int ny,
                         int nz);
// Centre-parity test for a single point; also used as a sampling oracle.
bool point_inside(const TriangleMesh& mesh, Vec3 p);

struct LayerMask {
    int layer = 0;
    std::vector<PixelXY> pixels;           // sorted by voxel index
    std::vector<std::uint32_t> voxel_index;  // parallel to pixels
    PixelGridFrame registration;

    std::size_t size() const noexcept { return pixels.size(); }
    bool empty() const noexcept { return pixels.empty(); }
    Mask to_mask() const;
};

LayerMask layer_mask(const VoxelMesh& vox, int layer, const PixelGridFrame& reg);

struct VoxelValue {
    std::uint32_t index = 0;
    double value = 0.0;
    bool operator==(const VoxelValue&) const = default;
};

std::vector<VoxelValue> map_layer_feature(const Grid2D& feature, const LayerMask& mask);
// As above, dropping masked pixels whose validity flag is 0.
std::vector<VoxelValue> map_layer_feature(const Grid2D& feature, const Mask& valid, const LayerMask& mask);

// Closed axis-aligned box and UV sphere meshes with outward normals.
TriangleMesh make_box(Vec3 lo, Vec3 hi);
TriangleMesh make_sphere(Vec3 centre, double radius, int slices, int stacks);

}  // namespace irmap
