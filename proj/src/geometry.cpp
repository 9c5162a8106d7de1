#include "irmap/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

namespace irmap {

namespace {

static_assert(std::endian::native == std::endian::little, "binary STL is read in host byte order");

template <typename T>
T load_le(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

Vec3 sub(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }

bool finite(Vec3 v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

TriangleMesh parse_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 84) throw OffsetError(ErrorKind::Truncation, "binary STL header incomplete", bytes.size());
    const auto count = load_le<std::uint32_t>(bytes.data() + 80);
    TriangleMesh mesh;
    // Bounded by the bytes actually present, not the declared count.
    mesh.triangles.reserve(std::min<std::size_t>(count, (bytes.size() - 84) / 50));
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t off = 84 + 50 * static_cast<std::size_t>(t);
        if (off + 50 > bytes.size())
            throw OffsetError(ErrorKind::Truncation,
                              "binary STL record " + std::to_string(t) + " of " + std::to_string(count) + " truncated",
                              off);
        Triangle tri;
        const std::uint8_t* p = bytes.data() + off;
        auto vec = [&](int slot) {
            return Vec3{load_le<float>(p + 12 * slot), load_le<float>(p + 12 * slot + 4),
                        load_le<float>(p + 12 * slot + 8)};
        };
        tri.normal = vec(0);
        for (int v = 0; v < 3; ++v) tri.v[static_cast<std::size_t>(v)] = vec(v + 1);
        for (const auto& v : tri.v)
            if (!finite(v)) throw OffsetError(ErrorKind::Parse, "non-finite vertex", off);
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

class AsciiTokens {
public:
    explicit AsciiTokens(std::string_view text) : text_(text) {}

    bool next(std::string& tok) {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= text_.size()) return false;
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        tok.assign(text_.substr(start, pos_ - start));
        tok_line_ = line_;
        return true;
    }

    // Skips the remainder of the current line (solid/endsolid names).
    void skip_line() {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }

    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorKind::Parse, "ASCII STL line " + std::to_string(tok_line_) + ": " + what);
    }

    void expect(const char* word) {
        std::string tok;
        if (!next(tok)) {
            tok_line_ = line_;
            error(std::string("unexpected end of file, expected '") + word + "'");
        }
        if (tok != word) error("expected '" + std::string(word) + "', found '" + tok + "'");
    }

    double number() {
        std::string tok;
        if (!next(tok)) {
            tok_line_ = line_;
            error("unexpected end of file, expected a number");
        }
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || !std::isfinite(v)) error("malformed number '" + tok + "'");
        return v;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int tok_line_ = 1;
};

TriangleMesh parse_ascii(std::string_view text) {
    AsciiTokens in(text);
    in.expect("solid");
    in.skip_line();
    TriangleMesh mesh;
    std::string tok;
    while (true) {
        if (!in.next(tok)) in.error("missing 'endsolid'");
        if (tok == "endsolid") break;
        if (tok != "facet") in.error("expected 'facet', found '" + tok + "'");
        Triangle tri;
        in.expect("normal");
        tri.normal = {in.number(), in.number(), in.number()};
        in.expect("outer");
        in.expect("loop");
        for (auto& v : tri.v) {
            in.expect("vertex");
            v = {in.number(), in.number(), in.number()};
        }
        in.expect("endloop");
        in.expect("endfacet");
        mesh.triangles.push_back(tri);
    }
    if (mesh.triangles.empty()) in.error("no facets");
    return mesh;
}

// Crossings of the line {(t, y, z)} with the mesh; false when the line
// grazes an edge or vertex and the parity would be ambiguous.
bool row_crossings(const TriangleMesh& mesh, double y, double z, double tol, std::vector<double>& xs) {
    xs.clear();
    for (const auto& tri : mesh.triangles) {
        const Vec3 &a = tri.v[0], &b = tri.v[1], &c = tri.v[2];
        const double e0 = (b.y - a.y) * (z - a.z) - (b.z - a.z) * (y - a.y);
        const double e1 = (c.y - b.y) * (z - b.z) - (c.z - b.z) * (y - b.y);
        const double e2 = (a.y - c.y) * (z - c.z) - (a.z - c.z) * (y - c.y);
        const double area = e0 + e1 + e2;
        if (std::abs(area) <= tol) continue;  // triangle parallel to the ray
        const bool pos = e0 > 0 || e1 > 0 || e2 > 0;
        const bool neg = e0 < 0 || e1 < 0 || e2 < 0;
        if (pos && neg) continue;
        if (std::abs(e0) <= tol || std::abs(e1) <= tol || std::abs(e2) <= tol) return false;
        // Barycentric weights from the projected edge functions.
        const double x = (e1 * a.x + e2 * b.x + e0 * c.x) / area;
        xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    return true;
}

void fill_part(const TriangleMesh& mesh, std::uint16_t id, VoxelMesh& vox) {
    const auto bb = mesh.bounds();
    const double scale = std::max({std::abs(bb.max.y - bb.min.y), std::abs(bb.max.z - bb.min.z), 1e-3});
    const double tol = 1e-12 * scale * scale;
    const double px = vox.pitch().x_um / 1000.0, py = vox.pitch().y_um / 1000.0, pz = vox.pitch().z_um / 1000.0;
    const PointXY o = vox.origin_mm();
    std::vector<double> xs;
    for (int k = 0; k < vox.nz(); ++k) {
        const double z = (k + 0.5) * pz;
        if (z < bb.min.z || z > bb.max.z) continue;
        for (int j = 0; j < vox.ny(); ++j) {
            const double y = o.y + (j + 0.5) * py;
            if (y < bb.min.y || y > bb.max.y) continue;
            double ry = y, rz = z;
            if (!row_crossings(mesh, ry, rz, tol, xs)) {
                ry = y + 1e-4 * py;
                rz = z + 0.5e-4 * pz;
                if (!row_crossings(mesh, ry, rz, tol, xs)) vox.mark_inexact();
            }
            if (xs.size() % 2 != 0) vox.mark_inexact();
            std::size_t passed = 0;
            for (int i = 0; i < vox.nx(); ++i) {
                const double x = o.x + (i + 0.5) * px;
                while (passed < xs.size() && xs[passed] < x) ++passed;
                if (passed % 2 == 1) vox.set_part(i, j, k, id);
            }
        }
    }
}

int cells(double span_mm, double pitch_um) {
    return std::max(1, static_cast<int>(std::ceil(span_mm * 1000.0 / pitch_um - 1e-9)));
}

}  // namespace

BoundingBox TriangleMesh::bounds() const {
    require(!triangles.empty(), ErrorKind::Parameter, "mesh has no triangles");
    BoundingBox b{triangles[0].v[0], triangles[0].v[0]};
    for (const auto& t : triangles)
        for (const auto& v : t.v) {
            b.min = {std::min(b.min.x, v.x), std::min(b.min.y, v.y), std::min(b.min.z, v.z)};
            b.max = {std::max(b.max.x, v.x), std::max(b.max.y, v.y), std::max(b.max.z, v.z)};
        }
    return b;
}

bool TriangleMesh::watertight() const {
    using Key = std::tuple<double, double, double>;
    std::map<std::pair<Key, Key>, int> edges;
    for (const auto& t : triangles)
        for (std::size_t e = 0; e < 3; ++e) {
            Key a{t.v[e].x, t.v[e].y, t.v[e].z};
            Key b{t.v[(e + 1) % 3].x, t.v[(e + 1) % 3].y, t.v[(e + 1) % 3].z};
            if (b < a) std::swap(a, b);
            ++edges[{a, b}];
        }
    return !edges.empty() && std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
}

TriangleMesh TriangleMesh::translated(Vec3 d) const {
    TriangleMesh out = *this;
    for (auto& t : out.triangles)
        for (auto& v : t.v) v = {v.x + d.x, v.y + d.y, v.z + d.z};
    return out;
}

TriangleMesh parse_stl(std::span<const std::uint8_t> bytes) {
    const bool says_solid = bytes.size() >= 5 && std::memcmp(bytes.data(), "solid", 5) == 0;
    if (says_solid) {
        // Binary files may also start with "solid"; a consistent size decides.
        const bool binary_sized =
            bytes.size() >= 84 && 84 + 50 * static_cast<std::size_t>(load_le<std::uint32_t>(bytes.data() + 80)) ==
                                      bytes.size();
        if (!binary_sized)
            return parse_ascii(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    }
    return parse_binary(bytes);
}

std::vector<std::uint8_t> write_binary_stl(const TriangleMesh& mesh) {
    std::vector<std::uint8_t> out(84 + 50 * mesh.triangles.size(), 0);
    const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
    std::memcpy(out.data() + 80, &count, 4);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        std::uint8_t* p = out.data() + 84 + 50 * t;
        const auto& tri = mesh.triangles[t];
        auto put = [&](int slot, Vec3 v) {
            const float f[3] = {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
            std::memcpy(p + 12 * slot, f, 12);
        };
        put(0, tri.normal);
        for (int v = 0; v < 3; ++v) put(v + 1, tri.v[static_cast<std::size_t>(v)]);
    }
    return out;
}

VoxelMesh::VoxelMesh(VoxelPitch pitch, PointXY origin_mm, int nx, int ny, int nz)
    : pitch_(pitch), origin_(origin_mm), nx_(nx), ny_(ny), nz_(nz) {
    require(pitch.x_um > 0 && pitch.y_um > 0 && pitch.z_um > 0, ErrorKind::Parameter, "voxel pitch must be positive");
    require(nx >= 1 && ny >= 1 && nz >= 1, ErrorKind::Parameter, "voxel grid dimensions must be positive");
    const double total = static_cast<double>(nx) * ny * nz;
    require(total < 4.0e9, ErrorKind::Parameter, "voxel grid exceeds 32-bit linear indexing");
    part_.assign(static_cast<std::size_t>(total), 0);
}

std::size_t VoxelMesh::occupied_count() const {
    return static_cast<std::size_t>(std::count_if(part_.begin(), part_.end(), [](auto p) { return p != 0; }));
}

std::size_t VoxelMesh::occupied_in_layer(int layer) const {
    require(layer >= 0 && layer < nz_, ErrorKind::Parameter, "layer out of range");
    const auto begin = part_.begin() + static_cast<std::ptrdiff_t>(linear_index(0, 0, layer));
    return static_cast<std::size_t>(
        std::count_if(begin, begin + static_cast<std::ptrdiff_t>(nx_) * ny_, [](auto p) { return p != 0; }));
}

int VoxelMesh::layer_of_z(double z_mm) const {
    return static_cast<int>(std::floor(z_mm * 1000.0 / pitch_.z_um + 1e-9));
}

std::array<int, 2> VoxelMesh::plate_centre_voxel() const {
    return {static_cast<int>(std::floor(-origin_.x * 1000.0 / pitch_.x_um + 1e-9)),
            static_cast<int>(std::floor(-origin_.y * 1000.0 / pitch_.y_um + 1e-9))};
}

VoxelMesh voxelize(const TriangleMesh& mesh, VoxelPitch pitch, PointXY origin_mm) {
    const auto bb = mesh.bounds();
    require(bb.max.x > origin_mm.x && bb.max.y > origin_mm.y && bb.max.z > 0.0, ErrorKind::Parameter,
            "mesh lies entirely before the voxel origin");
    const int nx = cells(bb.max.x - origin_mm.x, pitch.x_um);
    const int ny = cells(bb.max.y - origin_mm.y, pitch.y_um);
    const int nz = cells(bb.max.z, pitch.z_um);
    return voxelize_parts(std::span(&mesh, 1), pitch, origin_mm, nx, ny, nz);
}

VoxelMesh voxelize_parts(std::span<const TriangleMesh> parts, VoxelPitch pitch, PointXY origin_mm, int nx, int ny,
                         int nz) {
    require(parts.size() < 65535, ErrorKind::Parameter, "too many parts for 16-bit part ids");
    VoxelMesh vox(pitch, origin_mm, nx, ny, nz);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (!parts[p].watertight()) vox.mark_inexact();
        fill_part(parts[p], static_cast<std::uint16_t>(p + 1), vox);
    }
    return vox;
}

bool point_inside(const TriangleMesh& mesh, Vec3 p) {
    const auto bb = mesh.bounds();
    const double scale = std::max({std::abs(bb.max.y - bb.min.y), std::abs(bb.max.z - bb.min.z), 1e-3});
    std::vector<double> xs;
    double y = p.y, z = p.z;
    if (!row_crossings(mesh, y, z, 1e-12 * scale * scale, xs)) {
        y += 1e-7 * scale;
        z += 0.5e-7 * scale;
        row_crossings(mesh, y, z, 1e-12 * scale * scale, xs);
    }
    const auto before = std::lower_bound(xs.begin(), xs.end(), p.x) - xs.begin();
    return before % 2 == 1;
}

Mask LayerMask::to_mask() const {
    Mask m(registration.width, registration.height, 0);
    for (const auto& p : pixels) m(p.x, p.y) = 1;
    return m;
}

LayerMask layer_mask(const VoxelMesh& vox, int layer, const PixelGridFrame& reg) {
    reg.validate();
    require(layer >= 0 && layer < vox.nz(), ErrorKind::Parameter, "layer " + std::to_string(layer) + " out of range");
    require(std::abs(vox.pitch().x_um - reg.pitch_um) < 1e-9 && std::abs(vox.pitch().y_um - reg.pitch_um) < 1e-9,
            ErrorKind::Parameter, "voxel pitch must equal pixel pitch for registration");
    LayerMask out{layer, {}, {}, reg};
    const auto [ci, cj] = vox.plate_centre_voxel();
    std::string offenders;
    std::size_t bad = 0;
    for (int j = 0; j < vox.ny(); ++j)
        for (int i = 0; i < vox.nx(); ++i) {
            if (!vox.occupied(i, j, layer)) continue;
            const PixelXY px{reg.origin_pixel.x + (i - ci), reg.origin_pixel.y + (j - cj)};
            if (px.x < 0 || px.y < 0 || px.x >= reg.width || px.y >= reg.height) {
                if (++bad <= 8)
                    offenders += " (" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(layer) + ")";
                continue;
            }
            out.pixels.push_back(px);
            out.voxel_index.push_back(vox.linear_index(i, j, layer));
        }
    if (bad > 0)
        fail(ErrorKind::OutOfFrame,
             std::to_string(bad) + " voxel(s) map outside the frame:" + offenders + (bad > 8 ? " ..." : ""));
    return out;
}

std::vector<VoxelValue> map_layer_feature(const Grid2D& feature, const LayerMask& mask) {
    require(feature.width() == mask.registration.width && feature.height() == mask.registration.height,
            ErrorKind::Parameter, "feature dimensions do not match the registration frame");
    std::vector<VoxelValue> out;
    out.reserve(mask.size());
    for (std::size_t n = 0; n < mask.size(); ++n)
        out.push_back({mask.voxel_index[n], feature(mask.pixels[n].x, mask.pixels[n].y)});
    return out;
}

std::vector<VoxelValue> map_layer_feature(const Grid2D& feature, const Mask& valid, const LayerMask& mask) {
    require(valid.same_shape(feature), ErrorKind::Parameter, "validity mask does not match the feature");
    auto all = map_layer_feature(feature, mask);
    std::vector<VoxelValue> out;
    out.reserve(all.size());
    for (std::size_t n = 0; n < all.size(); ++n)
        if (valid(mask.pixels[n].x, mask.pixels[n].y)) out.push_back(all[n]);
    return out;
}

TriangleMesh make_box(Vec3 lo, Vec3 hi) {
    const Vec3 c[8] = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
                       {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
    const int faces[12][3] = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                              {2, 3, 7}, {2, 7, 6}, {1, 2, 6}, {1, 6, 5}, {0, 4, 7}, {0, 7, 3}};
    TriangleMesh mesh;
    for (const auto& f : faces) {
        Triangle t{{c[f[0]], c[f[1]], c[f[2]]}, {}};
        const Vec3 n = cross(sub(t.v[1], t.v[0]), sub(t.v[2], t.v[0]));
        const double len = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
        t.normal = {n.x / len, n.y / len, n.z / len};
        mesh.triangles.push_back(t);
    }
    return mesh;
}

TriangleMesh make_sphere(Vec3 centre, double radius, int slices, int stacks) {
    require(slices >= 3 && stacks >= 2 && radius > 0, ErrorKind::Parameter, "invalid sphere tessellation");
    auto at = [&](int st, int sl) {
        if (st == 0) return Vec3{centre.x, centre.y, centre.z + radius};
        if (st == stacks) return Vec3{centre.x, centre.y, centre.z - radius};
        const double theta = std::numbers::pi * st / stacks;
        const double phi = 2.0 * std::numbers::pi * (sl % slices) / slices;
        return Vec3{centre.x + radius * std::sin(theta) * std::cos(phi),
                    centre.y + radius * std::sin(theta) * std::sin(phi), centre.z + radius * std::cos(theta)};
    };
    TriangleMesh mesh;
    auto add = [&](Vec3 a, Vec3 b, Vec3 c) {
        const Vec3 n = cross(sub(b, a), sub(c, a));
        const double len = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
        mesh.triangles.push_back({{a, b, c}, {n.x / len, n.y / len, n.z / len}});
    };
    for (int st = 0; st < stacks; ++st)
        for (int sl = 0; sl < slices; ++sl) {
            const Vec3 a = at(st, sl), b = at(st + 1, sl), c = at(st + 1, sl + 1), d = at(st, sl + 1);
            if (st != 0) add(a, b, d);
            if (st != stacks - 1) add(d, b, c);
        }
    return mesh;
}

}  // namespace irmap
