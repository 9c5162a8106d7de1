#include "irmap/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

namespace irmap {

static_assert(std::endian::native == std::endian::little, "the IRVX codec writes host byte order");

namespace {

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        out.insert(out.end(), p, p + sizeof v);
    }
    void bytes(const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    template <typename T>
    bool get(T& v) {
        if (remaining() < sizeof v) return false;
        std::memcpy(&v, bytes_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return true;
    }
    bool text(std::size_t n, std::string& s) {
        if (remaining() < n) return false;
        s.assign(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return true;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string block_name(std::optional<std::uint32_t> layer, std::optional<std::uint8_t> feature) {
    std::string s;
    if (layer) s += " in layer " + std::to_string(*layer);
    if (feature) s += " feature " + std::to_string(*feature);
    return s;
}

struct Decoded {
    std::uint32_t i, j, k;
};

Decoded decode(const StoreHeader& h, std::uint32_t index) {
    return {index % h.nx, (index / h.nx) % h.ny, index / (h.nx * h.ny)};
}

std::string format_value(float v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(std::numeric_limits<float>::max_digits10);
    os << v;
    return os.str();
}

}  // namespace

bool StoreEntry::operator==(const StoreEntry& o) const noexcept {
    return index == o.index && std::bit_cast<std::uint32_t>(value) == std::bit_cast<std::uint32_t>(o.value);
}

bool StoreHeader::operator==(const StoreHeader& o) const noexcept {
    return version == o.version && pitch.x_um == o.pitch.x_um && pitch.y_um == o.pitch.y_um &&
           pitch.z_um == o.pitch.z_um && nx == o.nx && ny == o.ny && nz == o.nz && parts == o.parts;
}

const FeatureBlock* VoxelFeatureStore::find(std::uint32_t layer, std::uint8_t feature_id) const noexcept {
    for (const auto& b : blocks)
        if (b.layer == layer && b.feature_id == feature_id) return &b;
    return nullptr;
}

CorruptionError::CorruptionError(const std::string& what, std::size_t offset, std::optional<std::uint32_t> layer,
                                 std::optional<std::uint8_t> feature)
    : OffsetError(ErrorKind::Corruption, what + block_name(layer, feature), offset), layer_(layer), feature_(feature) {}

std::vector<std::uint8_t> write_store(const VoxelFeatureStore& store) {
    const auto& h = store.header;
    require(h.nx >= 1 && h.ny >= 1 && h.nz >= 1, ErrorKind::Parameter, "store dimensions must be positive");
    const std::uint64_t voxels = std::uint64_t{h.nx} * h.ny * h.nz;
    std::set<std::pair<std::uint32_t, std::uint8_t>> seen;
    for (const auto& b : store.blocks) {
        require(b.layer < h.nz, ErrorKind::Parameter, "block layer exceeds grid depth");
        require(seen.insert({b.layer, b.feature_id}).second, ErrorKind::Parameter,
                "duplicate block for layer " + std::to_string(b.layer) + " feature " + std::to_string(b.feature_id));
        for (std::size_t n = 0; n < b.entries.size(); ++n) {
            require(b.entries[n].index < voxels, ErrorKind::Parameter, "entry index outside the voxel grid");
            require(n == 0 || b.entries[n].index > b.entries[n - 1].index, ErrorKind::Parameter,
                    "entry indices must increase strictly");
        }
    }

    Writer w;
    w.bytes("IRVX");
    w.put(h.version);
    w.put(h.pitch.x_um);
    w.put(h.pitch.y_um);
    w.put(h.pitch.z_um);
    w.put(h.nx);
    w.put(h.ny);
    w.put(h.nz);
    w.put(static_cast<std::uint32_t>(h.parts.size()));
    for (const auto& p : h.parts) {
        require(p.name.size() <= 0xFFFF, ErrorKind::Parameter, "part name too long");
        w.put(p.id);
        w.put(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name);
    }
    w.put(static_cast<std::uint32_t>(store.blocks.size()));
    for (const auto& b : store.blocks) {
        w.put(b.layer);
        w.put(b.feature_id);
        w.put(static_cast<std::uint32_t>(b.entries.size()));
        for (const auto& e : b.entries) {
            w.put(e.index);
            w.put(e.value);
        }
    }
    return std::move(w.out);
}

VoxelFeatureStore read_store(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    std::string magic;
    if (!r.text(4, magic) || magic != "IRVX") fail(ErrorKind::Format, "missing IRVX magic");
    VoxelFeatureStore store;
    auto& h = store.header;
    auto truncated = [&](const char* what, std::optional<std::uint32_t> layer = {},
                         std::optional<std::uint8_t> feature = {}) {
        return CorruptionError(std::string("truncated ") + what, r.offset(), layer, feature);
    };
    if (!r.get(h.version)) throw truncated("header");
    if (h.version != StoreHeader::kVersion) fail(ErrorKind::Format, "unsupported version " + std::to_string(h.version));
    if (!r.get(h.pitch.x_um) || !r.get(h.pitch.y_um) || !r.get(h.pitch.z_um) || !r.get(h.nx) || !r.get(h.ny) ||
        !r.get(h.nz))
        throw truncated("header");
    if (h.nx == 0 || h.ny == 0 || h.nz == 0) fail(ErrorKind::Format, "zero grid dimension");

    std::uint32_t part_count = 0;
    if (!r.get(part_count)) throw truncated("part table");
    // Each part needs at least 4 bytes; refuse counts the file cannot hold.
    if (part_count > r.remaining() / 4) throw CorruptionError("part count exceeds file size", r.offset(), {}, {});
    for (std::uint32_t p = 0; p < part_count; ++p) {
        StorePart part;
        std::uint16_t len = 0;
        if (!r.get(part.id) || !r.get(len) || !r.text(len, part.name)) throw truncated("part table");
        h.parts.push_back(std::move(part));
    }

    std::uint32_t block_count = 0;
    if (!r.get(block_count)) throw truncated("block table");
    if (block_count > r.remaining() / 9) throw CorruptionError("block count exceeds file size", r.offset(), {}, {});
    for (std::uint32_t b = 0; b < block_count; ++b) {
        FeatureBlock block;
        if (!r.get(block.layer)) throw truncated("block header");
        if (!r.get(block.feature_id)) throw truncated("block header", block.layer);
        std::uint32_t count = 0;
        if (!r.get(count)) throw truncated("block header", block.layer, block.feature_id);
        if (std::uint64_t{count} * 8 > r.remaining())
            throw CorruptionError("block declares " + std::to_string(count) + " entries beyond end of file",
                                  r.offset(), block.layer, block.feature_id);
        block.entries.resize(count);
        for (auto& e : block.entries)
            if (!r.get(e.index) || !r.get(e.value)) throw truncated("block entries", block.layer, block.feature_id);
        store.blocks.push_back(std::move(block));
    }
    if (r.remaining() != 0) throw CorruptionError("trailing bytes after last block", r.offset(), {}, {});
    return store;
}

ReductionReport reduction_report(std::span<const LayerFrames> layers, std::uint64_t stored_bytes) {
    ReductionReport rep;
    for (const auto& l : layers)
        rep.raw_bytes += static_cast<std::uint64_t>(l.width) * static_cast<std::uint64_t>(l.height) * 2 * l.frames;
    require(rep.raw_bytes > 0, ErrorKind::Parameter, "raw frame bytes must be positive");
    rep.stored_bytes = stored_bytes;
    rep.ratio = std::max(0.0, 1.0 - static_cast<double>(stored_bytes) / static_cast<double>(rep.raw_bytes));
    rep.meets_claim = rep.ratio >= 0.99;
    return rep;
}

std::vector<std::uint8_t> export_grid(const VoxelFeatureStore& store, std::uint32_t layer, std::uint8_t feature_id,
                                      ExportFormat format) {
    const FeatureBlock* block = store.find(layer, feature_id);
    if (block == nullptr)
        fail(ErrorKind::NotFound,
             "no block for layer " + std::to_string(layer) + " feature " + std::to_string(feature_id));
    const auto& h = store.header;
    std::string text;

    if (format == ExportFormat::Csv) {
        text = "i,j,layer,value\n";
        for (const auto& e : block->entries) {
            const auto d = decode(h, e.index);
            text += std::to_string(d.i) + "," + std::to_string(d.j) + "," + std::to_string(d.k) + "," +
                    format_value(e.value) + "\n";
        }
        return {text.begin(), text.end()};
    }

    // Dense layer slice; voxels without an entry are missing.
    const std::size_t plane = std::size_t{h.nx} * h.ny;
    std::vector<float> dense(plane, std::numeric_limits<float>::quiet_NaN());
    for (const auto& e : block->entries) dense[e.index % plane] = e.value;

    if (format == ExportFormat::Vtk) {
        std::ostringstream os;
        os << "# vtk DataFile Version 3.0\n";
        os << "layer " << layer << " feature " << int{feature_id} << "\n";
        os << "ASCII\nDATASET STRUCTURED_POINTS\n";
        os << "DIMENSIONS " << h.nx << " " << h.ny << " 1\n";
        os << "ORIGIN 0 0 " << format_value(static_cast<float>(layer * h.pitch.z_um / 1000.0)) << "\n";
        os << "SPACING " << h.pitch.x_um / 1000.0 << " " << h.pitch.y_um / 1000.0 << " " << h.pitch.z_um / 1000.0
           << "\n";
        os << "POINT_DATA " << plane << "\n";
        os << "SCALARS value float 1\nLOOKUP_TABLE default\n";
        for (std::size_t n = 0; n < plane; ++n) os << format_value(dense[n]) << ((n + 1) % h.nx == 0 ? "\n" : " ");
        text = os.str();
        return {text.begin(), text.end()};
    }

    // 16-bit binary graymap, big-endian samples; 0 marks voxels without data.
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (float v : dense)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    text = "P5\n" + std::to_string(h.nx) + " " + std::to_string(h.ny) + "\n65535\n";
    std::vector<std::uint8_t> out(text.begin(), text.end());
    for (float v : dense) {
        std::uint16_t g = 0;
        if (std::isfinite(v))
            g = hi > lo ? static_cast<std::uint16_t>(1 + std::lround((v - lo) / (hi - lo) * 65534.0)) : 65535;
        out.push_back(static_cast<std::uint8_t>(g >> 8));
        out.push_back(static_cast<std::uint8_t>(g & 0xFF));
    }
    return out;
}

}  // namespace irmap
