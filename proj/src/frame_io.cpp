#include "irmap/frame_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "irmap/config.hpp"

namespace irmap {

static_assert(std::endian::native == std::endian::little, "frame files are written in host byte order");

namespace {

constexpr std::uint32_t kFramesVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8 + 4 + 4 + 4;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_frames(const LayerStack& stack) {
    stack.validate();
    const auto w = static_cast<std::uint32_t>(stack.width()), h = static_cast<std::uint32_t>(stack.height());
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + std::size_t{w} * h * 2 * stack.frames.size());
    out.insert(out.end(), {'I', 'R', 'F', 'S'});
    put(out, kFramesVersion);
    put(out, w);
    put(out, h);
    put(out, stack.fps);
    put(out, static_cast<std::int32_t>(stack.layer));
    put(out, static_cast<std::int32_t>(stack.recoat_boundary));
    put(out, static_cast<std::uint32_t>(stack.frames.size()));
    for (const auto& f : stack.frames) {
        const auto v = f.values();
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        out.insert(out.end(), p, p + v.size_bytes());
    }
    return out;
}

LayerStack decode_frames(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "IRFS", 4) != 0) fail(ErrorKind::Format, "missing IRFS magic");
    if (bytes.size() < kHeaderBytes) throw OffsetError(ErrorKind::Truncation, "frame header truncated", bytes.size());
    std::size_t pos = 4;
    const auto version = take<std::uint32_t>(bytes, pos);
    if (version != kFramesVersion) fail(ErrorKind::Format, "unsupported frame container version " + std::to_string(version));
    const auto w = take<std::uint32_t>(bytes, pos), h = take<std::uint32_t>(bytes, pos);
    LayerStack stack;
    stack.fps = take<double>(bytes, pos);
    stack.layer = take<std::int32_t>(bytes, pos);
    stack.recoat_boundary = take<std::int32_t>(bytes, pos);
    const auto count = take<std::uint32_t>(bytes, pos);
    if (w == 0 || h == 0 || w > 65536 || h > 65536) fail(ErrorKind::Format, "frame dimensions out of range");
    const std::uint64_t frame_bytes = std::uint64_t{w} * h * 2;
    if (frame_bytes * count != bytes.size() - pos)
        throw OffsetError(ErrorKind::Truncation,
                          "frame data holds " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
                              std::to_string(frame_bytes * count),
                          pos);
    stack.frames.reserve(count);
    for (std::uint32_t f = 0; f < count; ++f) {
        CountFrame frame(static_cast<int>(w), static_cast<int>(h));
        std::memcpy(frame.values().data(), bytes.data() + pos, frame_bytes);
        pos += frame_bytes;
        stack.frames.push_back(std::move(frame));
    }
    stack.validate();
    return stack;
}

std::filesystem::path layer_frames_path(const std::filesystem::path& dir, int layer) {
    char name[32];
    std::snprintf(name, sizeof name, "layer_%04d.irf", layer);
    return dir / name;
}

void write_layer_frames(const std::filesystem::path& dir, const LayerStack& stack) {
    write_file(layer_frames_path(dir, stack.layer), encode_frames(stack));
}

LayerStack read_layer_frames(const std::filesystem::path& dir, int layer) {
    const auto path = layer_frames_path(dir, layer);
    if (!std::filesystem::exists(path)) fail(ErrorKind::NotFound, "missing frame file " + path.string());
    LayerStack stack = decode_frames(read_file(path));
    if (stack.layer != layer)
        fail(ErrorKind::Format, path.string() + " holds layer " + std::to_string(stack.layer));
    return stack;
}

}  // namespace irmap
