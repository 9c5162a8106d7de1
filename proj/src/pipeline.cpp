#include "irmap/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <new>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>

#include "irmap/frame_io.hpp"

namespace irmap {

namespace fs = std::filesystem;

namespace {

int cells(double span_mm, double pitch_um) {
    return std::max(1, static_cast<int>(std::ceil(span_mm * 1000.0 / pitch_um - 1e-9)));
}

std::vector<SpatterEvent> spatters_from_csv(const fs::path& path, int layer) {
    const auto bytes = read_file(path);
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    std::vector<SpatterEvent> out;
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream row(line);
        int l = 0;
        SpatterEvent e;
        if (!(row >> l >> e.emit_frame >> e.landing.x >> e.landing.y >> e.peak_delta_c >> e.decay_s))
            fail(ErrorKind::Parse, path.string() + " line " + std::to_string(n) +
                                       ": expected layer,emit_frame,x,y,delta_c,decay_s");
        if (l == layer) out.push_back(e);
    }
    return out;
}

Error with_layer(const Error& e, int layer) {
    return Error(e.kind(), "layer " + std::to_string(layer) + ": " + e.detail());
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::Invariant, "SHA-256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

PartSet build_parts(const RunConfig& config) {
    std::vector<TriangleMesh> meshes;
    PartSet set;
    BoundingBox all{{INFINITY, INFINITY, INFINITY}, {-INFINITY, -INFINITY, -INFINITY}};
    for (std::size_t n = 0; n < config.stl.size(); ++n) {
        const auto& path = config.stl[n];
        TriangleMesh mesh;
        try {
            mesh = parse_stl(read_file(path));
        } catch (const Error& e) {
            throw Error(e.kind(), path.string() + ": " + e.detail());
        }
        require(!mesh.triangles.empty(), ErrorKind::Format, path.string() + ": no triangles");
        const auto bb = mesh.bounds();
        all.min = {std::min(all.min.x, bb.min.x), std::min(all.min.y, bb.min.y), std::min(all.min.z, bb.min.z)};
        all.max = {std::max(all.max.x, bb.max.x), std::max(all.max.y, bb.max.y), std::max(all.max.z, bb.max.z)};
        meshes.push_back(std::move(mesh));
        set.parts.push_back({static_cast<std::uint16_t>(n + 1), path.stem().string()});
    }
    require(all.max.z > 0.0, ErrorKind::Format, "parts lie below the build plate");
    const VoxelPitch pitch{config.registration.pitch_um, config.registration.pitch_um,
                           config.simulation.scan.layer_thickness_um};
    set.voxels = voxelize_parts(meshes, pitch, {all.min.x, all.min.y}, cells(all.max.x - all.min.x, pitch.x_um),
                                cells(all.max.y - all.min.y, pitch.y_um), cells(all.max.z, pitch.z_um));
    return set;
}

std::vector<int> run_layers(const RunConfig& config, const VoxelMesh& voxels) {
    int lo = 0, hi = voxels.nz() - 1;
    if (config.layers) {
        std::tie(lo, hi) = *config.layers;
        if (hi >= voxels.nz())
            fail(ErrorKind::Config, "layer range ends at " + std::to_string(hi) + " but the build has " +
                                        std::to_string(voxels.nz()) + " layers");
    }
    std::vector<int> out;
    for (int l = lo; l <= hi; ++l) out.push_back(l);
    return out;
}

SimulatedLayer simulate_layer(const RunConfig& config, const VoxelMesh& voxels, int layer) {
    const auto& sim = config.simulation;
    SimulatedLayer out;
    out.mask = layer_mask(voxels, layer, config.registration);
    out.path = generate_scan_path(out.mask, sim.scan, layer);
    RenderOptions render = sim.render;
    render.noise_sigma_counts = sim.noise_fraction * camera_span_counts(config.profile);
    render.seed = config.seed;
    std::vector<SpatterEvent> spatters;
    if (sim.spatter_csv) spatters = spatters_from_csv(*sim.spatter_csv, layer);
    if (sim.spatters_per_layer > 0 && !out.path.samples.empty()) {
        const int first = render.prescan_frames + 2;
        const int last = render.prescan_frames + std::max(0, static_cast<int>(std::ceil(out.path.duration_s * render.fps)) - 3);
        auto extra = schedule_spatters(out.mask, sim.spatters_per_layer, first, std::max(first, last),
                                       sim.spatter_delta_c, sim.spatter_decay_s, config.seed, render.width,
                                       render.height);
        spatters.insert(spatters.end(), extra.begin(), extra.end());
    }
    out.rendered = render_frames(out.path, out.mask, sim.thermal, spatters, sim.distortion, render, config.profile);
    return out;
}

LayerStack acquire_layer(const RunConfig& config, const VoxelMesh& voxels, int layer) {
    if (config.source == FrameSource::Files) return read_layer_frames(*config.frames_dir, layer);
    return std::move(simulate_layer(config, voxels, layer).rendered.stack);
}

Homography correction_homography(const RunConfig& config) {
    if (!config.correspondences) return {};
    const auto bytes = read_file(*config.correspondences);
    const auto corr = parse_correspondences(std::string(bytes.begin(), bytes.end()));
    const Homography image_to_world = estimate_homography(corr).h;
    const auto& reg = config.registration;
    const double k = 1000.0 / reg.pitch_um;
    const Homography world_to_pixel(Homography::Matrix{{{k, 0.0, static_cast<double>(reg.origin_pixel.x)},
                                                        {0.0, k, static_cast<double>(reg.origin_pixel.y)},
                                                        {0.0, 0.0, 1.0}}});
    return world_to_pixel.compose(image_to_world);
}

LayerStack correct_stack(const LayerStack& raw, const Homography& raw_to_corrected) {
    if (raw_to_corrected.is_identity()) return raw;
    LayerStack out = raw;
    for (auto& frame : out.frames) {
        const WarpedFrame w = warp_frame(to_double(frame), raw_to_corrected, frame.width(), frame.height());
        for (std::size_t i = 0; i < frame.size(); ++i)
            frame[i] = w.valid[i] ? static_cast<std::uint16_t>(std::clamp(std::lround(w.values[i]), 0L, 65535L)) : 0;
    }
    return out;
}

LayerOutcome process_layer(const RunConfig& config, const VoxelMesh& voxels, const Homography& correction,
                           const LayerStack& raw, int layer) {
    const auto start = std::chrono::steady_clock::now();
    LayerOutcome out;
    out.layer = layer;
    out.frames = raw.frame_count();
    out.width = raw.width();
    out.height = raw.height();
    const LayerMask mask = layer_mask(voxels, layer, config.registration);
    out.part_pixels = mask.size();
    require(raw.width() == config.registration.width && raw.height() == config.registration.height,
            ErrorKind::Format, "frame size differs from the registration frame");
    std::vector<FeatureMap> maps;
    if (!mask.empty()) {
        const LayerStack stack = correct_stack(raw, correction);
        const Mask part = mask.to_mask();
        LayerFeatures lf = extract_layer(stack, config.profile, config.features, &part);
        out.spatter_events = lf.spatter.size();
        maps = std::move(lf.maps);
    }
    for (FeatureId id : config.selected) {
        FeatureBlock block{static_cast<std::uint32_t>(layer), static_cast<std::uint8_t>(id), {}};
        for (const auto& m : maps) {
            if (m.id != id) continue;
            for (const auto& v : map_layer_feature(m.grid, m.valid_mask(), mask))
                block.entries.push_back({v.index, static_cast<float>(v.value)});
        }
        out.blocks.push_back(std::move(block));
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

RunResult run_pipeline(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const PartSet parts = build_parts(config);
    const std::vector<int> layers = run_layers(config, parts.voxels);
    const Homography correction = correction_homography(config);

    RunResult result;
    result.layers.resize(layers.size());
    std::vector<std::exception_ptr> errors(layers.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t n = next++; n < layers.size(); n = next++) {
            try {
                try {
                    const LayerStack raw = acquire_layer(config, parts.voxels, layers[n]);
                    result.layers[n] = process_layer(config, parts.voxels, correction, raw, layers[n]);
                } catch (const Error& e) {
                    throw with_layer(e, layers[n]);
                }
            } catch (...) {
                errors[n] = std::current_exception();
            }
        }
    };
    const int threads = std::min<int>(config.jobs, static_cast<int>(layers.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    auto& store = result.store;
    store.header.pitch = parts.voxels.pitch();
    store.header.nx = static_cast<std::uint32_t>(parts.voxels.nx());
    store.header.ny = static_cast<std::uint32_t>(parts.voxels.ny());
    store.header.nz = static_cast<std::uint32_t>(parts.voxels.nz());
    store.header.parts = parts.parts;
    std::vector<LayerFrames> frames;
    for (const auto& l : result.layers) {
        store.blocks.insert(store.blocks.end(), l.blocks.begin(), l.blocks.end());
        frames.push_back({l.width, l.height, static_cast<std::size_t>(l.frames)});
    }
    result.store_bytes = write_store(store);
    result.reduction = reduction_report(frames, result.store_bytes.size());

    using nlohmann::ordered_json;
    ordered_json manifest;
    manifest["format"] = "irmap-run-manifest";
    manifest["version"] = 1;
    manifest["base_dir"] = config.base_dir.string();
    ordered_json params = ordered_json::object();
    for (const auto& [k, v] : config.resolved)
        if (k != "out") params[k] = v;
    manifest["parameters"] = params;
    ordered_json inputs = ordered_json::array();
    const auto hash_input = [&](const std::string& role, const fs::path& p) {
        inputs.push_back({{"role", role}, {"file", p.filename().string()}, {"sha256", sha256_hex(read_file(p))}});
    };
    for (const auto& p : config.stl) hash_input("stl", p);
    if (config.correspondences) hash_input("correspondences", *config.correspondences);
    if (config.simulation.spatter_csv) hash_input("spatter_csv", *config.simulation.spatter_csv);
    if (config.source == FrameSource::Files)
        for (int l : layers) hash_input("frames", layer_frames_path(*config.frames_dir, l));
    manifest["inputs"] = inputs;
    manifest["grid"] = {{"nx", store.header.nx},
                        {"ny", store.header.ny},
                        {"nz", store.header.nz},
                        {"pitch_um", {store.header.pitch.x_um, store.header.pitch.y_um, store.header.pitch.z_um}}};
    ordered_json layer_list = ordered_json::array();
    for (const auto& l : result.layers) {
        ordered_json entries = ordered_json::object();
        for (const auto& b : l.blocks) entries[feature_name(static_cast<FeatureId>(b.feature_id))] = b.entries.size();
        layer_list.push_back({{"layer", l.layer},
                              {"frames", l.frames},
                              {"width", l.width},
                              {"height", l.height},
                              {"part_pixels", l.part_pixels},
                              {"spatter_events", l.spatter_events},
                              {"entries", entries}});
    }
    manifest["layers"] = layer_list;
    manifest["store"] = {{"file", config.out.filename().string()},
                         {"bytes", result.store_bytes.size()},
                         {"sha256", sha256_hex(result.store_bytes)}};
    manifest["reduction"] = {{"raw_bytes", result.reduction.raw_bytes},
                             {"stored_bytes", result.reduction.stored_bytes},
                             {"ratio", result.reduction.ratio},
                             {"meets_claim", result.reduction.meets_claim}};
    manifest["timing_file"] = config.out.filename().string() + ".timing.json";
    result.manifest = manifest.dump(2) + "\n";

    ordered_json timing;
    ordered_json per_layer = ordered_json::array();
    for (const auto& l : result.layers) per_layer.push_back({{"layer", l.layer}, {"seconds", l.seconds}});
    timing["layers"] = per_layer;
    timing["jobs"] = config.jobs;
    timing["total_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.timing = timing.dump(2) + "\n";

    write_file(config.out, result.store_bytes);
    const std::string base = config.out.string();
    write_file(base + ".manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(result.manifest.data()),
                                                  result.manifest.size()));
    write_file(base + ".timing.json",
               std::span(reinterpret_cast<const std::uint8_t*>(result.timing.data()), result.timing.size()));
    return result;
}

void simulate_to_directory(const RunConfig& config, const fs::path& dir) {
    const PartSet parts = build_parts(config);
    for (int layer : run_layers(config, parts.voxels)) {
        try {
            SimulatedLayer sim = simulate_layer(config, parts.voxels, layer);
            write_layer_frames(dir, sim.rendered.stack);
        } catch (const Error& e) {
            throw with_layer(e, layer);
        }
    }
}

int exit_code_for(const std::exception& e) noexcept {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
            case ErrorKind::Config: return 2;
            case ErrorKind::Invariant: return 4;
            default: return 3;
        }
    }
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
    return 4;
}

}  // namespace irmap
