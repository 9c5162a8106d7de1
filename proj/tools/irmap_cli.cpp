#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "irmap/config.hpp"
#include "irmap/frame_io.hpp"
#include "irmap/pipeline.hpp"
#include "irmap/store.hpp"

namespace fs = std::filesystem;
using namespace irmap;

namespace {

struct CommonFlags {
    std::string config;
    std::string layers;
    std::string features;
    int jobs = 0;
    std::string seed;
    std::string out;

    void attach(CLI::App* app, bool need_config) {
        auto* opt = app->add_option("--config", config, "key-value run config or run manifest");
        if (need_config) opt->required();
        app->add_option("--layers", layers, "layer range a..b");
        app->add_option("--features", features, "comma-separated feature names or 'all'");
        app->add_option("--jobs", jobs, "worker threads");
        app->add_option("--seed", seed, "64-bit seed");
        app->add_option("--out", out, "output path");
    }

    KeyValues overrides() const {
        KeyValues kv;
        if (!layers.empty()) kv["layers"] = layers;
        if (!features.empty()) kv["features"] = features;
        if (jobs != 0) kv["jobs"] = std::to_string(jobs);
        if (!seed.empty()) kv["seed"] = seed;
        if (!out.empty()) kv["out"] = fs::absolute(out).string();
        return kv;
    }

    RunConfig load() const { return load_config(config, overrides()); }
};

std::vector<std::vector<double>> read_csv_numbers(const fs::path& path, std::size_t columns) {
    const auto bytes = read_file(path);
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    std::vector<std::vector<double>> rows;
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream row(line);
        std::vector<double> v(columns);
        for (auto& x : v)
            if (!(row >> x))
                fail(ErrorKind::Parse, path.string() + " line " + std::to_string(n) + ": expected " +
                                           std::to_string(columns) + " numbers");
        rows.push_back(std::move(v));
    }
    return rows;
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    write_file(out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"irmap: infrared layer frames to per-voxel feature maps"};
    app.require_subcommand(1);

    CommonFlags spatial_flags, thermal_flags, vox_flags, sim_flags, extract_flags;
    std::string corr_path;
    auto* spatial = app.add_subcommand("calibrate-spatial", "estimate the raw-to-plate homography");
    spatial_flags.attach(spatial, false);
    spatial->add_option("--correspondences", corr_path, "CSV rows wx,wy,ix,iy (plate mm, raw pixels)");

    std::string samples_path, glass_path, surface = "unity";
    auto* thermal = app.add_subcommand("calibrate-thermal", "fit emissivity and window transmission");
    thermal_flags.attach(thermal, false);
    thermal->add_option("--samples", samples_path, "CSV rows counts,reference_c for the emissivity fit");
    thermal->add_option("--glass", glass_path, "CSV rows counts_with_glass,counts_without_glass,reference_c");
    thermal->add_option("--surface-emissivity", surface, "surface under the glass: unity, powder, printed or a number");

    auto* vox = app.add_subcommand("voxelize", "voxelize the run's STL parts into a geometry store");
    vox_flags.attach(vox, true);

    auto* sim = app.add_subcommand("simulate", "render simulated layer frame files");
    sim_flags.attach(sim, true);

    auto* extract = app.add_subcommand("extract", "run correction, extraction and voxel mapping");
    extract_flags.attach(extract, true);

    std::string store_path, feature_name_arg, format = "csv", export_out;
    unsigned layer = 0;
    auto* exp = app.add_subcommand("export", "export one layer/feature grid");
    exp->add_option("--store", store_path, "IRVX store")->required();
    exp->add_option("--layer", layer, "layer index")->required();
    exp->add_option("--feature", feature_name_arg, "feature name")->required();
    exp->add_option("--format", format, "csv, vtk or pgm")->check(CLI::IsMember({"csv", "vtk", "pgm"}));
    exp->add_option("--out", export_out, "output file (stdout if omitted)");

    std::string report_store;
    auto* report = app.add_subcommand("report", "summarize a store and its run manifest");
    report->add_option("--store", report_store, "IRVX store")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        using nlohmann::ordered_json;
        if (spatial->parsed()) {
            fs::path path = corr_path;
            if (path.empty()) {
                const RunConfig cfg = spatial_flags.load();
                if (!cfg.correspondences) fail(ErrorKind::Config, "no correspondence file given");
                path = *cfg.correspondences;
            }
            if (!fs::exists(path)) fail(ErrorKind::Config, "correspondence file not found: " + path.string());
            const auto bytes = read_file(path);
            const auto corr = parse_correspondences(std::string(bytes.begin(), bytes.end()));
            const auto est = estimate_homography(corr);
            ordered_json j;
            j["points"] = corr.size();
            j["homography"] = est.h.matrix();
            j["max_residual_mm"] = est.max_residual;
            emit(j.dump(2) + "\n", spatial_flags.out);
        } else if (thermal->parsed()) {
            CalibrationProfile profile;
            if (!thermal_flags.config.empty()) profile = thermal_flags.load().profile;
            if (samples_path.empty() && glass_path.empty()) fail(ErrorKind::Config, "give --samples and/or --glass");
            ordered_json j;
            if (!samples_path.empty()) {
                std::vector<CountSample> samples;
                for (const auto& r : read_csv_numbers(samples_path, 2)) samples.push_back({r[0], r[1]});
                const FitResult fit = fit_emissivity(samples, profile);
                j["emissivity"] = {{"value", fit.value}, {"residual_sd_c", fit.residual_sd_c}};
            }
            if (!glass_path.empty()) {
                std::vector<GlassPair> pairs;
                for (const auto& r : read_csv_numbers(glass_path, 3)) pairs.push_back({r[0], r[1], r[2]});
                SurfaceClass cls = SurfaceClass::unity();
                if (surface == "powder")
                    cls = SurfaceClass::powder();
                else if (surface == "printed")
                    cls = SurfaceClass::as_printed();
                else if (surface != "unity")
                    cls = SurfaceClass::custom(std::stod(surface));
                const FitResult fit = fit_window_transmission(pairs, profile, cls);
                j["window_transmission"] = {{"value", fit.value}, {"residual_sd_c", fit.residual_sd_c}};
            }
            emit(j.dump(2) + "\n", thermal_flags.out);
        } else if (vox->parsed()) {
            const RunConfig cfg = vox_flags.load();
            const PartSet parts = build_parts(cfg);
            VoxelFeatureStore store;
            store.header.pitch = parts.voxels.pitch();
            store.header.nx = static_cast<std::uint32_t>(parts.voxels.nx());
            store.header.ny = static_cast<std::uint32_t>(parts.voxels.ny());
            store.header.nz = static_cast<std::uint32_t>(parts.voxels.nz());
            store.header.parts = parts.parts;
            // Geometry is cached as feature 0 with the part id as value.
            for (int k = 0; k < parts.voxels.nz(); ++k) {
                FeatureBlock block{static_cast<std::uint32_t>(k), 0, {}};
                for (int j = 0; j < parts.voxels.ny(); ++j)
                    for (int i = 0; i < parts.voxels.nx(); ++i)
                        if (const auto id = parts.voxels.part_at(i, j, k); id != 0)
                            block.entries.push_back({parts.voxels.linear_index(i, j, k), static_cast<float>(id)});
                store.blocks.push_back(std::move(block));
            }
            write_file(cfg.out, write_store(store));
            std::printf("voxels %d x %d x %d, occupied %zu, exact %s -> %s\n", parts.voxels.nx(), parts.voxels.ny(),
                        parts.voxels.nz(), parts.voxels.occupied_count(), parts.voxels.exact() ? "yes" : "no",
                        cfg.out.string().c_str());
        } else if (sim->parsed()) {
            const RunConfig cfg = sim_flags.load();
            const fs::path dir = sim_flags.out.empty() ? (cfg.frames_dir ? *cfg.frames_dir : fs::path("frames"))
                                                       : fs::path(sim_flags.out);
            simulate_to_directory(cfg, dir);
            std::printf("frames written to %s\n", dir.string().c_str());
        } else if (extract->parsed()) {
            const RunConfig cfg = extract_flags.load();
            const RunResult r = run_pipeline(cfg);
            std::printf("layers %zu, store %zu bytes, reduction %.4f%s -> %s\n", r.layers.size(), r.store_bytes.size(),
                        r.reduction.ratio, r.reduction.meets_claim ? "" : " (below 0.99)", cfg.out.string().c_str());
        } else if (exp->parsed()) {
            const auto id = feature_from_name(feature_name_arg);
            if (!id) fail(ErrorKind::Config, "unknown feature '" + feature_name_arg + "'");
            const VoxelFeatureStore store = read_store(read_file(store_path));
            const ExportFormat f = format == "csv" ? ExportFormat::Csv
                                   : format == "vtk" ? ExportFormat::Vtk
                                                     : ExportFormat::PgmHeatmap;
            const auto bytes = export_grid(store, layer, static_cast<std::uint8_t>(*id), f);
            if (export_out.empty())
                std::cout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            else
                write_file(export_out, bytes);
        } else if (report->parsed()) {
            const auto bytes = read_file(report_store);
            const VoxelFeatureStore store = read_store(bytes);
            const auto& h = store.header;
            std::printf("grid %u x %u x %u at %.0f x %.0f x %.0f um, %zu parts, %zu blocks, %zu bytes\n", h.nx, h.ny,
                        h.nz, h.pitch.x_um, h.pitch.y_um, h.pitch.z_um, h.parts.size(), store.blocks.size(),
                        bytes.size());
            std::map<std::uint8_t, std::pair<std::size_t, std::size_t>> per_feature;
            for (const auto& b : store.blocks) {
                per_feature[b.feature_id].first += 1;
                per_feature[b.feature_id].second += b.entries.size();
            }
            for (const auto& [fid, v] : per_feature) {
                const char* name = fid == 0 ? "geometry" : feature_name(static_cast<FeatureId>(fid));
                std::printf("  %-20s %4zu layers %9zu entries\n", name, v.first, v.second);
            }
            const fs::path manifest = report_store + ".manifest.json";
            if (fs::exists(manifest)) {
                const auto mbytes = read_file(manifest);
                const auto j = nlohmann::json::parse(mbytes.begin(), mbytes.end());
                const auto& red = j.at("reduction");
                std::printf("reduction: raw %llu bytes, stored %llu bytes, ratio %.5f\n",
                            red.at("raw_bytes").get<unsigned long long>(),
                            red.at("stored_bytes").get<unsigned long long>(), red.at("ratio").get<double>());
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "irmap: %s\n", e.what());
        return exit_code_for(e);
    }
    return 0;
}
