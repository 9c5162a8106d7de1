#include "irmap/config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

namespace irmap {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep))
        if (auto t = trim(item); !t.empty()) out.push_back(std::move(t));
    return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    fail(ErrorKind::Config, "key '" + key + "': " + why);
}

double as_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || end != v.data() + v.size() || !std::isfinite(out)) bad(key, "expected a number, got '" + v + "'");
    return out;
}

long long as_integer(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || end != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
    return out;
}

int as_int(const std::string& key, const std::string& v) {
    const long long n = as_integer(key, v);
    if (n < -(1LL << 30) || n > (1LL << 30)) bad(key, "integer out of range");
    return static_cast<int>(n);
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || end != v.data() + v.size()) bad(key, "expected an unsigned integer, got '" + v + "'");
    return out;
}

fs::path existing(const std::string& key, const std::string& v, const fs::path& base) {
    fs::path p = fs::path(v).is_absolute() ? fs::path(v) : base / v;
    if (!fs::exists(p)) fail(ErrorKind::Config, "key '" + key + "': path not found: " + p.string());
    return p;
}

KeyValues from_manifest(const std::string& text, fs::path& base_dir) {
    const auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.contains("parameters") || !doc["parameters"].is_object())
        fail(ErrorKind::Config, "manifest has no parameters object");
    KeyValues kv;
    for (const auto& [k, v] : doc["parameters"].items()) {
        if (!v.is_string()) fail(ErrorKind::Config, "manifest parameter '" + k + "' is not a string");
        kv[k] = v.get<std::string>();
    }
    if (doc.contains("base_dir") && doc["base_dir"].is_string()) base_dir = doc["base_dir"].get<std::string>();
    return kv;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail(ErrorKind::Config, "line " + std::to_string(n) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) fail(ErrorKind::Config, "line " + std::to_string(n) + ": empty key");
        if (!kv.emplace(key, value).second)
            fail(ErrorKind::Config, "line " + std::to_string(n) + ": duplicate key '" + key + "'");
    }
    return kv;
}

const KeyValues& default_settings() {
    static const KeyValues defaults = [] {
        const CalibrationProfile p;
        const FeatureParams f;
        const ScanParameters s;
        const ThermalParams t;
        const RenderOptions r;
        const SimulationSpec sim;
        const PixelGridFrame reg;
        const auto num = [](double v) {
            char buf[32];
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, res.ptr);
        };
        return KeyValues{
            {"source", "simulation"},
            {"frames_dir", ""},
            {"stl", ""},
            {"correspondences", ""},
            {"out", "irmap.irvx"},
            {"layers", ""},
            {"features", "all"},
            {"jobs", "1"},
            {"seed", "1"},
            {"profile.emissivity_powder", num(p.emissivity_powder)},
            {"profile.emissivity_printed", num(p.emissivity_printed)},
            {"profile.window_transmission", num(p.window_transmission)},
            {"profile.reflected_temperature_c", num(p.reflected_temperature_c)},
            {"profile.window_temperature_c", ""},
            {"profile.model_a", num(p.model.a_um)},
            {"profile.model_b", num(p.model.b_umk)},
            {"profile.model_c", num(p.model.c_counts)},
            {"feature.offset_frames", std::to_string(f.offset_frames)},
            {"feature.cooling_window", std::to_string(f.cooling_window)},
            {"feature.prescan_cap", std::to_string(f.prescan_cap)},
            {"feature.mask_sigma", num(f.mask_sigma)},
            {"feature.blob_sigma", num(f.blob_sigma)},
            {"feature.dilation_radius", std::to_string(f.dilation_radius)},
            {"feature.activity_threshold", ""},
            {"feature.melt_threshold", ""},
            {"feature.spatter_noise_k", num(f.spatter_noise_k)},
            {"feature.spatter_min_isotropy", num(f.spatter_min_isotropy)},
            {"feature.spatter_roi_margin", std::to_string(f.spatter_roi_margin)},
            {"registration.origin_x", std::to_string(reg.width / 2)},
            {"registration.origin_y", std::to_string(reg.height / 2)},
            {"registration.pitch_um", num(reg.pitch_um)},
            {"registration.width", std::to_string(reg.width)},
            {"registration.height", std::to_string(reg.height)},
            {"scan.speed_mm_s", num(s.scan_speed_mm_s)},
            {"scan.hatch_um", num(s.hatch_um)},
            {"scan.stripe_width_mm", num(s.stripe_width_mm)},
            {"scan.stripe_overlap_mm", num(s.stripe_overlap_mm)},
            {"scan.rotation_deg", num(s.rotation_per_layer_deg)},
            {"scan.layer_thickness_um", num(s.layer_thickness_um)},
            {"sim.fps", num(r.fps)},
            {"sim.prescan_frames", std::to_string(r.prescan_frames)},
            {"sim.start_phase", num(r.start_phase)},
            {"sim.cooldown_frames", std::to_string(r.cooldown_frames)},
            {"sim.noise_fraction", num(sim.noise_fraction)},
            {"sim.ambient_c", num(t.ambient_c)},
            {"sim.ambient_gradient_c", num(t.ambient_gradient_c)},
            {"sim.peak_c", num(t.peak_c)},
            {"sim.footprint_px", num(t.footprint_px)},
            {"sim.decay_s", num(t.decay_s)},
            {"sim.residual_c", num(t.residual_c)},
            {"sim.residual_footprint_px", num(t.residual_footprint_px)},
            {"sim.residual_decay_s", num(t.residual_decay_s)},
            {"sim.spatters_per_layer", std::to_string(sim.spatters_per_layer)},
            {"sim.spatter_delta_c", num(sim.spatter_delta_c)},
            {"sim.spatter_decay_s", num(sim.spatter_decay_s)},
            {"sim.spatter_csv", ""},
            {"sim.homography", "1,0,0,0,1,0,0,0,1"},
        };
    }();
    return defaults;
}

std::pair<int, int> parse_layer_range(const std::string& text) {
    const auto dots = text.find("..");
    const std::string a = trim(text.substr(0, dots));
    const std::string b = dots == std::string::npos ? a : trim(text.substr(dots + 2));
    const int lo = as_int("layers", a), hi = as_int("layers", b);
    if (lo < 0 || hi < lo) bad("layers", "expected a..b with 0 <= a <= b, got '" + text + "'");
    return {lo, hi};
}

std::vector<FeatureId> parse_feature_list(const std::string& text) {
    if (trim(text) == "all") return {kAllFeatures.begin(), kAllFeatures.end()};
    std::vector<FeatureId> out;
    for (const auto& name : split(text, ',')) {
        const auto id = feature_from_name(name);
        if (!id) bad("features", "unknown feature '" + name + "'");
        if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    if (out.empty()) bad("features", "no features selected");
    std::sort(out.begin(), out.end());
    return out;
}

RunConfig make_config(const KeyValues& values, const fs::path& base_dir) {
    KeyValues kv = default_settings();
    for (const auto& [k, v] : values) {
        if (!kv.contains(k)) fail(ErrorKind::Config, "unknown key '" + k + "'");
        kv[k] = v;
    }
    RunConfig c;
    c.resolved = kv;
    c.base_dir = fs::absolute(base_dir).lexically_normal();
    const auto get = [&](const char* k) -> const std::string& { return kv.at(k); };
    const auto dbl = [&](const char* k) { return as_double(k, get(k)); };
    const auto integer = [&](const char* k) { return as_int(k, get(k)); };

    if (get("source") == "simulation")
        c.source = FrameSource::Simulation;
    else if (get("source") == "files")
        c.source = FrameSource::Files;
    else
        bad("source", "expected 'simulation' or 'files'");
    if (!get("frames_dir").empty()) c.frames_dir = fs::path(get("frames_dir")).is_absolute() ? fs::path(get("frames_dir")) : base_dir / get("frames_dir");
    if (c.source == FrameSource::Files) {
        if (!c.frames_dir) bad("frames_dir", "required when source = files");
        c.frames_dir = existing("frames_dir", get("frames_dir"), base_dir);
    }
    for (const auto& s : split(get("stl"), ',')) c.stl.push_back(existing("stl", s, base_dir));
    if (c.stl.empty()) bad("stl", "at least one STL file is required");
    if (!get("correspondences").empty()) c.correspondences = existing("correspondences", get("correspondences"), base_dir);
    c.out = get("out");
    if (c.out.empty()) bad("out", "output path is empty");
    if (!c.out.is_absolute()) c.out = base_dir / c.out;
    if (!get("layers").empty()) c.layers = parse_layer_range(get("layers"));
    c.selected = parse_feature_list(get("features"));
    c.jobs = integer("jobs");
    if (c.jobs < 1 || c.jobs > 256) bad("jobs", "must lie in 1..256");
    c.seed = as_u64("seed", get("seed"));

    c.profile.emissivity_powder = dbl("profile.emissivity_powder");
    c.profile.emissivity_printed = dbl("profile.emissivity_printed");
    c.profile.window_transmission = dbl("profile.window_transmission");
    c.profile.reflected_temperature_c = dbl("profile.reflected_temperature_c");
    if (!get("profile.window_temperature_c").empty())
        c.profile.window_temperature_c = dbl("profile.window_temperature_c");
    c.profile.model.a_um = dbl("profile.model_a");
    c.profile.model.b_umk = dbl("profile.model_b");
    c.profile.model.c_counts = dbl("profile.model_c");

    auto& f = c.features;
    f.offset_frames = integer("feature.offset_frames");
    f.cooling_window = integer("feature.cooling_window");
    f.prescan_cap = integer("feature.prescan_cap");
    f.mask_sigma = dbl("feature.mask_sigma");
    f.blob_sigma = dbl("feature.blob_sigma");
    f.dilation_radius = integer("feature.dilation_radius");
    if (!get("feature.activity_threshold").empty()) f.activity_threshold = dbl("feature.activity_threshold");
    if (!get("feature.melt_threshold").empty()) f.melt_threshold = dbl("feature.melt_threshold");
    f.spatter_noise_k = dbl("feature.spatter_noise_k");
    f.spatter_min_isotropy = dbl("feature.spatter_min_isotropy");
    f.spatter_roi_margin = integer("feature.spatter_roi_margin");

    c.registration.origin_pixel = {integer("registration.origin_x"), integer("registration.origin_y")};
    c.registration.pitch_um = dbl("registration.pitch_um");
    c.registration.width = integer("registration.width");
    c.registration.height = integer("registration.height");

    auto& sim = c.simulation;
    sim.scan.scan_speed_mm_s = dbl("scan.speed_mm_s");
    sim.scan.hatch_um = dbl("scan.hatch_um");
    sim.scan.stripe_width_mm = dbl("scan.stripe_width_mm");
    sim.scan.stripe_overlap_mm = dbl("scan.stripe_overlap_mm");
    sim.scan.rotation_per_layer_deg = dbl("scan.rotation_deg");
    sim.scan.layer_thickness_um = dbl("scan.layer_thickness_um");
    sim.render.width = c.registration.width;
    sim.render.height = c.registration.height;
    sim.render.fps = dbl("sim.fps");
    sim.render.prescan_frames = integer("sim.prescan_frames");
    sim.render.start_phase = dbl("sim.start_phase");
    sim.render.cooldown_frames = integer("sim.cooldown_frames");
    sim.render.seed = c.seed;
    sim.noise_fraction = dbl("sim.noise_fraction");
    if (sim.noise_fraction < 0.0 || sim.noise_fraction > 1.0) bad("sim.noise_fraction", "must lie in [0, 1]");
    sim.thermal.ambient_c = dbl("sim.ambient_c");
    sim.thermal.ambient_gradient_c = dbl("sim.ambient_gradient_c");
    sim.thermal.peak_c = dbl("sim.peak_c");
    sim.thermal.footprint_px = dbl("sim.footprint_px");
    sim.thermal.decay_s = dbl("sim.decay_s");
    sim.thermal.residual_c = dbl("sim.residual_c");
    sim.thermal.residual_footprint_px = dbl("sim.residual_footprint_px");
    sim.thermal.residual_decay_s = dbl("sim.residual_decay_s");
    sim.spatters_per_layer = integer("sim.spatters_per_layer");
    if (sim.spatters_per_layer < 0 || sim.spatters_per_layer > 1000) bad("sim.spatters_per_layer", "must lie in 0..1000");
    sim.spatter_delta_c = dbl("sim.spatter_delta_c");
    sim.spatter_decay_s = dbl("sim.spatter_decay_s");
    if (!get("sim.spatter_csv").empty()) sim.spatter_csv = existing("sim.spatter_csv", get("sim.spatter_csv"), base_dir);
    const auto h = split(get("sim.homography"), ',');
    if (h.size() != 9) bad("sim.homography", "expected 9 comma-separated coefficients");
    Homography::Matrix m{};
    for (int n = 0; n < 9; ++n) m[n / 3][n % 3] = as_double("sim.homography", h[n]);

    // Module validators report ranges; surface them as configuration errors.
    try {
        sim.distortion = Homography(m);
        c.profile.validate();
        f.validate();
        c.registration.validate();
        sim.scan.validate();
        sim.thermal.validate();
        sim.render.validate();
        if (sim.spatter_delta_c <= 0.0 || sim.spatter_decay_s <= 0.0)
            fail(ErrorKind::Parameter, "spatter rise and decay must be positive");
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(ErrorKind::Config, e.what());
    }
    return c;
}

RunConfig load_config(const fs::path& path, const KeyValues& overrides) {
    if (!fs::exists(path)) fail(ErrorKind::Config, "config not found: " + path.string());
    const auto bytes = read_file(path);
    const std::string text(bytes.begin(), bytes.end());
    fs::path base = path.parent_path();
    KeyValues kv = path.extension() == ".json" ? from_manifest(text, base) : parse_key_values(text);
    // A `profile` key names a key-value file of profile.* entries.
    if (auto it = kv.find("profile"); it != kv.end()) {
        const fs::path profile_path = existing("profile", it->second, base);
        const auto pbytes = read_file(profile_path);
        for (const auto& [k, v] : parse_key_values(std::string(pbytes.begin(), pbytes.end()))) {
            if (!k.starts_with("profile.")) fail(ErrorKind::Config, "profile file key '" + k + "' lacks the profile. prefix");
            kv.try_emplace(k, v);
        }
        kv.erase(it);
    }
    for (const auto& [k, v] : overrides) kv[k] = v;
    return make_config(kv, base);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace irmap
