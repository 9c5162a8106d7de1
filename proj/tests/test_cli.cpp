#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "irmap/config.hpp"
#include "irmap/pipeline.hpp"

using namespace irmap;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("irmap_test_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct CliRun {
    int code = -1;
    std::string output;
};

CliRun run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path log = scratch / "cli.log";
    const std::string cmd = std::string("\"") + IRMAP_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.output = read_text(log);
#ifdef WEXITSTATUS
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
    r.code = status;
#endif
    return r;
}

ErrorKind kind_of(auto&& call) {
    try {
        call();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Invariant;
}

}  // namespace

TEST_CASE("key-value parsing") {
    const KeyValues kv = parse_key_values("# comment\n a = 1 \n\nb=two words # trailing\n");
    CHECK(kv.size() == 2);
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("b") == "two words");
    try {
        parse_key_values("a = 1\na = 2\n");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(e.detail().find("line 2") != std::string::npos);
    }
    CHECK(kind_of([] { parse_key_values("just words\n"); }) == ErrorKind::Config);
}

TEST_CASE("run configuration") {
    TempDir dir;
    write_text(dir.path() / "part.stl", "solid x\nendsolid x\n");

    SUBCASE("defaults resolve") {
        const RunConfig c = make_config({{"stl", "part.stl"}}, dir.path());
        REQUIRE(c.stl.size() == 1);
        CHECK(c.stl[0] == dir.path() / "part.stl");
        CHECK(c.selected.size() == kAllFeatures.size());
        CHECK(c.profile.emissivity_powder == 0.63);
        CHECK(c.resolved.size() == default_settings().size());
        CHECK(c.out == dir.path() / "irmap.irvx");
    }
    SUBCASE("errors are configuration errors") {
        CHECK(kind_of([&] { make_config({{"stl", "part.stl"}, {"bogus", "1"}}, dir.path()); }) == ErrorKind::Config);
        CHECK(kind_of([&] { make_config({{"stl", "missing.stl"}}, dir.path()); }) == ErrorKind::Config);
        CHECK(kind_of([&] { make_config({{"stl", "part.stl"}, {"jobs", "many"}}, dir.path()); }) == ErrorKind::Config);
        CHECK(kind_of([&] { make_config({{"stl", "part.stl"}, {"profile.window_transmission", "1.5"}}, dir.path()); }) ==
              ErrorKind::Config);
        CHECK(kind_of([&] { load_config(dir.path() / "nope.conf"); }) == ErrorKind::Config);
    }
    SUBCASE("overrides win over file values") {
        write_text(dir.path() / "run.conf", "stl = part.stl\nseed = 5\n");
        const RunConfig c = load_config(dir.path() / "run.conf", {{"seed", "9"}});
        CHECK(c.seed == 9);
    }
    SUBCASE("layer range and feature list") {
        CHECK(parse_layer_range("3..7") == std::pair{3, 7});
        CHECK(parse_layer_range("4") == std::pair{4, 4});
        CHECK_THROWS_AS(parse_layer_range("7..3"), Error);
        const auto f = parse_feature_list("interpass,cooling_rate");
        CHECK(f == std::vector<FeatureId>{FeatureId::Interpass, FeatureId::CoolingRate});
        CHECK(parse_feature_list("all").size() == kAllFeatures.size());
        CHECK_THROWS_AS(parse_feature_list("interpass,nonsense"), Error);
    }
}

TEST_CASE("exit code mapping") {
    CHECK(exit_code_for(Error(ErrorKind::Config, "x")) == 2);
    CHECK(exit_code_for(Error(ErrorKind::Parse, "x")) == 3);
    CHECK(exit_code_for(Error(ErrorKind::Corruption, "x")) == 3);
    CHECK(exit_code_for(Error(ErrorKind::Invariant, "x")) == 4);
    CHECK(exit_code_for(std::logic_error("x")) == 4);
    CHECK(exit_code_for(fs::filesystem_error("x", std::error_code())) == 3);
}

TEST_CASE("command line tool") {
    TempDir dir;
    SUBCASE("usage errors") {
        CHECK(run_cli("", dir.path()).code == 2);
        CHECK(run_cli("extract", dir.path()).code == 2);
        CHECK(run_cli("export --store x --layer 0 --feature interpass --format xml", dir.path()).code == 2);
    }
    SUBCASE("missing STL names the path") {
        write_text(dir.path() / "run.conf", "stl = nowhere/ghost.stl\n");
        const CliRun r = run_cli("extract --config \"" + (dir.path() / "run.conf").string() + "\"", dir.path());
        CHECK(r.code == 2);
        CHECK(r.output.find("ghost.stl") != std::string::npos);
    }
    SUBCASE("damaged store is a data error") {
        write_text(dir.path() / "bad.irvx", "IRVX\x01");
        const CliRun r = run_cli("report --store \"" + (dir.path() / "bad.irvx").string() + "\"", dir.path());
        CHECK(r.code == 3);
    }
    SUBCASE("extract, export and report on one demo layer") {
        const fs::path store = dir.path() / "one.irvx";
        const std::string conf = "--config \"" + (fs::path(IRMAP_CONFIG_DIR) / "demo.conf").string() + "\"";
        const CliRun ex = run_cli("extract " + conf + " --layers 0..0 --out \"" + store.string() + "\"", dir.path());
        REQUIRE_MESSAGE(ex.code == 0, ex.output);
        CHECK(fs::exists(store));
        CHECK(fs::exists(store.string() + ".manifest.json"));

        const fs::path csv = dir.path() / "ip.csv";
        const CliRun exp = run_cli("export --store \"" + store.string() + "\" --layer 0 --feature interpass --format csv --out \"" +
                                       csv.string() + "\"",
                                   dir.path());
        REQUIRE_MESSAGE(exp.code == 0, exp.output);
        const std::string text = read_text(csv);
        CHECK(text.starts_with("i,j,layer,value\n"));
        // Noise at 1% of span can push a few powder pixels under the floor.
        const auto rows = std::count(text.begin(), text.end(), '\n') - 1;
        CHECK(rows <= 54 * 54);
        CHECK(rows >= 54 * 54 * 99 / 100);

        const CliRun missing = run_cli("export --store \"" + store.string() + "\" --layer 5 --feature interpass", dir.path());
        CHECK(missing.code == 3);

        const CliRun rep = run_cli("report --store \"" + store.string() + "\"", dir.path());
        CHECK(rep.code == 0);
        CHECK(rep.output.find("interpass") != std::string::npos);
    }
}
