#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"

using namespace geowave;
using namespace geowave::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
    std::map<std::string, std::string> m;
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        auto c = line.find(',');
        m[line.substr(0, c)] = line.substr(c + 1);
    }
    return m;
}

// small but resolved: h = 0.2 on 48 cells
const char* small_config = R"(
grid_cells = 48
trace_points = 128
h_fixed = 0.2
fan_boundary_points = 4
fan_directions = 8
pixels = 16
fiber_quadrature = 128
holder_probes = 2
holder_power_iterations = 1
)";

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("geowave_cli_" + name);
    fs::remove_all(p);
    return p;
}

int line_of_error(const std::string& text) {
    try {
        load_run_config(Config::parse(text));
    } catch (const ConfigError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST_CASE("configuration validation") {
    SUBCASE("defaults load and every knob reaches the manifest") {
        RunConfig rc = load_run_config(Config::parse(""));
        CHECK(rc.wave.cells == 128);
        CHECK(rc.mode == Mode::full);
        const auto& used = rc.source.consumed();
        for (const char* k : {"grid_cells", "cfl_ratio", "horizon_time", "cutoff_width_time", "h_sweep", "lambda_reg",
                              "fan_boundary_points", "unknown_a_amplitude", "kappa_checks", "seed", "mode"})
            CHECK(used.count(k) == 1);
    }
    SUBCASE("CFL ratio 1.5 refused at load") {
        CHECK(line_of_error("grid_cells = 64\ncfl_ratio = 1.5\n") == 2);
    }
    SUBCASE("kappa 1.2 in the kernel checks refused") {
        CHECK(line_of_error("kappa_checks = 0.5, 1.2\n") == 1);
    }
    SUBCASE("short horizon refused") {
        CHECK(line_of_error("\n\nhorizon_time = 3.0\n") == 3);
        CHECK_NOTHROW(load_run_config(Config::parse("horizon_time = 3.8")));
    }
    SUBCASE("malformed and unknown entries carry their line") {
        CHECK(line_of_error("grid_cells = many\n") == 1);
        CHECK(line_of_error("\ngrid_cellz = 64\n") == 2);
        CHECK(line_of_error("grid_cells = 0\n") == 1);
        CHECK(line_of_error("pixels = 12.5\n") == 1);
        CHECK(line_of_error("grid_cells\n") == 1);
        CHECK(line_of_error("mode = sideways\n") == 1);
        CHECK(line_of_error("inner_radius_chart = 1.3\n") == 0);
    }
}

TEST_CASE("verify-only mode refuses recovery") {
    auto out = scratch("gate");
    std::ostringstream log;
    RunConfig rc = load_run_config(Config::parse(std::string(small_config) + "mode = verify-only\n"));
    CHECK(cmd_recover(rc, {out, out / "cache", &log}) == 2);
    CHECK(log.str().find("verify-only") != std::string::npos);
    CHECK_FALSE(fs::exists(out / "a_hat.csv"));
}

TEST_CASE("holder sweep validation and pair-order symmetry") {
    auto out = scratch("holder");
    std::ostringstream log;
    RunConfig one = load_run_config(Config::parse(std::string(small_config) + "holder_amplitudes = 0.2\n"));
    CHECK(cmd_holder(one, {out, out / "cache", &log}) == 2);

    RunConfig rc = load_run_config(Config::parse(small_config));
    REQUIRE(cmd_holder(rc, {out / "a", out / "cache", &log}) == 0);
    rc.holder_swap = true;
    REQUIRE(cmd_holder(rc, {out / "b", out / "cache", &log}) == 0);
    CHECK(slurp(out / "a" / "holder.csv") == slurp(out / "b" / "holder.csv"));
    auto man = read_manifest(out / "a" / "manifest.csv");
    CHECK(std::stod(man.at("result.slope")) > 0.0);
    fs::remove_all(out);
}

TEST_CASE("simulate-dtn reuses the response cache") {
    auto out = scratch("dtn");
    std::ostringstream log;
    RunConfig rc = load_run_config(Config::parse(small_config));
    Context cx{out, out / "cache", &log};
    REQUIRE(cmd_simulate_dtn(rc, cx) == 0);
    auto first = read_manifest(out / "manifest.csv");
    CHECK(std::stoi(first.at("result.solves")) == 8);
    CHECK(std::stod(first.at("result.gap_norm")) > 0.0);
    std::string csv = slurp(out / "dtn.csv");
    REQUIRE(cmd_simulate_dtn(rc, cx) == 0);
    auto second = read_manifest(out / "manifest.csv");
    CHECK(second.at("result.solves") == "0");
    CHECK(second.at("result.cache_hits") == "8");
    CHECK(slurp(out / "dtn.csv") == csv);

    RunConfig same = rc;
    same.unknown = same.known;
    REQUIRE(cmd_simulate_dtn(same, {out / "same", out / "cache", &log}) == 0);
    CHECK(std::stod(read_manifest(out / "same" / "manifest.csv").at("result.gap_norm")) == 0.0);
    fs::remove_all(out);
}

TEST_CASE("recover outputs are deterministic and complete") {
    auto out = scratch("recover");
    std::ostringstream log;
    RunConfig rc = load_run_config(Config::parse(std::string(small_config) + "mode = bypass\nseed = 7\n"));
    REQUIRE(cmd_recover(rc, {out / "a", out / "cache", &log}) == 0);
    REQUIRE(cmd_recover(rc, {out / "b", out / "cache", &log}) == 0);
    for (const char* f : {"a_hat.csv", "q_hat.csv", "absorption_stage.csv", "potential_stage.csv", "manifest.csv"}) {
        REQUIRE(fs::exists(out / "a" / f));
        CHECK(slurp(out / "a" / f) == slurp(out / "b" / f));
    }
    auto man = read_manifest(out / "a" / "manifest.csv");
    CHECK(man.at("result.stage_report") == "xray+mollifier only");
    CHECK(man.at("seed") == "7");
    CHECK(man.at("derived.h") == "0.20000000000000001");
    for (const auto& [k, v] : rc.source.consumed()) CHECK(man.count(k) == 1);
    CHECK(std::stod(man.at("result.blur_worst_excess")) <= 0.0);
    fs::remove_all(out);
}

TEST_CASE("command line") {
    auto out = scratch("argv");
    fs::create_directories(out);
    {
        std::ofstream cfg(out / "run.cfg");
        cfg << small_config;
    }
    std::string cfg = (out / "run.cfg").string(), dir = (out / "res").string();
    std::ostringstream log;
    SUBCASE("mode flag gates recovery") {
        const char* argv[] = {"geowave", "recover", "--config", cfg.c_str(), "--out", dir.c_str(), "--mode", "verify-only"};
        CHECK(run(8, const_cast<char**>(argv), log) == 2);
    }
    SUBCASE("bad flag values") {
        const char* argv[] = {"geowave", "recover", "--mode", "sideways"};
        CHECK(run(4, const_cast<char**>(argv), log) == 2);
        const char* none[] = {"geowave"};
        CHECK(run(1, const_cast<char**>(none), log) == 2);
    }
    SUBCASE("config errors are reported with their line") {
        std::ofstream bad(out / "bad.cfg");
        bad << "grid_cells = 64\ncfl_ratio = 1.5\n";
        bad.close();
        std::string b = (out / "bad.cfg").string();
        const char* argv[] = {"geowave", "verify", "--config", b.c_str()};
        CHECK(run(4, const_cast<char**>(argv), log) == 2);
        CHECK(log.str().find("line 2") != std::string::npos);
    }
    SUBCASE("cache directory from the environment") {
        std::string cache = (out / "envcache").string();
        setenv("GEOWAVE_CACHE_DIR", cache.c_str(), 1);
        CHECK(make_context(dir).cache == fs::path(cache));
        const char* argv[] = {"geowave", "simulate-dtn", "--config", cfg.c_str(), "--out", dir.c_str(), "--seed", "3"};
        CHECK(run(8, const_cast<char**>(argv), log) == 0);
        unsetenv("GEOWAVE_CACHE_DIR");
        CHECK(!fs::is_empty(out / "envcache"));
        CHECK(make_context(dir).cache == fs::path(dir) / "cache");
    }
    fs::remove_all(out);
}

TEST_CASE("verify on the default Euclidean configuration") {
    auto out = scratch("verify");
    std::ostringstream log;
    RunConfig rc = load_run_config(Config::parse(""));
    int status = cmd_verify(rc, {out, out / "cache", &log});
    MESSAGE(log.str());
    CHECK(status == 0);
    CHECK(slurp(out / "verify.csv").find(",0\n") == std::string::npos);
    fs::remove_all(out);
}
