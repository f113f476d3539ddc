#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "geowave/io.hpp"
#include "geowave/recover.hpp"

namespace geowave::cli {

enum class Mode { full, bypass, verify_only };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct BumpSpec {
    Vec2 center{0.0, 0.0};
    double radius = 0.5;
    double amplitude = 0.0;
    Field field() const;
};

struct PairSpec {
    BumpSpec a, q;
    Coefficients coefficients() const { return {a.field(), q.field()}; }
};

struct RunConfig {
    std::string metric = "euclidean";
    double metric_param = 0.0;
    double inner_radius = 1.0, outer_radius = 1.25;

    WaveConfig wave;
    double eps = 0.6;
    std::vector<double> h_sweep = {0.1, 0.05, 0.025};
    double h_fixed = 0.0;  // > 0 skips the sweep
    double remainder_constant = 0.4;
    double blur_constant = 1.0;

    int ns = 64, nb = 64;
    int pixels = 64;
    double lambda_reg = 1e-6;
    bool compensate_dispersion = true;
    bool deblur = true;
    double max_failure_fraction = 0.1;
    int fiber_quadrature = 1024;

    PairSpec known, unknown;

    std::vector<double> holder_amplitudes = {0.05, 0.1, 0.2, 0.4};
    double holder_q_ratio = 1.5;
    int holder_probes = 8;
    int holder_power_iterations = 2;
    bool holder_swap = false;

    std::vector<double> kappa_checks = {0.5, 0.9, 0.99};
    int verify_samples = 24;

    Mode mode = Mode::full;
    unsigned long seed = 1;

    Config source;  // parsed text with the consumed keys
    Manifold manifold() const;
};

// Parses and validates; unknown keys, CFL >= 1, kappa outside (0, 1), non-positive resolutions
// and a horizon T <= Diam(M1) + 2 eps are refused with the offending line.
RunConfig load_run_config(const Config& c);

struct Context {
    std::filesystem::path out;
    std::filesystem::path cache;  // GEOWAVE_CACHE_DIR or out/cache
    std::ostream* log = nullptr;
};

Context make_context(const std::filesystem::path& out);

// exit status: 0 success, 1 checks failed, 2 refused (configuration or mode), 3 pipeline error
int cmd_verify(const RunConfig& rc, const Context& cx);
int cmd_simulate_dtn(const RunConfig& rc, const Context& cx);
int cmd_recover(const RunConfig& rc, const Context& cx);
int cmd_holder(const RunConfig& rc, const Context& cx);

// full command line: geowave <verify|simulate-dtn|recover|holder> [--config] [--out] [--mode] [--seed]
int run(int argc, char** argv, std::ostream& log);

// key,value rows sorted by key
void write_manifest(const std::map<std::string, std::string>& entries, const std::filesystem::path& p);

}  // namespace geowave::cli
