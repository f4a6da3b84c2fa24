#pragma once

// Declarative run configuration: one JSON document describes one experiment.
// Parsing is strict — unknown keys are rejected with their full path so a
// typo cannot silently fall back to a default.

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnn/fprinciple.hpp"
#include "tnn/pde.hpp"
#include "tnn/training.hpp"

namespace tnn {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feature-layer comparison sweep: the same problem trained with and without
// random Fourier features, in either tensor format, under identical budgets.
struct FfCompareConfig {
    int dims = 6;
    std::vector<int> ks = {20};         // two-scale frequency per sweep point
    int rank = 32;                      // CP separation rank
    std::vector<int> tt_ranks;          // interior ranks for the tt variants
    std::vector<int> hidden = {64, 64};
    std::vector<int> hidden_ff = {64};  // one layer fewer, offsetting the feature params
    Activation activation = Activation::TrigBlend;
    double bias_init_std = 0.0;
    int m = 32;                         // feature draws for the -ff variants
    double sigma = 1.0;
    std::int64_t epochs = 10000;
    LrSchedule sched;
    std::size_t n_interior = 500;
    std::size_t n_boundary_per_face = 25;
    double lambda_b = 100.0;
    std::size_t eval_n = 65536;
    std::vector<std::string> architectures = {"cp", "cp-ff"};
    std::uint64_t seed = 1;
};

struct Theorem1SweepConfig {
    Theorem1Config probe;
    std::vector<double> deltas = {0.2, 0.1, 0.05, 0.01};
    std::size_t n = 100000;
    std::uint64_t seed = 20240801;
};

struct OutputConfig {
    std::string dir;          // subdirectory under the output root
    bool grid = true;         // emit pointwise error grids (solve)
    bool checkpoints = true;  // emit model JSON per adaptive step
};

struct RunConfig {
    std::string mode;      // "solve" | "fit"
    std::string name;
    std::string comment;   // free-form description, carried into the manifest
    std::string fit_kind;  // "toy" | "ff-compare" | "theorem1"
    ProblemSpec problem;
    AdaptiveConfig adaptive;
    ToyFitConfig toy;
    FfCompareConfig ff;
    Theorem1SweepConfig theorem1;
    OutputConfig output;
};

// Throws ConfigError with the offending key path on any unknown key, wrong
// type, or out-of-range value.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace tnn
