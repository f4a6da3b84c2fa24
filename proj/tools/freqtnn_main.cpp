#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tnn/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"freqtnn: frequency-adaptive tensor-network PDE solver and spectral-bias lab"};
    app.require_subcommand(1);

    std::string solve_config, fit_config, checkpoint;
    bool quick = false;
    int iteration = 0;
    int dft_n = 4096;

    CLI::App* solve = app.add_subcommand("solve", "Run a frequency-adaptive PDE solve");
    solve->add_option("config", solve_config, "Run config (JSON)")->required();

    CLI::App* fit = app.add_subcommand("fit", "Run a fitting experiment (toy, ff-compare, theorem1)");
    fit->add_option("config", fit_config, "Run config (JSON)")->required();

    CLI::App* verify = app.add_subcommand("verify", "Run the numerical property suite");
    verify->add_flag("--quick", quick, "Reduced sample counts");

    CLI::App* spectrum =
        app.add_subcommand("spectrum", "Print per-dimension mean component spectra of a checkpoint");
    spectrum->add_option("checkpoint", checkpoint, "Model checkpoint (JSON)")->required();
    spectrum->add_option("--it", iteration, "Iteration tag for the CSV rows");
    spectrum->add_option("--dft-n", dft_n, "Grid size (power of two)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? tnn::kExitOk : tnn::kExitConfigError;
    }

    if (solve->parsed()) return tnn::cmd_solve(solve_config, std::cout, std::cerr);
    if (fit->parsed()) return tnn::cmd_fit(fit_config, std::cout, std::cerr);
    if (verify->parsed()) return tnn::cmd_verify(quick, std::cout, std::cerr);
    return tnn::cmd_spectrum(checkpoint, iteration, dft_n, std::cout, std::cerr);
}
