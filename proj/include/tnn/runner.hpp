#pragma once

// Experiment dispatch: turns a parsed run config into a directory of
// artifacts (error tables, spectra, frequency sets, checkpoints, manifest)
// and hosts the verify and spectrum subcommands.

#include <iosfwd>
#include <string>

#include "tnn/config.hpp"

namespace tnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitRuntimeFailure = 2;
inline constexpr int kExitVerificationFailure = 3;

inline constexpr const char* kToolVersion = "freqtnn 0.1.0";
inline constexpr const char* kOutputRootEnv = "FREQTNN_OUT";

// Root directory for artifacts: $FREQTNN_OUT, or "out" when unset/empty.
std::string output_root();

int cmd_solve(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_fit(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_verify(bool quick, std::ostream& out, std::ostream& err);
// Prints It,i,k,mean_magnitude rows for every dimension of a saved checkpoint.
int cmd_spectrum(const std::string& checkpoint_path, int iteration, int dft_n,
                 std::ostream& out, std::ostream& err);

}  // namespace tnn
