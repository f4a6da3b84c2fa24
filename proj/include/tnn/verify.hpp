#pragma once

// Self-contained property suite: every core numerical path is checked against
// an independent oracle (quadrature, O(n^2) transforms, finite differences,
// hand-planted models with known closed forms).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tnn/model.hpp"
#include "tnn/pde.hpp"

namespace tnn {

struct CheckResult {
    std::string name;
    bool pass = false;
    double observed = 0.0;  // worst measured value (meaning depends on the check)
    double limit = 0.0;
    double seconds = 0.0;
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool all_pass = true;
    double total_seconds = 0.0;
};

// Builds a CP model that reproduces a sum of trigonometric products exactly:
// one rank slot per term, integer-frequency feature slots with unit output
// rows, term coefficients as outer weights. Every factor frequency must be an
// integer multiple of 2 pi; time-dependent solutions are rejected.
TnnModel plant_trig_model(const ManufacturedSolution& sol);

// Runs the suite; `quick` trims sample counts so unit tests stay fast.
VerifyReport run_verification(std::uint64_t seed = 424242, bool quick = false);

void print_report(const VerifyReport& rep, std::ostream& os);

}  // namespace tnn
