#pragma once

// Finite-difference gradient checks of the full pipeline and of the training
// losses, shared by the command-line tool and the acceptance run.

#include <string>
#include <vector>

#include "vtol/piml.hpp"

namespace vtol::checks {

struct CheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double threshold = 0.0;
    std::string worst;  ///< where the worst error occurred
    [[nodiscard]] bool passed() const { return max_rel_error <= threshold; }
};

/// pipeline-<input> for each of the seven inputs (hyphenated), then
/// loss-ann, loss-piml-a, loss-piml-b.
std::vector<std::string> gradcheck_names();

/// 1e-6 for loss-ann, 1e-4 otherwise.
double default_threshold(const std::string& name);

/// pipeline-*: d(each coefficient)/d(input) of the low-fidelity pipeline at a
/// few fixed asymmetric states, central step 1e-4 max(1, |x|).
/// loss-*: d(loss)/d(every weight) of a model with 2x8 nets on a two-sample
/// batch. Relative error is |a - n| / max(|a|, |n|, floor) with floor
/// 1e-6 max|a| (pipeline) or 1e-3 max|g| (losses).
/// threshold < 0 selects default_threshold. Throws std::invalid_argument for
/// an unknown name.
CheckResult run_gradcheck(const piml::Physics& ph, const std::string& name, double threshold = -1.0);

}  // namespace vtol::checks
