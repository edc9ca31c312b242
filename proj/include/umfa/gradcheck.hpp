#pragma once

#include <ostream>

namespace umfa::gradcheck {

struct Result {
    int checks = 0;
    int failures = 0;
    bool ok() const { return failures == 0; }
};

/// analytic vs central-difference agreement: relative error < 1e-3, or
/// absolute agreement within 1e-4 for near-zero analytic values.
bool values_agree(double analytic, double fd);

/// The full suite: every primitive op plus the composite total loss on a
/// width-4 toy model at 32x32. Analytic gradients come from the float
/// tape; difference quotients are evaluated in the double-precision
/// reference engine. Prints one line per check group.
Result run_gradient_suite(std::ostream& out);

}  // namespace umfa::gradcheck
