#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsol/losses.hpp"

namespace wsol {

struct GradCheckReport {
    std::string term;
    double worst_rel_err = 0.0;
    std::string worst_param;
    bool passed = false;
};

struct GradCheckOptions {
    std::uint32_t seed = 0;
    double fd_step = 1e-5;
    double tolerance = 1e-4;
    // Adds a deliberate error to one analytic gradient; used to prove the
    // detector actually fires.
    bool corrupt = false;
};

/// Compares backward gradients of each of the seven loss terms against
/// central finite differences on a 2-class toy network (64x64 input, 8x8
/// features), over every parameter of the extractor, classifier, and
/// localizer. Returns one report per term.
std::vector<GradCheckReport> gradcheck_losses(const GradCheckOptions& options);

}  // namespace wsol
