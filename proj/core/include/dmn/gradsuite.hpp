#pragma once

#include <string>
#include <vector>

#include "dmn/gradcheck.hpp"

namespace dmn {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Randomized gradient checks for every layer (multiple seeds each) plus an
// end-to-end check of the total training loss with respect to all parameters
// of a miniature model (small mesh, 32x32 images).
std::vector<GradSuiteEntry> run_gradcheck_suite(int layer_seeds = 10,
                                                int end_to_end_seeds = 10);

// Largest error across the suite.
double gradcheck_suite_worst(const std::vector<GradSuiteEntry>& entries);

}  // namespace dmn
