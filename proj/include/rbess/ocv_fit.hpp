// Continuity-constrained piecewise-linear least-squares fit of a measured
// SoC/OCV table.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "rbess/cell_model.hpp"

namespace rbess {

struct OcvFitResult {
  std::vector<OcvSegment> segments;
  double rms_error_v = 0.0;
  double max_error_v = 0.0;
};

// Fits k continuous linear segments to (soc, volts) samples. Breakpoints are
// chosen by exhaustive search over the interior sample grid; each candidate is
// solved as a hinge-basis least-squares problem, so continuity holds by
// construction. End segments extend to SoC 0 and 1. Throws
// std::invalid_argument on bad input (k < 1, too few points, non-increasing
// voltage trend, no candidate with all-positive slopes).
OcvFitResult fit_ocv_segments(std::span<const double> soc,
                              std::span<const double> volts, int k);

// Two-column whitespace/comma separated table (soc, volts). Lines starting
// with '#' are skipped.
void load_ocv_table(const std::string& path, std::vector<double>& soc,
                    std::vector<double>& volts);

}  // namespace rbess
