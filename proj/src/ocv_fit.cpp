#include "rbess/ocv_fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rbess {

namespace {

struct HingeFit {
  std::vector<OcvSegment> segments;
  double sse = std::numeric_limits<double>::infinity();
  bool valid = false;
};

// Least squares on the basis {1, q, (q-b_1)+, ..., (q-b_{k-1})+}; the hinge
// basis makes the piecewise-linear model continuous by construction.
HingeFit fit_with_breakpoints(std::span<const double> soc,
                              std::span<const double> volts,
                              const std::vector<double>& breaks) {
  const int n = static_cast<int>(soc.size());
  const int ncoef = 2 + static_cast<int>(breaks.size());
  Eigen::MatrixXd basis(n, ncoef);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    basis(i, 0) = 1.0;
    basis(i, 1) = soc[i];
    for (std::size_t b = 0; b < breaks.size(); ++b) {
      basis(i, 2 + static_cast<int>(b)) = std::max(0.0, soc[i] - breaks[b]);
    }
    rhs(i) = volts[i];
  }
  const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(rhs);

  HingeFit fit;
  fit.sse = (basis * coef - rhs).squaredNorm();

  double alpha = coef(0);
  double beta = coef(1);
  double prev_edge = 0.0;
  for (std::size_t s = 0; s <= breaks.size(); ++s) {
    if (!(beta > 0.0)) {
      return fit;  // non-increasing segment; candidate rejected
    }
    OcvSegment seg;
    seg.q_lo = prev_edge;
    seg.q_hi = (s < breaks.size()) ? breaks[s] : 1.0;
    seg.alpha_v = alpha;
    seg.beta_v = beta;
    fit.segments.push_back(seg);
    if (s < breaks.size()) {
      // Next segment: slope gains the hinge coefficient, intercept adjusts to
      // keep u continuous at the breakpoint.
      const double c = coef(2 + static_cast<int>(s));
      alpha -= c * breaks[s];
      beta += c;
      prev_edge = breaks[s];
    }
  }
  fit.valid = true;
  return fit;
}

void enumerate_breakpoints(const std::vector<double>& candidates, int needed,
                           std::size_t start, std::vector<double>& current,
                           const std::function<void(const std::vector<double>&)>& visit) {
  if (needed == 0) {
    visit(current);
    return;
  }
  for (std::size_t i = start; i + static_cast<std::size_t>(needed) <= candidates.size();
       ++i) {
    current.push_back(candidates[i]);
    enumerate_breakpoints(candidates, needed - 1, i + 1, current, visit);
    current.pop_back();
  }
}

}  // namespace

OcvFitResult fit_ocv_segments(std::span<const double> soc,
                              std::span<const double> volts, int k) {
  if (k < 1 || k > 8) {
    throw std::invalid_argument("fit_ocv_segments: segment count must be in [1, 8]");
  }
  if (soc.size() != volts.size() || soc.size() < static_cast<std::size_t>(k + 2)) {
    throw std::invalid_argument("fit_ocv_segments: need at least k + 2 samples");
  }
  for (std::size_t i = 1; i < soc.size(); ++i) {
    if (!(soc[i] > soc[i - 1])) {
      throw std::invalid_argument("fit_ocv_segments: SoC column must be strictly increasing");
    }
  }
  if (!(volts.back() > volts.front())) {
    throw std::invalid_argument("fit_ocv_segments: voltage must increase with SoC");
  }

  // Candidate breakpoints: interior sample locations, thinned to keep the
  // exhaustive search small.
  std::vector<double> candidates;
  const std::size_t interior = soc.size() - 2;
  const std::size_t stride = std::max<std::size_t>(1, interior / 32);
  for (std::size_t i = 1; i + 1 < soc.size(); i += stride) {
    candidates.push_back(soc[i]);
  }

  HingeFit best;
  std::vector<double> scratch;
  enumerate_breakpoints(candidates, k - 1, 0, scratch,
                        [&](const std::vector<double>& breaks) {
                          HingeFit fit = fit_with_breakpoints(soc, volts, breaks);
                          if (fit.valid && fit.sse < best.sse) {
                            best = std::move(fit);
                          }
                        });
  if (!best.valid) {
    throw std::invalid_argument(
        "fit_ocv_segments: no breakpoint choice yields strictly increasing segments");
  }

  OcvFitResult result;
  result.segments = best.segments;
  const OcvCurve curve(best.segments);
  double max_err = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < soc.size(); ++i) {
    const double err = std::abs(curve.eval(std::clamp(soc[i], 0.0, 1.0)) - volts[i]);
    max_err = std::max(max_err, err);
    sq += err * err;
  }
  result.max_error_v = max_err;
  result.rms_error_v = std::sqrt(sq / static_cast<double>(soc.size()));
  return result;
}

void load_ocv_table(const std::string& path, std::vector<double>& soc,
                    std::vector<double>& volts) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open OCV table: " + path);
  }
  soc.clear();
  volts.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double q = 0.0;
    double v = 0.0;
    if (!(ss >> q >> v)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected two numeric columns");
    }
    soc.push_back(q);
    volts.push_back(v);
  }
  if (soc.empty()) {
    throw std::runtime_error("OCV table is empty: " + path);
  }
}

}  // namespace rbess
