#include "rbess/cell_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rbess {

namespace {
constexpr double kBreakpointContinuityV = 1e-3;
constexpr double kSegmentEps = 1e-9;
}  // namespace

OcvCurve::OcvCurve(std::vector<OcvSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) {
    throw std::invalid_argument("OcvCurve: no segments");
  }
  if (std::abs(segments_.front().q_lo) > kSegmentEps ||
      std::abs(segments_.back().q_hi - 1.0) > kSegmentEps) {
    throw std::invalid_argument("OcvCurve: segments must tile [0, 1]");
  }
  segments_.front().q_lo = 0.0;
  segments_.back().q_hi = 1.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const OcvSegment& s = segments_[i];
    if (!(s.q_lo < s.q_hi)) {
      throw std::invalid_argument("OcvCurve: segment " + std::to_string(i) +
                                  " has q_lo >= q_hi");
    }
    if (!(s.beta_v > 0.0)) {
      throw std::invalid_argument("OcvCurve: segment " + std::to_string(i) +
                                  " has non-positive slope");
    }
    if (i > 0) {
      const OcvSegment& p = segments_[i - 1];
      if (std::abs(p.q_hi - s.q_lo) > kSegmentEps) {
        throw std::invalid_argument("OcvCurve: gap/overlap at segment " +
                                    std::to_string(i));
      }
      const double left = p.alpha_v + p.beta_v * p.q_hi;
      const double right = s.alpha_v + s.beta_v * s.q_lo;
      if (std::abs(left - right) > kBreakpointContinuityV) {
        throw std::invalid_argument("OcvCurve: discontinuity at breakpoint q=" +
                                    std::to_string(s.q_lo));
      }
    }
  }
}

OcvCurve OcvCurve::single_segment(double alpha_v, double beta_v) {
  return OcvCurve({OcvSegment{0.0, 1.0, alpha_v, beta_v}});
}

std::size_t OcvCurve::segment_index(double q) const {
  if (segments_.empty()) {
    throw std::logic_error("OcvCurve: empty curve");
  }
  if (q < 0.0 || q > 1.0) {
    throw std::domain_error("OcvCurve: SoC outside [0, 1]");
  }
  // Left segment wins at breakpoints: pick the first segment with q <= q_hi.
  for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
    if (q <= segments_[i].q_hi) {
      return i;
    }
  }
  return segments_.size() - 1;
}

double OcvCurve::eval(double q) const {
  const OcvSegment& s = segments_[segment_index(q)];
  return s.alpha_v + s.beta_v * q;
}

double ocv_eval(const OcvCurve& curve, double q) { return curve.eval(q); }

void validate_cell_params(const CellParams& params) {
  if (!(params.capacity_ah > 0.0)) {
    throw std::invalid_argument("CellParams: capacity must be positive");
  }
  if (params.r_int_ohm < 0.0 || params.r_conv_dc_ohm < 0.0 || params.r_switch_ohm < 0.0) {
    throw std::invalid_argument("CellParams: resistances must be non-negative");
  }
  if (!(params.c_th_j_per_k > 0.0)) {
    throw std::invalid_argument("CellParams: thermal capacitance must be positive");
  }
  if (!(params.q_min >= 0.0 && params.q_min < params.q_max && params.q_max <= 1.0)) {
    throw std::invalid_argument("CellParams: require 0 <= q_min < q_max <= 1");
  }
  if (!(params.i_min_a <= 0.0 && params.i_max_a >= 0.0)) {
    throw std::invalid_argument("CellParams: require i_min <= 0 <= i_max");
  }
  if (params.ocv.empty()) {
    throw std::invalid_argument("CellParams: OCV curve missing");
  }
}

CellState soc_step(const CellState& state, const CellParams& params, double i_a,
                   double dt_s) {
  CellState next = state;
  next.q = state.q - i_a * dt_s / params.capacity_as();
  return next;
}

double terminal_voltage(const CellParams& params, double q, double i_a) {
  return params.ocv.eval(q) - params.r_int_ohm * i_a;
}

ModulePower module_power(const CellParams& params, double q, double i_a) {
  ModulePower p;
  const double u = params.ocv.eval(q);
  p.internal_w = u * i_a;
  p.output_w = p.internal_w - params.r_total_ohm() * i_a * i_a;
  p.loss_w = p.internal_w - p.output_w;
  return p;
}

std::vector<double> thermal_step(const std::vector<double>& temps_k,
                                 const std::vector<double>& currents_a,
                                 const std::vector<CellParams>& params,
                                 const ThermalNetworkParams& net, double dt_s) {
  if (!(dt_s > 0.0)) {
    throw std::domain_error("thermal_step: dt must be positive");
  }
  const std::size_t n = temps_k.size();
  if (currents_a.size() != n || params.size() != n) {
    throw std::invalid_argument("thermal_step: size mismatch");
  }
  const double conv_g = std::isinf(net.r_conv_k_per_w) ? 0.0 : 1.0 / net.r_conv_k_per_w;
  const double cnd_g = 1.0 / net.r_cnd_k_per_w;

  std::vector<double> next(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double heat_w = params[j].r_int_ohm * currents_a[j] * currents_a[j];
    const double conv_w = (temps_k[j] - net.t_env_k) * conv_g;
    double cnd_w = 0.0;
    if (j > 0) {
      cnd_w += (temps_k[j] - temps_k[j - 1]) * cnd_g;
    }
    if (j + 1 < n) {
      cnd_w += (temps_k[j] - temps_k[j + 1]) * cnd_g;
    }
    next[j] = temps_k[j] + dt_s / params[j].c_th_j_per_k * (heat_w - conv_w - cnd_w);
  }
  return next;
}

EnergyFrame to_energy_frame(const CellParams& params, double q0) {
  return to_energy_frame(params, q0, params.ocv.segment_index(q0));
}

EnergyFrame to_energy_frame(const CellParams& params, double q0,
                            std::size_t segment_index) {
  const OcvSegment& seg = params.ocv.segment(segment_index);
  EnergyFrame frame;
  frame.alpha_v = seg.alpha_v;
  frame.beta_v = seg.beta_v;
  frame.segment_index = segment_index;
  frame.c_equiv = params.capacity_as() / seg.beta_v;
  const double u0 = seg.alpha_v + seg.beta_v * q0;
  frame.e0_j = 0.5 * frame.c_equiv * u0 * u0;
  frame.e_j = 0.0;
  return frame;
}

double energy_at(const EnergyFrame& frame, double q) {
  const double u = frame.alpha_v + frame.beta_v * q;
  return 0.5 * frame.c_equiv * u * u - frame.e0_j;
}

double soc_at(const EnergyFrame& frame, double e_j) {
  const double total = e_j + frame.e0_j;
  if (!(total > 0.0)) {
    throw std::runtime_error("EnergyFrame: e + e0 must stay positive");
  }
  const double u = std::sqrt(2.0 * total / frame.c_equiv);
  return (u - frame.alpha_v) / frame.beta_v;
}

double from_energy_frame(const EnergyFrame& frame) { return soc_at(frame, frame.e_j); }

}  // namespace rbess
