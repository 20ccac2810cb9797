// Per-cell electrical and thermal plant models: Rint electrical model with a
// piecewise-linear SoC/OCV map, lumped thermal network, and the SoC <-> energy
// transform used by the convex power optimizer.
#pragma once

#include <cstddef>
#include <vector>

namespace rbess {

// One linear piece of the SoC/OCV map: u(q) = alpha_v + beta_v * q on [q_lo, q_hi].
struct OcvSegment {
  double q_lo = 0.0;
  double q_hi = 1.0;
  double alpha_v = 0.0;
  double beta_v = 0.0;
};

// Ordered, gap-free piecewise-linear OCV curve over [0, 1] with strictly
// increasing voltage. Breakpoint ties resolve to the left segment.
class OcvCurve {
 public:
  OcvCurve() = default;
  explicit OcvCurve(std::vector<OcvSegment> segments);

  static OcvCurve single_segment(double alpha_v, double beta_v);

  // u(q); throws std::domain_error for q outside [0, 1].
  double eval(double q) const;

  // Index of the segment containing q (left segment wins at breakpoints).
  std::size_t segment_index(double q) const;

  const OcvSegment& segment(std::size_t i) const { return segments_.at(i); }
  const std::vector<OcvSegment>& segments() const { return segments_; }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }

 private:
  std::vector<OcvSegment> segments_;
};

struct CellParams {
  double capacity_ah = 2.5;     // nominal capacity, Ah
  double r_int_ohm = 0.0313;    // cell internal resistance
  double r_conv_dc_ohm = 0.01;  // DC/DC converter loss resistance
  double r_switch_ohm = 0.005;  // aggregated per-module switch resistance
  double q_min = 0.05;
  double q_max = 0.95;
  double i_min_a = -10.0;       // <= 0; charge current limit
  double i_max_a = 10.0;        // >= 0; discharge current limit
  double t_max_k = 328.0;
  double c_th_j_per_k = 40.23;  // thermal capacitance
  OcvCurve ocv;

  double capacity_as() const { return capacity_ah * 3600.0; }
  double r_total_ohm() const { return r_int_ohm + r_conv_dc_ohm + r_switch_ohm; }
};

// Throws std::invalid_argument describing the first violated invariant.
void validate_cell_params(const CellParams& params);

struct ThermalNetworkParams {
  double r_conv_k_per_w = 41.05;  // cell <-> environment; +inf disables convection
  double r_cnd_k_per_w = 26.6;    // between physically adjacent cells
  double t_env_k = 298.0;
};

struct CellState {
  double q = 0.5;       // SoC, 0..1
  double temp_k = 298.0;
  bool in_service = true;
};

// SoC variable substituted by accumulated energy e = 1/2 c u^2 - e0 within one
// frozen OCV segment. c_equiv = capacity[As] / beta.
struct EnergyFrame {
  double c_equiv = 0.0;
  double e0_j = 0.0;       // 1/2 c u(q0)^2, q0 = SoC at frame creation
  double e_j = 0.0;        // current accumulated energy relative to e0
  double alpha_v = 0.0;    // active segment coefficients
  double beta_v = 0.0;
  std::size_t segment_index = 0;
};

// u(q) of the segment containing q; left segment wins at breakpoints.
double ocv_eval(const OcvCurve& curve, double q);

// Coulomb counting (positive current = discharge). Never clamps; out-of-range
// SoC is a reportable violation downstream.
CellState soc_step(const CellState& state, const CellParams& params, double i_a,
                   double dt_s);

// v = u(q) - R * i.
double terminal_voltage(const CellParams& params, double q, double i_a);

struct ModulePower {
  double internal_w = 0.0;  // u * i
  double output_w = 0.0;    // u * i - (R + Rc + Rs) * i^2
  double loss_w = 0.0;      // internal - output
};
ModulePower module_power(const CellParams& params, double q, double i_a);

// Forward-Euler step of the lumped thermal network over the full physical
// chain (bypassed cells stay thermally coupled; pass their current as 0).
// Missing neighbors at the chain ends are treated adiabatically.
// Throws std::domain_error if dt_s <= 0.
std::vector<double> thermal_step(const std::vector<double>& temps_k,
                                 const std::vector<double>& currents_a,
                                 const std::vector<CellParams>& params,
                                 const ThermalNetworkParams& net, double dt_s);

// Frame anchored at q0 using the segment containing q0 (e_j = 0).
EnergyFrame to_energy_frame(const CellParams& params, double q0);
EnergyFrame to_energy_frame(const CellParams& params, double q0,
                            std::size_t segment_index);

// e for a given SoC inside the frame's segment (1/2 c u(q)^2 - e0).
double energy_at(const EnergyFrame& frame, double q);

// Inverse map using frame.e_j; throws std::runtime_error when e + e0 <= 0
// (corrupted frame).
double from_energy_frame(const EnergyFrame& frame);
double soc_at(const EnergyFrame& frame, double e_j);

}  // namespace rbess
