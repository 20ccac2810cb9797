#include <catch2/catch_amalgamated.hpp>

#include "rbess/cell_model.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace rbess;
using Catch::Approx;

namespace {

CellParams reference_cell() {
  CellParams p;
  p.capacity_ah = 2.5;
  p.r_int_ohm = 0.0313;
  p.r_conv_dc_ohm = 0.01;
  p.r_switch_ohm = 0.005;
  p.ocv = OcvCurve::single_segment(3.3, 0.6);
  return p;
}

}  // namespace

TEST_CASE("ocv_eval on a single segment", "[cell_model]") {
  const OcvCurve curve = OcvCurve::single_segment(3.3, 0.6);
  CHECK(ocv_eval(curve, 0.0) == Approx(3.3));
  CHECK(ocv_eval(curve, 0.5) == Approx(3.6));
  CHECK(ocv_eval(curve, 1.0) == Approx(3.9));
  CHECK_THROWS_AS(ocv_eval(curve, -0.01), std::domain_error);
  CHECK_THROWS_AS(ocv_eval(curve, 1.01), std::domain_error);
}

TEST_CASE("ocv curve validation and breakpoint tie-break", "[cell_model]") {
  // Continuous 3-segment curve: 3.0..3.35, 3.35..4.05, 4.05..4.18.
  std::vector<OcvSegment> segs{
      {0.0, 0.1, 3.0, 3.5},
      {0.1, 0.95, 3.35 - 0.1 * (0.7 / 0.85), 0.7 / 0.85},
      {0.95, 1.0, 4.05 - 0.95 * 2.6, 2.6},
  };
  const OcvCurve curve(segs);
  CHECK(curve.segment_index(0.0) == 0);
  CHECK(curve.segment_index(0.1) == 0);   // left segment wins at the breakpoint
  CHECK(curve.segment_index(0.1001) == 1);
  CHECK(curve.segment_index(0.95) == 1);
  CHECK(curve.segment_index(1.0) == 2);

  // Monotone nondecreasing over [0, 1].
  double prev = curve.eval(0.0);
  for (int i = 1; i <= 200; ++i) {
    const double q = i / 200.0;
    const double u = curve.eval(q);
    CHECK(u >= prev - 1e-12);
    prev = u;
  }

  CHECK_THROWS_AS(OcvCurve({{0.0, 0.5, 3.0, 1.0}, {0.6, 1.0, 3.6, 1.0}}),
                  std::invalid_argument);  // gap
  CHECK_THROWS_AS(OcvCurve({{0.0, 0.5, 3.0, 1.0}, {0.5, 1.0, 4.0, 1.0}}),
                  std::invalid_argument);  // 0.5 V jump at the breakpoint
  CHECK_THROWS_AS(OcvCurve({{0.0, 1.0, 3.3, -0.1}}), std::invalid_argument);
}

TEST_CASE("soc_step coulomb counting", "[cell_model]") {
  const CellParams p = reference_cell();
  CellState state;
  state.q = 0.5;

  CHECK(soc_step(state, p, 0.0, 1.0).q == Approx(0.5));
  CHECK(soc_step(state, p, 9.0, 1.0).q == Approx(0.499));
  CHECK(soc_step(state, p, -9.0, 1.0).q == Approx(0.501));

  // No clamping: running out of range is reported downstream, not hidden here.
  state.q = 0.0005;
  CHECK(soc_step(state, p, 9.0, 1.0).q == Approx(-0.0005));
}

TEST_CASE("terminal voltage", "[cell_model]") {
  const CellParams p = reference_cell();
  CHECK(terminal_voltage(p, 0.5, 0.0) == Approx(3.6));
  CHECK(terminal_voltage(p, 0.5, 10.0) == Approx(3.287));
  CHECK(terminal_voltage(p, 0.5, -10.0) == Approx(3.913));
}

TEST_CASE("module power split", "[cell_model]") {
  const CellParams p = reference_cell();

  const ModulePower idle = module_power(p, 0.5, 0.0);
  CHECK(idle.internal_w == Approx(0.0));
  CHECK(idle.output_w == Approx(0.0));
  CHECK(idle.loss_w == Approx(0.0));

  const ModulePower discharge = module_power(p, 0.5, 10.0);
  CHECK(discharge.internal_w == Approx(36.0));
  CHECK(discharge.output_w == Approx(31.37));
  CHECK(discharge.loss_w == Approx(4.63));

  const ModulePower charge = module_power(p, 0.5, -10.0);
  CHECK(charge.loss_w == Approx(discharge.loss_w));  // even in current

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> current(-12.0, 12.0);
  std::uniform_real_distribution<double> soc(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const ModulePower mp = module_power(p, soc(rng), current(rng));
    CHECK(mp.loss_w >= 0.0);
    CHECK(mp.output_w <= mp.internal_w);
  }
}

TEST_CASE("thermal step equilibrium and single-cell heating", "[cell_model]") {
  const CellParams p = reference_cell();
  ThermalNetworkParams net;
  net.t_env_k = 301.0;

  std::vector<CellParams> params{p, p, p};
  std::vector<double> temps{301.0, 301.0, 301.0};
  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK(thermal_step(temps, zero, params, net, 1.0) == temps);

  // Isolated cell: convection disabled, single cell, 10 A.
  ThermalNetworkParams isolated;
  isolated.r_conv_k_per_w = std::numeric_limits<double>::infinity();
  std::vector<CellParams> one{p};
  one[0].c_th_j_per_k = 40.23;
  const auto heated = thermal_step({300.0}, {10.0}, one, isolated, 1.0);
  CHECK(heated[0] - 300.0 == Approx(3.13 / 40.23).epsilon(1e-12));

  CHECK_THROWS_AS(thermal_step({300.0}, {0.0}, one, isolated, 0.0), std::domain_error);
}

TEST_CASE("thermal step heat flows hot to cold, convection drains energy",
          "[cell_model]") {
  const CellParams p = reference_cell();
  ThermalNetworkParams net;
  net.r_conv_k_per_w = 41.05;
  net.r_cnd_k_per_w = 26.6;
  net.t_env_k = 301.0;

  std::vector<CellParams> params{p, p};
  std::vector<double> temps{300.0, 302.0};
  std::vector<double> zero{0.0, 0.0};
  const auto next = thermal_step(temps, zero, params, net, 1.0);
  CHECK(next[0] > temps[0]);
  CHECK(next[1] < temps[1]);

  // Energy balance: with zero current, sum C_th*T changes only through
  // convection toward the environment (here symmetric around T_env).
  const double before = p.c_th_j_per_k * (temps[0] + temps[1]);
  const double after = p.c_th_j_per_k * (next[0] + next[1]);
  const double conv_w = (temps[0] - net.t_env_k + temps[1] - net.t_env_k) / 41.05;
  CHECK(after - before == Approx(-conv_w).margin(1e-12));
}

TEST_CASE("thermal conservation under adiabatic test mode", "[cell_model][property]") {
  const CellParams base = reference_cell();
  ThermalNetworkParams net;
  net.r_conv_k_per_w = std::numeric_limits<double>::infinity();
  net.r_cnd_k_per_w = 26.6;

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> temp0(295.0, 315.0);
  std::uniform_real_distribution<double> amps(-8.0, 8.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 7);
    std::vector<CellParams> params(n, base);
    std::vector<double> temps(n);
    std::vector<double> currents(n);
    for (int j = 0; j < n; ++j) {
      temps[j] = temp0(rng);
      currents[j] = amps(rng);
    }
    const double dt = 1.0;
    const auto next = thermal_step(temps, currents, params, net, dt);
    double delta = 0.0;
    double heat = 0.0;
    for (int j = 0; j < n; ++j) {
      delta += params[j].c_th_j_per_k * (next[j] - temps[j]);
      heat += params[j].r_int_ohm * currents[j] * currents[j] * dt;
    }
    // Conduction telescopes to zero with adiabatic ends.
    CHECK(delta == Approx(heat).epsilon(1e-9));
  }
}

TEST_CASE("energy frame from the worked numbers", "[cell_model]") {
  const CellParams p = reference_cell();
  const EnergyFrame frame = to_energy_frame(p, 0.5);

  CHECK(frame.c_equiv == Approx(15000.0));
  CHECK(frame.e0_j == Approx(97200.0));
  CHECK(frame.e_j == 0.0);
  CHECK(energy_at(frame, 0.5) == Approx(0.0).margin(1e-9));
  CHECK(energy_at(frame, 0.2) == Approx(-9477.0));

  EnergyFrame bad = frame;
  bad.e_j = -frame.e0_j - 1.0;
  CHECK_THROWS_AS(from_energy_frame(bad), std::runtime_error);
}

TEST_CASE("soc -> energy -> soc round trip", "[cell_model][property]") {
  const CellParams p = reference_cell();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> soc(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double q = soc(rng);
    EnergyFrame frame = to_energy_frame(p, 0.5);
    frame.e_j = energy_at(frame, q);
    CHECK(from_energy_frame(frame) == Approx(q).margin(1e-9));
  }
}

TEST_CASE("energy dynamics consistency with coulomb counting", "[cell_model][property]") {
  // For constant current over a step, delta-e through the frame equals
  // -P_b * dt within 0.5 % (linearized-model identity plus discretization).
  const CellParams p = reference_cell();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> soc(0.1, 0.9);
  std::uniform_real_distribution<double> amps(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double q = soc(rng);
    const double i_a = amps(rng);
    if (std::abs(i_a) < 0.1) {
      continue;
    }
    const double dt = 1.0;
    const EnergyFrame frame = to_energy_frame(p, q);
    const CellState next = soc_step({q, 298.0, true}, p, i_a, dt);
    const double de = energy_at(frame, next.q) - energy_at(frame, q);
    const double pb = p.ocv.eval(q) * i_a;
    CHECK(de == Approx(-pb * dt).epsilon(5e-3));
  }
}
