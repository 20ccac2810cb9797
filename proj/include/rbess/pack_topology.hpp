// Switching-circuit state machine: the 3-switches-per-adjacent-pair matrix,
// bypass/series/parallel transitions, and the post-fault n_p P n_s S
// reconfiguration heuristic.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rbess {

// Switch states between modules i and i+1. Permitted patterns:
//   (0,0,1) series, (1,1,0) parallel, (1,0,0) bypass of the left cell,
//   (0,1,0) bypass of the right cell (only as part of a trailing run).
struct SwitchTriplet {
  bool s1 = false;
  bool s2 = false;
  bool s3 = true;

  bool operator==(const SwitchTriplet&) const = default;
};

inline constexpr SwitchTriplet kSeries{false, false, true};
inline constexpr SwitchTriplet kParallel{true, true, false};
inline constexpr SwitchTriplet kBypassLeft{true, false, false};
inline constexpr SwitchTriplet kBypassTail{false, true, false};

struct TopologyViolation {
  std::size_t triplet_index = 0;  // 0-based
  std::string reason;
};

// Derived connectivity: bypassed set plus ordered series groups, each a set of
// parallel cells. Cell indices are 0-based internally.
struct Connectivity {
  std::vector<std::size_t> bypassed;                  // ascending
  std::vector<std::vector<std::size_t>> series_groups;  // each ascending
};

struct ReconfigSpec {
  int n_series = 1;    // series groups
  int n_parallel = 1;  // cells per group
  double v_target_v = 0.0;
  double v_conv_max_v = 0.0;
  double i_conv_max_a = 0.0;
  double i_out_a = 0.0;
};

class PackTopology {
 public:
  PackTopology() = default;
  // All-series string over n cells.
  static PackTopology all_series(std::size_t n_cells);
  // Canonical matrix for a connectivity partition (throws if not encodable).
  static PackTopology from_connectivity(std::size_t n_cells, const Connectivity& conn);

  std::size_t cell_count() const { return n_; }
  const std::vector<SwitchTriplet>& triplets() const { return triplets_; }

  // Pattern-level validation; returns every violation, not just the first.
  std::vector<TopologyViolation> validate() const;
  bool valid() const { return validate().empty(); }

  // Pure function of the switch matrix; throws std::invalid_argument on an
  // invalid or structurally inconsistent matrix.
  Connectivity derive_connectivity() const;

  std::vector<std::size_t> in_service_cells() const;
  bool is_bypassed(std::size_t cell) const;

  // Bypasses one cell (idempotent). Throws std::runtime_error when the cell is
  // the last one in service.
  PackTopology bypass(std::size_t cell) const;

  // Single-line text encoding, e.g. "n=5;110,001,110,001".
  std::string serialize() const;
  static PackTopology parse(const std::string& text);

 private:
  std::size_t n_ = 0;
  std::vector<SwitchTriplet> triplets_;
};

// Eq.-(19) sizing with ceiling rounding on both counts. If n_s * n_p exceeds
// the in-service count, n_p is reduced; an unreachable target voltage
// (n_s > in_service) throws std::runtime_error.
ReconfigSpec plan_reconfiguration(double v_target_v, double v_conv_max_v,
                                  double p_out_w, double i_conv_max_a,
                                  std::size_t in_service_count);

// Builds the n_p P n_s S topology over the in-service cells of `base` in index
// order. Groups are packed greedily over physically adjacent in-service runs;
// surplus in-service cells are bypassed (highest index first by construction).
// Throws std::runtime_error when the groups cannot be packed.
PackTopology apply_reconfiguration(const PackTopology& base, const ReconfigSpec& spec);

// Per-module switch-path resistance: each member of an n_p-parallel group
// crosses n_p - 1 tie switches; the group's series entry switch is attributed
// to the group's lowest-index member (downstream-module convention). Bypassed
// modules get 0.
std::vector<double> aggregate_switch_resistance(const PackTopology& topology,
                                                double per_switch_ohm);

}  // namespace rbess
