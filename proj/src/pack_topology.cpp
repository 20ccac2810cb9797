#include "rbess/pack_topology.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rbess {

namespace {

bool is_tail_suffix(const std::vector<SwitchTriplet>& triplets, std::size_t from) {
  for (std::size_t i = from; i < triplets.size(); ++i) {
    if (!(triplets[i] == kBypassTail)) {
      return false;
    }
  }
  return true;
}

// Integer ceiling of a positive ratio with a small relative guard so that
// exact integer ratios do not round up from floating-point noise.
int ceil_ratio(double num, double den) {
  const double ratio = num / den;
  return static_cast<int>(std::ceil(ratio - 1e-9));
}

}  // namespace

PackTopology PackTopology::all_series(std::size_t n_cells) {
  if (n_cells == 0) {
    throw std::invalid_argument("PackTopology: need at least one cell");
  }
  PackTopology t;
  t.n_ = n_cells;
  t.triplets_.assign(n_cells > 0 ? n_cells - 1 : 0, kSeries);
  return t;
}

std::vector<TopologyViolation> PackTopology::validate() const {
  std::vector<TopologyViolation> violations;
  for (std::size_t i = 0; i < triplets_.size(); ++i) {
    const SwitchTriplet& t = triplets_[i];
    if (t == kSeries || t == kParallel || t == kBypassLeft) {
      continue;
    }
    if (t == kBypassTail) {
      // Legal only as part of a trailing bypass run reaching the output rail.
      if (!is_tail_suffix(triplets_, i)) {
        violations.push_back({i, "tail-bypass pattern (0,1,0) not part of a trailing run"});
      }
      continue;
    }
    std::ostringstream why;
    why << "forbidden pattern (" << t.s1 << "," << t.s2 << "," << t.s3 << ")";
    violations.push_back({i, why.str()});
  }
  return violations;
}

Connectivity PackTopology::derive_connectivity() const {
  const auto violations = validate();
  if (!violations.empty()) {
    throw std::invalid_argument("derive_connectivity: invalid topology at triplet " +
                                std::to_string(violations.front().triplet_index) + ": " +
                                violations.front().reason);
  }
  Connectivity conn;
  if (n_ == 0) {
    return conn;
  }

  // Trailing (0,1,0) run: triplets ts..n-2 bypass cells ts+1..n-1.
  std::size_t tail_start = triplets_.size();
  while (tail_start > 0 && triplets_[tail_start - 1] == kBypassTail) {
    --tail_start;
  }

  std::vector<bool> bypassed(n_, false);
  for (std::size_t i = tail_start; i < triplets_.size(); ++i) {
    bypassed[i + 1] = true;
  }
  for (std::size_t i = 0; i < tail_start; ++i) {
    if (triplets_[i] == kBypassLeft) {
      bypassed[i] = true;
    }
  }

  std::vector<std::size_t> in_service;
  for (std::size_t c = 0; c < n_; ++c) {
    if (bypassed[c]) {
      conn.bypassed.push_back(c);
    } else {
      in_service.push_back(c);
    }
  }
  if (in_service.empty()) {
    throw std::invalid_argument("derive_connectivity: no in-service cell");
  }

  // Relations between consecutive in-service cells are carried by the triplet
  // at the left cell's boundary.
  conn.series_groups.push_back({in_service.front()});
  for (std::size_t k = 1; k < in_service.size(); ++k) {
    const std::size_t prev = in_service[k - 1];
    const std::size_t cell = in_service[k];
    const SwitchTriplet& rel = triplets_[prev];
    if (rel == kParallel) {
      if (cell != prev + 1) {
        throw std::invalid_argument(
            "derive_connectivity: parallel pattern across a bypassed cell at triplet " +
            std::to_string(prev));
      }
      conn.series_groups.back().push_back(cell);
    } else if (rel == kSeries) {
      conn.series_groups.push_back({cell});
    } else {
      throw std::invalid_argument(
          "derive_connectivity: in-service cell " + std::to_string(prev) +
          " carries a bypass pattern on its boundary");
    }
  }
  return conn;
}

PackTopology PackTopology::from_connectivity(std::size_t n_cells, const Connectivity& conn) {
  std::vector<bool> bypassed(n_cells, false);
  for (std::size_t c : conn.bypassed) {
    if (c >= n_cells) {
      throw std::invalid_argument("from_connectivity: cell index out of range");
    }
    bypassed[c] = true;
  }
  std::vector<std::size_t> group_of(n_cells, static_cast<std::size_t>(-1));
  std::size_t covered = 0;
  std::size_t last_in_service = 0;
  for (std::size_t g = 0; g < conn.series_groups.size(); ++g) {
    const auto& group = conn.series_groups[g];
    if (group.empty()) {
      throw std::invalid_argument("from_connectivity: empty series group");
    }
    for (std::size_t k = 0; k < group.size(); ++k) {
      const std::size_t c = group[k];
      if (c >= n_cells || bypassed[c] || group_of[c] != static_cast<std::size_t>(-1)) {
        throw std::invalid_argument("from_connectivity: bad cell assignment");
      }
      if (k > 0 && c != group[k - 1] + 1) {
        throw std::invalid_argument(
            "from_connectivity: parallel group members must be physically adjacent");
      }
      group_of[c] = g;
      last_in_service = std::max(last_in_service, c);
      ++covered;
    }
  }
  if (covered + conn.bypassed.size() != n_cells) {
    throw std::invalid_argument("from_connectivity: partition does not cover all cells");
  }
  if (covered == 0) {
    throw std::invalid_argument("from_connectivity: all cells bypassed");
  }

  PackTopology t;
  t.n_ = n_cells;
  t.triplets_.assign(n_cells - 1, kSeries);
  for (std::size_t i = 0; i + 1 < n_cells; ++i) {
    if (i >= last_in_service) {
      t.triplets_[i] = kBypassTail;  // bottom-rail chain to the output
    } else if (bypassed[i]) {
      t.triplets_[i] = kBypassLeft;
    } else if (!bypassed[i + 1] && group_of[i] == group_of[i + 1]) {
      t.triplets_[i] = kParallel;
    } else {
      t.triplets_[i] = kSeries;
    }
  }
  return t;
}

std::vector<std::size_t> PackTopology::in_service_cells() const {
  Connectivity conn = derive_connectivity();
  std::vector<std::size_t> cells;
  for (const auto& group : conn.series_groups) {
    cells.insert(cells.end(), group.begin(), group.end());
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

bool PackTopology::is_bypassed(std::size_t cell) const {
  Connectivity conn = derive_connectivity();
  return std::binary_search(conn.bypassed.begin(), conn.bypassed.end(), cell);
}

PackTopology PackTopology::bypass(std::size_t cell) const {
  if (cell >= n_) {
    throw std::invalid_argument("bypass: cell index out of range");
  }
  Connectivity conn = derive_connectivity();
  if (std::binary_search(conn.bypassed.begin(), conn.bypassed.end(), cell)) {
    return *this;  // idempotent
  }
  std::size_t in_service = 0;
  for (const auto& group : conn.series_groups) {
    in_service += group.size();
  }
  if (in_service <= 1) {
    throw std::runtime_error("bypass: cannot bypass the last in-service cell");
  }
  conn.bypassed.push_back(cell);
  std::sort(conn.bypassed.begin(), conn.bypassed.end());
  for (auto it = conn.series_groups.begin(); it != conn.series_groups.end(); ++it) {
    auto pos = std::find(it->begin(), it->end(), cell);
    if (pos != it->end()) {
      it->erase(pos);
      if (it->empty()) {
        conn.series_groups.erase(it);
      } else {
        // A removed interior member may split the adjacency run; re-split so
        // every group stays physically contiguous.
        std::vector<std::vector<std::size_t>> pieces;
        pieces.push_back({(*it)[0]});
        for (std::size_t k = 1; k < it->size(); ++k) {
          if ((*it)[k] == pieces.back().back() + 1) {
            pieces.back().push_back((*it)[k]);
          } else {
            pieces.push_back({(*it)[k]});
          }
        }
        if (pieces.size() > 1) {
          const std::size_t at = static_cast<std::size_t>(it - conn.series_groups.begin());
          conn.series_groups.erase(it);
          conn.series_groups.insert(conn.series_groups.begin() + at, pieces.begin(),
                                    pieces.end());
        }
      }
      break;
    }
  }
  return from_connectivity(n_, conn);
}

std::string PackTopology::serialize() const {
  std::ostringstream out;
  out << "n=" << n_ << ";";
  for (std::size_t i = 0; i < triplets_.size(); ++i) {
    if (i > 0) {
      out << ",";
    }
    out << (triplets_[i].s1 ? '1' : '0') << (triplets_[i].s2 ? '1' : '0')
        << (triplets_[i].s3 ? '1' : '0');
  }
  return out.str();
}

PackTopology PackTopology::parse(const std::string& text) {
  if (text.rfind("n=", 0) != 0) {
    throw std::invalid_argument("topology string must start with \"n=\"");
  }
  const std::size_t semi = text.find(';');
  if (semi == std::string::npos) {
    throw std::invalid_argument("topology string missing ';'");
  }
  std::size_t n = 0;
  try {
    n = static_cast<std::size_t>(std::stoul(text.substr(2, semi - 2)));
  } catch (const std::exception&) {
    throw std::invalid_argument("topology string has a bad cell count");
  }
  if (n == 0) {
    throw std::invalid_argument("topology string needs n >= 1");
  }

  PackTopology t;
  t.n_ = n;
  std::string rest = text.substr(semi + 1);
  std::istringstream ss(rest);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.size() != 3 || tok.find_first_not_of("01") != std::string::npos) {
      throw std::invalid_argument("bad switch triplet token: \"" + tok + "\"");
    }
    t.triplets_.push_back(SwitchTriplet{tok[0] == '1', tok[1] == '1', tok[2] == '1'});
  }
  if (t.triplets_.size() != n - 1) {
    throw std::invalid_argument("topology string needs exactly n-1 triplets");
  }
  return t;
}

ReconfigSpec plan_reconfiguration(double v_target_v, double v_conv_max_v, double p_out_w,
                                  double i_conv_max_a, std::size_t in_service_count) {
  if (!(v_target_v > 0.0) || !(v_conv_max_v > 0.0) || !(p_out_w > 0.0) ||
      !(i_conv_max_a > 0.0)) {
    throw std::invalid_argument("plan_reconfiguration: inputs must be positive");
  }
  ReconfigSpec spec;
  spec.v_target_v = v_target_v;
  spec.v_conv_max_v = v_conv_max_v;
  spec.i_conv_max_a = i_conv_max_a;
  spec.i_out_a = p_out_w / v_target_v;
  spec.n_series = std::max(1, ceil_ratio(v_target_v, v_conv_max_v));
  spec.n_parallel = std::max(1, ceil_ratio(spec.i_out_a, i_conv_max_a));

  if (static_cast<std::size_t>(spec.n_series) > in_service_count) {
    throw std::runtime_error("plan_reconfiguration: demanded voltage unreachable with " +
                             std::to_string(in_service_count) + " in-service cells");
  }
  while (static_cast<std::size_t>(spec.n_series) * static_cast<std::size_t>(spec.n_parallel) >
         in_service_count) {
    --spec.n_parallel;
  }
  return spec;
}

PackTopology apply_reconfiguration(const PackTopology& base, const ReconfigSpec& spec) {
  if (spec.n_series < 1 || spec.n_parallel < 1) {
    throw std::invalid_argument("apply_reconfiguration: counts must be >= 1");
  }
  const Connectivity existing = base.derive_connectivity();
  std::vector<bool> available(base.cell_count(), false);
  std::size_t in_service = 0;
  for (const auto& group : existing.series_groups) {
    for (std::size_t c : group) {
      available[c] = true;
      ++in_service;
    }
  }
  const std::size_t wanted =
      static_cast<std::size_t>(spec.n_series) * static_cast<std::size_t>(spec.n_parallel);
  if (wanted > in_service) {
    throw std::runtime_error("apply_reconfiguration: spec needs " + std::to_string(wanted) +
                             " cells but only " + std::to_string(in_service) +
                             " are in service");
  }

  // Greedy left-to-right packing of physically adjacent runs; stranded cells
  // and the high-index surplus end up bypassed.
  Connectivity conn;
  std::vector<std::size_t> current;
  for (std::size_t c = 0; c < base.cell_count(); ++c) {
    if (conn.series_groups.size() == static_cast<std::size_t>(spec.n_series)) {
      break;
    }
    if (!available[c]) {
      current.clear();
      continue;
    }
    current.push_back(c);
    if (current.size() == static_cast<std::size_t>(spec.n_parallel)) {
      conn.series_groups.push_back(current);
      current.clear();
    }
  }
  if (conn.series_groups.size() != static_cast<std::size_t>(spec.n_series)) {
    throw std::runtime_error(
        "apply_reconfiguration: cannot pack " + std::to_string(spec.n_parallel) + "P" +
        std::to_string(spec.n_series) + "S groups from physically adjacent in-service runs");
  }
  std::set<std::size_t> used;
  for (const auto& group : conn.series_groups) {
    used.insert(group.begin(), group.end());
  }
  for (std::size_t c = 0; c < base.cell_count(); ++c) {
    if (used.count(c) == 0) {
      conn.bypassed.push_back(c);
    }
  }
  return PackTopology::from_connectivity(base.cell_count(), conn);
}

std::vector<double> aggregate_switch_resistance(const PackTopology& topology,
                                                double per_switch_ohm) {
  const Connectivity conn = topology.derive_connectivity();
  std::vector<double> r(topology.cell_count(), 0.0);
  for (std::size_t g = 0; g < conn.series_groups.size(); ++g) {
    const auto& group = conn.series_groups[g];
    for (std::size_t k = 0; k < group.size(); ++k) {
      // Every branch of an n_p-parallel group crosses n_p - 1 tie switches.
      std::size_t switches = group.size() - 1;
      if (k == 0) {
        // Junction feeding this group: the series entry switch (absent for the
        // first group) plus one bypass switch per skipped cell, attributed to
        // the downstream module.
        const std::size_t from = (g == 0) ? 0 : conn.series_groups[g - 1].back() + 1;
        switches += (group.front() - from) + (g > 0 ? 1 : 0);
      }
      if (g + 1 == conn.series_groups.size() && k == group.size() - 1) {
        // Trailing bottom-rail chain to the output, one switch per triplet.
        switches += topology.cell_count() - 1 - group.back();
      }
      r[group[k]] = per_switch_ohm * static_cast<double>(switches);
    }
  }
  return r;
}

}  // namespace rbess
