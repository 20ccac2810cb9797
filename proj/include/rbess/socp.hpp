// Second-order cone programming: a sparse problem builder and a self-contained
// primal-dual interior-point solver (homogeneous self-dual embedding with
// Nesterov-Todd scaling and Mehrotra predictor-corrector steps).
//
// Standard form:  min c'x  s.t.  A x = b,  G x + s = h,
//                 s in (R+)^lp_rows x SOC(d_1) x ... x SOC(d_N),
// with SOC(d) = { v in R^d : v_0 >= ||v_1..d-1|| }.
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <iosfwd>
#include <memory>
#include <utility>
#include <vector>

namespace rbess::socp {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

struct Settings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  double feastol_inacc = 1e-4;
  double abstol_inacc = 5e-5;
  double reltol_inacc = 5e-5;
  int max_iters = 60;
  int refine_iters = 9;
  double static_reg = 7e-8;     // static KKT regularization
  double refine_target = 1e-13;
  double refine_stop_ratio = 6.0;
  double step_scale = 0.99;
  double step_min = 1e-6;
  double step_max = 0.9999;
  double sigma_min = 1e-4;
  double sigma_max = 1.0;
  double residual_guard = 500.0;  // backtrack when pres blows up this much
  int equil_iters = 3;
  bool verbose = false;
};

enum class SolveStatus {
  optimal,
  optimal_inaccurate,
  primal_infeasible,
  dual_infeasible,
  max_iterations,
  numerical_failure,
};

const char* to_string(SolveStatus status);

struct Solution {
  SolveStatus status = SolveStatus::numerical_failure;
  Vector x;
  Vector y;  // equality multipliers
  Vector z;  // cone multipliers
  Vector s;  // cone slacks
  double primal_obj = 0.0;
  double gap = 0.0;
  double pres = 0.0;
  double dres = 0.0;
  int iterations = 0;
};

struct Problem {
  int n_vars = 0;
  int lp_rows = 0;
  std::vector<int> soc_dims;
  SparseMatrix A;
  Vector b;
  SparseMatrix G;
  Vector h;
  Vector c;
};

// Row-by-row assembly of a conic problem. Equality rows, LP rows, and SOC
// blocks may be interleaved while building; compile() orders G as [LP; cones].
class ProblemBuilder {
 public:
  using Terms = std::vector<std::pair<int, double>>;

  int add_var(double cost = 0.0);
  int var_count() const { return n_vars_; }
  void add_cost(int var, double coef);

  // sum(terms) == rhs
  void add_eq(const Terms& terms, double rhs);
  // sum(terms) <= ub
  void add_le(const Terms& terms, double ub);
  // s_i = h_i - sum(terms_i) for each row; s must lie in SOC(rows.size()).
  struct ConeRow {
    Terms terms;
    double h = 0.0;
  };
  void add_soc(std::vector<ConeRow> rows);

  int eq_count() const { return static_cast<int>(eq_rhs_.size()); }
  int le_count() const { return static_cast<int>(le_rhs_.size()); }
  int soc_count() const { return static_cast<int>(cones_.size()); }

  Problem compile() const;

 private:
  int n_vars_ = 0;
  std::vector<double> cost_;
  std::vector<Terms> eq_terms_;
  std::vector<double> eq_rhs_;
  std::vector<Terms> le_terms_;
  std::vector<double> le_rhs_;
  std::vector<std::vector<ConeRow>> cones_;
};

// Plain-text dump of a compiled problem (documented in the README); useful for
// cross-solver debugging.
void dump_problem(const Problem& problem, std::ostream& out);

class ConeSolver {
 public:
  explicit ConeSolver(const Problem& problem, Settings settings = {});
  ~ConeSolver();

  ConeSolver(const ConeSolver&) = delete;
  ConeSolver& operator=(const ConeSolver&) = delete;

  Solution solve();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Solution solve(const Problem& problem, Settings settings = {});

}  // namespace rbess::socp
