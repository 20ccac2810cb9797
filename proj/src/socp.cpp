#include "rbess/socp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace rbess::socp {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::optimal_inaccurate: return "optimal_inaccurate";
    case SolveStatus::primal_infeasible: return "primal_infeasible";
    case SolveStatus::dual_infeasible: return "dual_infeasible";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ProblemBuilder

int ProblemBuilder::add_var(double cost) {
  cost_.push_back(cost);
  return n_vars_++;
}

void ProblemBuilder::add_cost(int var, double coef) { cost_.at(var) += coef; }

void ProblemBuilder::add_eq(const Terms& terms, double rhs) {
  eq_terms_.push_back(terms);
  eq_rhs_.push_back(rhs);
}

void ProblemBuilder::add_le(const Terms& terms, double ub) {
  le_terms_.push_back(terms);
  le_rhs_.push_back(ub);
}

void ProblemBuilder::add_soc(std::vector<ConeRow> rows) {
  if (rows.size() < 2) {
    throw std::invalid_argument("add_soc: cone needs at least 2 rows");
  }
  cones_.push_back(std::move(rows));
}

Problem ProblemBuilder::compile() const {
  Problem p;
  p.n_vars = n_vars_;
  p.lp_rows = static_cast<int>(le_rhs_.size());
  p.c = Eigen::Map<const Vector>(cost_.data(), n_vars_);

  const int n_eq = static_cast<int>(eq_rhs_.size());
  p.A.resize(n_eq, n_vars_);
  p.b.resize(n_eq);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int r = 0; r < n_eq; ++r) {
      for (const auto& [var, coef] : eq_terms_[r]) {
        trip.emplace_back(r, var, coef);
      }
      p.b(r) = eq_rhs_[r];
    }
    p.A.setFromTriplets(trip.begin(), trip.end());
  }

  int n_ineq = p.lp_rows;
  for (const auto& cone : cones_) {
    p.soc_dims.push_back(static_cast<int>(cone.size()));
    n_ineq += static_cast<int>(cone.size());
  }
  p.G.resize(n_ineq, n_vars_);
  p.h.resize(n_ineq);
  {
    std::vector<Eigen::Triplet<double>> trip;
    int r = 0;
    for (int i = 0; i < p.lp_rows; ++i, ++r) {
      for (const auto& [var, coef] : le_terms_[i]) {
        trip.emplace_back(r, var, coef);
      }
      p.h(r) = le_rhs_[i];
    }
    for (const auto& cone : cones_) {
      for (const ConeRow& row : cone) {
        for (const auto& [var, coef] : row.terms) {
          trip.emplace_back(r, var, coef);
        }
        p.h(r) = row.h;
        ++r;
      }
    }
    p.G.setFromTriplets(trip.begin(), trip.end());
  }
  return p;
}

namespace {

void dump_rows(const SparseMatrix& mat, const Vector& rhs, const char* tag,
               std::ostream& out) {
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rm(mat);
  for (int r = 0; r < rm.rows(); ++r) {
    out << tag << " " << r << " :";
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rm, r); it; ++it) {
      out << " " << it.col() << ":" << it.value();
    }
    out << " | " << rhs(r) << "\n";
  }
}

}  // namespace

// Format: one line per row as "<tag> <row> : <var>:<coef> ... | <rhs>",
// tags eq (A x = b) and ineq (G x + s = h); cone membership of the s rows is
// given by lp_rows and soc_dims. Minimization of the sparse objective "obj".
void dump_problem(const Problem& p, std::ostream& out) {
  out << "# conic problem, standard form\n";
  out << "# min c'x  s.t.  A x = b;  G x + s = h;  s in (R+)^lp_rows x SOC(soc_dims...)\n";
  out << "vars " << p.n_vars << "\n";
  out << "eq_rows " << p.A.rows() << "\n";
  out << "ineq_rows " << p.G.rows() << "\n";
  out << "lp_rows " << p.lp_rows << "\n";
  out << "soc_dims";
  for (int d : p.soc_dims) {
    out << " " << d;
  }
  out << "\n";
  out << "obj :";
  for (int i = 0; i < p.c.size(); ++i) {
    if (p.c(i) != 0.0) {
      out << " " << i << ":" << p.c(i);
    }
  }
  out << "\n";
  dump_rows(p.A, p.b, "eq", out);
  dump_rows(p.G, p.h, "ineq", out);
}

// ---------------------------------------------------------------------------
// ConeSolver

namespace {

struct SocScaling {
  int dim = 0;
  double eta = 0.0;
  double eta_sq = 0.0;
  double a = 0.0;   // scaling point first coordinate
  double w = 0.0;   // ||q||^2
  double d1 = 0.0;
  double u0 = 0.0;
  double u1 = 0.0;
  double v1 = 0.0;
  Vector q;
};

enum class Exit { not_yet, optimal, optimal_inacc, pinf, pinf_inacc, dinf, dinf_inacc };

}  // namespace

struct ConeSolver::Impl {
  Settings cfg;

  int n = 0;       // variables
  int p = 0;       // equality rows
  int m = 0;       // cone rows (lp + soc)
  int lp = 0;      // lp rows
  int mtilde = 0;  // expanded cone block (m + 2 per soc)
  int dim_k = 0;

  SparseMatrix A, G, At, Gt;
  Vector b, h, c;
  std::vector<int> soc_dims;

  // Ruiz-style equilibration scalings.
  Vector e_var, e_eq, e_ineq;

  SparseMatrix K;  // upper triangle
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper> ldlt;
  std::vector<double*> k_scaling_slots;  // V block values, update order
  std::vector<double*> k_data_slots;     // A' and G' values, update order
  bool pattern_analyzed = false;

  // NT scalings
  Vector lp_v, lp_w;  // s/z and sqrt(s/z) on the LP cone
  std::vector<SocScaling> socs;

  // iterate
  Vector x, y, z, s, lambda;
  double tau = 1.0, kap = 1.0;

  // residuals and statistics
  Vector rx, ry, rz;
  double rt = 0.0, hresx = 0.0, hresy = 0.0, hresz = 0.0;
  double cx = 0.0, by = 0.0, hz = 0.0;
  double nx = 0.0, ny = 0.0, nz = 0.0, ns = 0.0;
  double resx0 = 1.0, resy0 = 1.0, resz0 = 1.0;
  double gap = 0.0, mu = 0.0, pcost = 0.0, dcost = 0.0;
  double relgap = std::numeric_limits<double>::quiet_NaN();
  double pres = 0.0, dres = 0.0;
  double pinfres = std::numeric_limits<double>::quiet_NaN();
  double dinfres = std::numeric_limits<double>::quiet_NaN();
  double step = 0.0;

  // best-iterate safeguard
  Vector best_x, best_y, best_z, best_s;
  double best_tau = 1.0, best_kap = 1.0;
  double best_pres = 0.0, best_dres = 0.0, best_gap = 0.0, best_relgap = 0.0;
  double best_pcost = 0.0, best_dcost = 0.0, best_cx = 0.0, best_by = 0.0, best_hz = 0.0;
  double best_pinfres = std::numeric_limits<double>::quiet_NaN();
  double best_dinfres = std::numeric_limits<double>::quiet_NaN();
  double best_kapovert = 0.0, best_mu = 0.0;
  bool have_best = false;

  Vector rhs1, rhs2;

  explicit Impl(const Problem& problem, Settings settings) : cfg(settings) {
    n = problem.n_vars;
    p = static_cast<int>(problem.A.rows());
    m = static_cast<int>(problem.G.rows());
    lp = problem.lp_rows;
    soc_dims = problem.soc_dims;
    int soc_total = 0;
    for (int d : soc_dims) {
      if (d < 2) {
        throw std::invalid_argument("ConeSolver: SOC dimension must be >= 2");
      }
      soc_total += d;
    }
    if (lp + soc_total != m) {
      throw std::invalid_argument("ConeSolver: cone dimensions do not match G");
    }
    if (m == 0) {
      throw std::invalid_argument("ConeSolver: need at least one conic row");
    }
    A = problem.A;
    G = problem.G;
    b = problem.b;
    h = problem.h;
    c = problem.c;
    A.makeCompressed();
    G.makeCompressed();

    mtilde = m + 2 * static_cast<int>(soc_dims.size());
    dim_k = n + p + mtilde;

    equilibrate();
    At = A.transpose();
    Gt = G.transpose();

    socs.resize(soc_dims.size());
    for (std::size_t i = 0; i < soc_dims.size(); ++i) {
      socs[i].dim = soc_dims[i];
      socs[i].q.resize(soc_dims[i] - 1);
    }
    lp_v.resize(lp);
    lp_w.resize(lp);

    x.resize(n);
    y.resize(p);
    z.resize(m);
    s.resize(m);
    lambda.resize(m);
    rx.resize(n);
    ry.resize(p);
    rz.resize(m);
    rhs1.resize(dim_k);
    rhs2.resize(dim_k);

    setup_kkt();
  }

  // --- equilibration -------------------------------------------------------

  static void col_abs_max(Vector& e, const SparseMatrix& mat) {
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(mat, k); it; ++it) {
        e(it.col()) = std::max(e(it.col()), std::abs(it.value()));
      }
    }
  }
  static void row_abs_max(Vector& e, const SparseMatrix& mat) {
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(mat, k); it; ++it) {
        e(it.row()) = std::max(e(it.row()), std::abs(it.value()));
      }
    }
  }
  static void scale_rows(const Vector& e, SparseMatrix& mat) {
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(mat, k); it; ++it) {
        it.valueRef() /= e(it.row());
      }
    }
  }
  static void scale_cols(const Vector& e, SparseMatrix& mat) {
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(mat, k); it; ++it) {
        it.valueRef() /= e(it.col());
      }
    }
  }

  void equilibrate() {
    e_var = Vector::Ones(n);
    e_eq = Vector::Ones(p);
    e_ineq = Vector::Ones(m);
    const auto sqrt_or_one = [](double v) { return v < 1e-6 ? 1.0 : std::sqrt(v); };

    for (int iter = 0; iter < cfg.equil_iters; ++iter) {
      Vector tv = Vector::Zero(n);
      Vector ta = Vector::Zero(p);
      Vector tg = Vector::Zero(m);
      col_abs_max(tv, A);
      col_abs_max(tv, G);
      row_abs_max(ta, A);
      row_abs_max(tg, G);

      // Rows of one SOC must share a scaling to preserve the cone.
      int at = lp;
      for (int d : soc_dims) {
        const double total = tg.segment(at, d).sum();
        tg.segment(at, d).setConstant(total);
        at += d;
      }
      tv = tv.unaryExpr(sqrt_or_one);
      ta = ta.unaryExpr(sqrt_or_one);
      tg = tg.unaryExpr(sqrt_or_one);

      scale_rows(ta, A);
      scale_rows(tg, G);
      scale_cols(tv, A);
      scale_cols(tv, G);

      e_var = e_var.cwiseProduct(tv);
      e_eq = e_eq.cwiseProduct(ta);
      e_ineq = e_ineq.cwiseProduct(tg);
    }
    c = c.cwiseQuotient(e_var);
    b = b.cwiseQuotient(e_eq);
    h = h.cwiseQuotient(e_ineq);
  }

  // --- KKT assembly ---------------------------------------------------------

  // Upper-triangular KKT matrix with statically expanded SOC scaling blocks:
  //
  //   [ dI   A'   G'~ ]          -V = -(W^2) expanded per cone as
  //   [      -dI   0  ]               [ D   v   u ]
  //   [           -V  ]             - [ v'  1   0 ] * eta^2   (+/- regularization)
  //                                   [ u'  0  -1 ]
  void setup_kkt() {
    K.resize(dim_k, dim_k);
    std::vector<Eigen::Triplet<double>> trip;

    for (int i = 0; i < n; ++i) {
      trip.emplace_back(i, i, cfg.static_reg);
    }
    for (int i = 0; i < p; ++i) {
      trip.emplace_back(n + i, n + i, -cfg.static_reg);
    }
    // A' block (rows 0..n-1, cols n..n+p-1)
    for (int col = 0; col < At.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(At, col); it; ++it) {
        trip.emplace_back(it.row(), n + col, it.value());
      }
    }
    // G'~ block: LP columns first, then each cone's dim columns + 2 skips.
    {
      int col_k = n + p;
      int col_g = 0;
      for (int i = 0; i < lp; ++i, ++col_g, ++col_k) {
        for (SparseMatrix::InnerIterator it(Gt, col_g); it; ++it) {
          trip.emplace_back(it.row(), col_k, it.value());
        }
      }
      for (int d : soc_dims) {
        for (int i = 0; i < d; ++i, ++col_g, ++col_k) {
          for (SparseMatrix::InnerIterator it(Gt, col_g); it; ++it) {
            trip.emplace_back(it.row(), col_k, it.value());
          }
        }
        col_k += 2;
      }
      assert(col_k == dim_k);
    }
    // -V block, initialized to the expanded identity.
    {
      int at = n + p;
      for (int i = 0; i < lp; ++i, ++at) {
        trip.emplace_back(at, at, -1.0);
      }
      for (int d : soc_dims) {
        const int d_start = at;
        for (int i = 0; i < d; ++i, ++at) {
          trip.emplace_back(at, at, -1.0);
        }
        const int v_row = at;
        trip.emplace_back(v_row, v_row, -1.0);
        for (int i = 1; i < d; ++i) {
          trip.emplace_back(d_start + i, v_row, 0.0);
        }
        ++at;
        const int u_row = at;
        trip.emplace_back(u_row, u_row, 1.0);
        trip.emplace_back(d_start, u_row, 0.0);
        for (int i = 1; i < d; ++i) {
          trip.emplace_back(d_start + i, u_row, 0.0);
        }
        ++at;
      }
      assert(at == dim_k);
    }
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    cache_slots();
  }

  void cache_slots() {
    k_data_slots.clear();
    k_scaling_slots.clear();
    // Same traversal order as setup_kkt / update functions.
    for (int col = 0; col < At.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(At, col); it; ++it) {
        k_data_slots.push_back(&K.coeffRef(it.row(), n + col));
      }
    }
    {
      int col_k = n + p;
      int col_g = 0;
      for (int i = 0; i < lp; ++i, ++col_g, ++col_k) {
        for (SparseMatrix::InnerIterator it(Gt, col_g); it; ++it) {
          k_data_slots.push_back(&K.coeffRef(it.row(), col_k));
        }
      }
      for (int d : soc_dims) {
        for (int i = 0; i < d; ++i, ++col_g, ++col_k) {
          for (SparseMatrix::InnerIterator it(Gt, col_g); it; ++it) {
            k_data_slots.push_back(&K.coeffRef(it.row(), col_k));
          }
        }
        col_k += 2;
      }
    }
    {
      int at = n + p;
      for (int i = 0; i < lp; ++i, ++at) {
        k_scaling_slots.push_back(&K.coeffRef(at, at));
      }
      for (int d : soc_dims) {
        const int d_start = at;
        for (int i = 0; i < d; ++i, ++at) {
          k_scaling_slots.push_back(&K.coeffRef(at, at));
        }
        const int v_row = at;
        k_scaling_slots.push_back(&K.coeffRef(v_row, v_row));
        for (int i = 1; i < d; ++i) {
          k_scaling_slots.push_back(&K.coeffRef(d_start + i, v_row));
        }
        ++at;
        const int u_row = at;
        k_scaling_slots.push_back(&K.coeffRef(u_row, u_row));
        k_scaling_slots.push_back(&K.coeffRef(d_start, u_row));
        for (int i = 1; i < d; ++i) {
          k_scaling_slots.push_back(&K.coeffRef(d_start + i, u_row));
        }
        ++at;
      }
    }
  }

  void reset_kkt_scalings() {
    std::size_t at = 0;
    for (int i = 0; i < lp; ++i) {
      *k_scaling_slots[at++] = -1.0;
    }
    for (int d : soc_dims) {
      for (int i = 0; i < d; ++i) {
        *k_scaling_slots[at++] = -1.0;
      }
      *k_scaling_slots[at++] = -1.0;  // v diagonal
      for (int i = 1; i < d; ++i) {
        *k_scaling_slots[at++] = 0.0;
      }
      *k_scaling_slots[at++] = 1.0;  // u diagonal
      for (int i = 0; i < d; ++i) {
        *k_scaling_slots[at++] = 0.0;
      }
    }
    assert(at == k_scaling_slots.size());
  }

  void update_kkt_scalings() {
    std::size_t at = 0;
    for (int i = 0; i < lp; ++i) {
      *k_scaling_slots[at++] = -lp_v(i) - cfg.static_reg;
    }
    for (const SocScaling& sc : socs) {
      *k_scaling_slots[at++] = -sc.eta_sq * sc.d1 - cfg.static_reg;
      for (int i = 1; i < sc.dim; ++i) {
        *k_scaling_slots[at++] = -sc.eta_sq - cfg.static_reg;
      }
      *k_scaling_slots[at++] = -sc.eta_sq;
      for (int i = 1; i < sc.dim; ++i) {
        *k_scaling_slots[at++] = -sc.eta_sq * sc.v1 * sc.q(i - 1);
      }
      *k_scaling_slots[at++] = sc.eta_sq + cfg.static_reg;
      *k_scaling_slots[at++] = -sc.eta_sq * sc.u0;
      for (int i = 1; i < sc.dim; ++i) {
        *k_scaling_slots[at++] = -sc.eta_sq * sc.u1 * sc.q(i - 1);
      }
    }
    assert(at == k_scaling_slots.size());
  }

  // --- NT scaling -----------------------------------------------------------

  bool update_scalings() {
    for (int i = 0; i < lp; ++i) {
      if (!(s(i) > 0.0) || !(z(i) > 0.0)) {
        return false;
      }
      lp_v(i) = s(i) / z(i);
      lp_w(i) = std::sqrt(lp_v(i));
    }
    int at = lp;
    for (SocScaling& sc : socs) {
      const double sres =
          s(at) * s(at) - s.segment(at + 1, sc.dim - 1).squaredNorm();
      const double zres =
          z(at) * z(at) - z.segment(at + 1, sc.dim - 1).squaredNorm();
      if (sres <= 0.0 || zres <= 0.0) {
        return false;
      }
      const double snorm = std::sqrt(sres);
      const double znorm = std::sqrt(zres);
      const Vector sbar = s.segment(at, sc.dim) / snorm;
      const Vector zbar = z.segment(at, sc.dim) / znorm;

      sc.eta_sq = snorm / znorm;
      sc.eta = std::sqrt(sc.eta_sq);

      double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
      sc.a = (0.5 / gamma) * (sbar(0) + zbar(0));
      sc.q = (0.5 / gamma) * (sbar.tail(sc.dim - 1) - zbar.tail(sc.dim - 1));
      sc.w = sc.q.squaredNorm();

      const double cc = (1.0 + sc.a) + sc.w / (1.0 + sc.a);
      const double dd = 1.0 + 2.0 / (1.0 + sc.a) + sc.w / ((1.0 + sc.a) * (1.0 + sc.a));
      const double d1 = std::max(
          0.0, 0.5 * (sc.a * sc.a + sc.w * (1.0 - (cc * cc) / (1.0 + sc.w * dd))));
      const double u0_sq = sc.a * sc.a + sc.w - d1;
      const double c2_by_u02 = (cc * cc) / u0_sq;
      if (c2_by_u02 - dd <= 0.0) {
        return false;
      }
      sc.d1 = d1;
      sc.u0 = std::sqrt(u0_sq);
      sc.u1 = std::sqrt(c2_by_u02);
      sc.v1 = std::sqrt(c2_by_u02 - dd);
      at += sc.dim;
    }
    scale(z, lambda);  // lambda = W z
    return true;
  }

  // out = W v
  void scale(const Vector& v, Vector& out) const {
    out.head(lp) = lp_w.cwiseProduct(v.head(lp));
    int at = lp;
    for (const SocScaling& sc : socs) {
      const double zeta = sc.q.dot(v.segment(at + 1, sc.dim - 1));
      const double factor = v(at) + zeta / (1.0 + sc.a);
      out(at) = sc.eta * (sc.a * v(at) + zeta);
      out.segment(at + 1, sc.dim - 1) =
          sc.eta * (v.segment(at + 1, sc.dim - 1) + factor * sc.q);
      at += sc.dim;
    }
  }

  // out += W^2 v over the expanded block layout (v and out have mtilde rows).
  void scale2_add_expanded(const Vector& v, Vector& out) const {
    out.head(lp) += lp_v.cwiseProduct(v.head(lp));
    int at = lp;
    for (const SocScaling& sc : socs) {
      const int i1 = at;
      const int i2 = i1 + 1;
      const int i3 = i1 + sc.dim;      // v-row slot
      const int i4 = i3 + 1;           // u-row slot
      const double qtv = sc.q.dot(v.segment(i2, sc.dim - 1));
      out(i1) += sc.eta_sq * (sc.d1 * v(i1) + sc.u0 * v(i4));
      out.segment(i2, sc.dim - 1) +=
          sc.eta_sq * (v.segment(i2, sc.dim - 1) + (sc.v1 * v(i3) + sc.u1 * v(i4)) * sc.q);
      out(i3) += sc.eta_sq * (sc.v1 * qtv + v(i3));
      out(i4) += sc.eta_sq * (sc.u0 * v(i1) + sc.u1 * qtv - v(i4));
      at += sc.dim + 2;
    }
  }

  // conic product w = u o v
  void conic_product(const Vector& u, const Vector& v, Vector& w) const {
    w.head(lp) = u.head(lp).cwiseProduct(v.head(lp));
    int at = lp;
    for (const SocScaling& sc : socs) {
      w(at) = u.segment(at, sc.dim).dot(v.segment(at, sc.dim));
      w.segment(at + 1, sc.dim - 1) = u(at) * v.segment(at + 1, sc.dim - 1) +
                                      v(at) * u.segment(at + 1, sc.dim - 1);
      at += sc.dim;
    }
  }

  // conic division v = u \ w
  void conic_division(const Vector& u, const Vector& w, Vector& v) const {
    v.head(lp) = w.head(lp).cwiseQuotient(u.head(lp));
    int at = lp;
    for (const SocScaling& sc : socs) {
      const double u0 = u(at);
      const double w0 = w(at);
      const double rho = u0 * u0 - u.segment(at + 1, sc.dim - 1).squaredNorm();
      const double zeta = u.segment(at + 1, sc.dim - 1).dot(w.segment(at + 1, sc.dim - 1));
      const double factor = (zeta / u0 - w0) / rho;
      v(at) = (u0 * w0 - zeta) / rho;
      v.segment(at + 1, sc.dim - 1) =
          factor * u.segment(at + 1, sc.dim - 1) + w.segment(at + 1, sc.dim - 1) / u0;
      at += sc.dim;
    }
  }

  // Shifts r into the cone interior: r + (1 + alpha) e when needed.
  void bring_to_cone(const Vector& r, Vector& out) const {
    double alpha = -0.99;
    for (int i = 0; i < lp; ++i) {
      if (r(i) <= 0.0 && -r(i) > alpha) {
        alpha = -r(i);
      }
    }
    int at = lp;
    for (const SocScaling& sc : socs) {
      const double res = r(at) - r.segment(at + 1, sc.dim - 1).norm();
      if (res <= 0.0 && -res > alpha) {
        alpha = -res;
      }
      at += sc.dim;
    }
    alpha += 1.0;
    out = r;
    out.head(lp).array() += alpha;
    at = lp;
    for (const SocScaling& sc : socs) {
      out(at) += alpha;
      at += sc.dim;
    }
  }

  // --- expanded rhs helpers --------------------------------------------------

  void set_rhs_cone_part(Vector& rhs, const Vector& v) const {
    rhs.segment(n + p, lp) = v.head(lp);
    int src = lp;
    int dst = n + p + lp;
    for (const SocScaling& sc : socs) {
      rhs.segment(dst, sc.dim) = v.segment(src, sc.dim);
      rhs.segment(dst + sc.dim, 2).setZero();
      src += sc.dim;
      dst += sc.dim + 2;
    }
  }

  void extract_dz(const Vector& sol, Vector& dz) const {
    dz.head(lp) = sol.segment(n + p, lp);
    int src = n + p + lp;
    int dst = lp;
    for (const SocScaling& sc : socs) {
      dz.segment(dst, sc.dim) = sol.segment(src, sc.dim);
      src += sc.dim + 2;
      dst += sc.dim;
    }
  }

  // --- KKT solve with iterative refinement -----------------------------------

  int solve_kkt(const Vector& rhs, Vector& dx, Vector& dy, Vector& dz, bool initializing) {
    Vector sol = ldlt.solve(rhs);
    const double threshold = (1.0 + rhs.lpNorm<Eigen::Infinity>()) * cfg.refine_target;
    double prev_err = std::numeric_limits<double>::max();
    Vector correction(dim_k);

    const auto bx = rhs.head(n);
    const auto by_ = rhs.segment(n, p);
    const auto bz = rhs.tail(mtilde);

    int k_ref = 0;
    for (k_ref = 0; k_ref <= cfg.refine_iters; ++k_ref) {
      const auto dx_c = sol.head(n);
      const auto dy_c = sol.segment(n, p);
      extract_dz(sol, dz);

      Vector ex = bx - Gt * dz;
      if (p > 0) {
        ex -= At * dy_c;
      }
      ex -= cfg.static_reg * dx_c;

      Vector ey = by_;
      if (p > 0) {
        ey -= A * dx_c;
        ey += cfg.static_reg * dy_c;
      }

      Vector gdx_full = G * dx_c;
      Vector ez = Vector::Zero(mtilde);
      ez.head(lp) = bz.head(lp) - gdx_full.head(lp) + cfg.static_reg * dz.head(lp);
      {
        int src = lp;
        int dst = lp;
        for (const SocScaling& sc : socs) {
          ez.segment(dst, sc.dim) =
              bz.segment(dst, sc.dim) - gdx_full.segment(src, sc.dim) +
              cfg.static_reg * dz.segment(src, sc.dim);
          // u-row regularization carries the opposite sign.
          ez(dst + sc.dim + 1) -= cfg.static_reg * sol(n + p + dst + sc.dim + 1);
          src += sc.dim;
          dst += sc.dim + 2;
        }
      }
      if (initializing) {
        ez += sol.tail(mtilde);
      } else {
        scale2_add_expanded(sol.tail(mtilde), ez);
      }

      double err = std::max(ex.lpNorm<Eigen::Infinity>(), ez.lpNorm<Eigen::Infinity>());
      if (p > 0) {
        err = std::max(err, ey.lpNorm<Eigen::Infinity>());
      }

      if (k_ref > 0 && err > prev_err) {
        sol -= correction;
        --k_ref;
        break;
      }
      if (k_ref == cfg.refine_iters || err < threshold ||
          (k_ref > 0 && prev_err < cfg.refine_stop_ratio * err)) {
        break;
      }
      prev_err = err;

      Vector e(dim_k);
      e << ex, ey, ez;
      correction = ldlt.solve(e);
      sol += correction;
    }

    dx = sol.head(n);
    dy = sol.segment(n, p);
    extract_dz(sol, dz);
    return k_ref;
  }

  // --- residuals, statistics, exits ------------------------------------------

  void compute_residuals() {
    rx = -(Gt * z);
    if (p > 0) {
      rx -= At * y;
    }
    hresx = rx.norm();
    rx -= tau * c;

    if (p > 0) {
      ry = A * x;
      hresy = ry.norm();
      ry -= tau * b;
    } else {
      hresy = 0.0;
    }

    rz = s + G * x;
    hresz = rz.norm();
    rz -= tau * h;

    cx = c.dot(x);
    by = p > 0 ? b.dot(y) : 0.0;
    hz = h.dot(z);
    rt = kap + cx + by + hz;

    nx = x.norm();
    ny = y.norm();
    nz = z.norm();
    ns = s.norm();
  }

  void update_statistics() {
    gap = s.dot(z);
    mu = (gap + kap * tau) / static_cast<double>(lp + socs.size() + 1);
    pcost = cx / tau;
    dcost = -(hz + by) / tau;
    if (pcost < 0.0) {
      relgap = gap / (-pcost);
    } else if (dcost > 0.0) {
      relgap = gap / dcost;
    } else {
      relgap = std::numeric_limits<double>::quiet_NaN();
    }
    const double nry = p > 0 ? ry.norm() / std::max(resy0 + nx, 1.0) : 0.0;
    const double nrz = rz.norm() / std::max(resz0 + nx + ns, 1.0);
    pres = std::max(nry, nrz) / tau;
    dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / tau;

    pinfres = std::numeric_limits<double>::quiet_NaN();
    dinfres = std::numeric_limits<double>::quiet_NaN();
    if ((hz + by) / std::max(ny + nz, 1.0) < -cfg.reltol) {
      pinfres = hresx / std::max(ny + nz, 1.0);
    }
    if (cx / std::max(nx, 1.0) < -cfg.reltol) {
      dinfres = std::max(hresy / std::max(nx, 1.0), hresz / std::max(nx + ns, 1.0));
    }
  }

  Exit check_exit(bool reduced) const {
    const double feastol = reduced ? cfg.feastol_inacc : cfg.feastol;
    const double abstol = reduced ? cfg.abstol_inacc : cfg.abstol;
    const double reltol = reduced ? cfg.reltol_inacc : cfg.reltol;

    if ((-cx > 0.0 || -by - hz >= -abstol) && (pres < feastol && dres < feastol) &&
        (gap < abstol || (!std::isnan(relgap) && relgap < reltol))) {
      return reduced ? Exit::optimal_inacc : Exit::optimal;
    }
    if (!std::isnan(dinfres) && dinfres < feastol && tau < kap) {
      return reduced ? Exit::dinf_inacc : Exit::dinf;
    }
    if ((!std::isnan(pinfres) && pinfres < feastol && tau < kap) ||
        (tau < feastol && kap < feastol && !std::isnan(pinfres) && pinfres < feastol)) {
      return reduced ? Exit::pinf_inacc : Exit::pinf;
    }
    return Exit::not_yet;
  }

  bool current_better_than_best() const {
    if (!have_best) {
      return true;
    }
    const double kapovert = kap / tau;
    if (!std::isnan(pinfres) && kapovert > 1.0) {
      return gap > 0.0 && best_gap > 0.0 && gap < best_gap &&
             pinfres > 0.0 && pinfres < best_pres && mu > 0.0 && mu < best_mu;
    }
    return gap > 0.0 && best_gap > 0.0 && gap < best_gap && pres > 0.0 &&
           pres < best_pres && dres > 0.0 && dres < best_dres && kapovert > 0.0 &&
           kapovert < best_kapovert && mu > 0.0 && mu < best_mu;
  }

  void save_best() {
    best_x = x;
    best_y = y;
    best_z = z;
    best_s = s;
    best_tau = tau;
    best_kap = kap;
    best_pres = pres;
    best_dres = dres;
    best_gap = gap;
    best_relgap = relgap;
    best_pcost = pcost;
    best_dcost = dcost;
    best_cx = cx;
    best_by = by;
    best_hz = hz;
    best_pinfres = pinfres;
    best_dinfres = dinfres;
    best_kapovert = kap / tau;
    best_mu = mu;
    have_best = true;
  }

  void restore_best() {
    if (!have_best) {
      return;
    }
    x = best_x;
    y = best_y;
    z = best_z;
    s = best_s;
    tau = best_tau;
    kap = best_kap;
    pres = best_pres;
    dres = best_dres;
    gap = best_gap;
    relgap = best_relgap;
    pcost = best_pcost;
    dcost = best_dcost;
    cx = best_cx;
    by = best_by;
    hz = best_hz;
    pinfres = best_pinfres;
    dinfres = best_dinfres;
    mu = best_mu;
  }

  // --- line search ------------------------------------------------------------

  double line_search(const Vector& lam, const Vector& ds, const Vector& dz_,
                     double tau_, double dtau, double kap_, double dkap) const {
    double alpha;
    if (lp > 0) {
      const double rho_min = (ds.head(lp).cwiseQuotient(lam.head(lp))).minCoeff();
      const double sigma_min = (dz_.head(lp).cwiseQuotient(lam.head(lp))).minCoeff();
      const double eps = 1e-13;
      if (-sigma_min > -rho_min) {
        alpha = sigma_min < 0.0 ? 1.0 / (-sigma_min) : 1.0 / eps;
      } else {
        alpha = rho_min < 0.0 ? 1.0 / (-rho_min) : 1.0 / eps;
      }
    } else {
      alpha = 10.0;
    }

    const double tau_step = -tau_ / dtau;
    const double kap_step = -kap_ / dkap;
    if (tau_step > 0.0 && tau_step < alpha) {
      alpha = tau_step;
    }
    if (kap_step > 0.0 && kap_step < alpha) {
      alpha = kap_step;
    }

    int at = lp;
    for (const SocScaling& sc : socs) {
      const double lk_sq =
          lam(at) * lam(at) - lam.segment(at + 1, sc.dim - 1).squaredNorm();
      if (lk_sq <= 0.0) {
        at += sc.dim;
        continue;
      }
      const double lknorm = std::sqrt(lk_sq);
      Vector lkbar = lam.segment(at, sc.dim) / lknorm;
      const double lknorminv = 1.0 / lknorm;

      const double lk_ds = lkbar(0) * ds(at) -
                           lkbar.tail(sc.dim - 1).dot(ds.segment(at + 1, sc.dim - 1));
      const double lk_dz = lkbar(0) * dz_(at) -
                           lkbar.tail(sc.dim - 1).dot(dz_.segment(at + 1, sc.dim - 1));

      double factor = (lk_ds + ds(at)) / (lkbar(0) + 1.0);
      Vector rho_tail =
          lknorminv * (ds.segment(at + 1, sc.dim - 1) - factor * lkbar.tail(sc.dim - 1));
      const double rho_norm = rho_tail.norm() - lknorminv * lk_ds;

      factor = (lk_dz + dz_(at)) / (lkbar(0) + 1.0);
      Vector sig_tail =
          lknorminv * (dz_.segment(at + 1, sc.dim - 1) - factor * lkbar.tail(sc.dim - 1));
      const double sig_norm = sig_tail.norm() - lknorminv * lk_dz;

      const double conic_step = std::max(0.0, std::max(rho_norm, sig_norm));
      if (conic_step != 0.0) {
        alpha = std::min(alpha, 1.0 / conic_step);
      }
      at += sc.dim;
    }
    return std::clamp(alpha, cfg.step_min, cfg.step_max);
  }

  // --- main loop ----------------------------------------------------------------

  Solution run() {
    Solution out;

    reset_kkt_scalings();

    // rhs1 = [0; b; h~]
    rhs1.setZero();
    rhs1.segment(n, p) = b;
    set_rhs_cone_part(rhs1, h);
    // rhs2 = [-c; 0; 0]
    rhs2.setZero();
    rhs2.head(n) = -c;

    resx0 = std::max(1.0, c.norm());
    resy0 = std::max(1.0, b.norm());
    resz0 = std::max(1.0, h.norm());

    if (!pattern_analyzed) {
      ldlt.analyzePattern(K);
      pattern_analyzed = true;
    }
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) {
      out.status = SolveStatus::numerical_failure;
      return out;
    }

    Vector dx1(n), dy1(p), dz1(m);
    Vector dx2(n), dy2(p), dz2(m);

    // Initialization: x from min ||Gx - h|| s.t. Ax = b; s, z shifted into the cone.
    solve_kkt(rhs1, dx1, dy1, dz1, true);
    x = dx1;
    bring_to_cone(-dz1, s);
    solve_kkt(rhs2, dx2, dy2, dz2, true);
    y = dy2;
    bring_to_cone(dz2, z);

    rhs1.head(n) = -c;
    tau = 1.0;
    kap = 1.0;
    step = 0.0;
    have_best = false;

    Vector w_dz(m), ds_by_w(m), ds_final(m), ds1(m), ds2(m), lam_sq(m);
    double pres_prev = std::numeric_limits<double>::max();
    int iter = 0;
    SolveStatus status = SolveStatus::max_iterations;

    for (iter = 0; iter <= cfg.max_iters; ++iter) {
      compute_residuals();
      update_statistics();

      if (cfg.verbose) {
        std::fprintf(stderr,
                     "it %2d  pcost % .6e dcost % .6e gap %.2e pres %.2e dres %.2e "
                     "k/t %.2e mu %.2e step %.4f\n",
                     iter, pcost, dcost, gap, pres, dres, kap / tau, mu, step);
      }

      // Backtrack to the best iterate when the step went numerically bad.
      if (iter > 0 && (pres > cfg.residual_guard * pres_prev || gap < 0.0)) {
        restore_best();
        const Exit e = check_exit(true);
        status = (e == Exit::optimal_inacc)  ? SolveStatus::optimal_inaccurate
                 : (e == Exit::pinf_inacc)   ? SolveStatus::primal_infeasible
                 : (e == Exit::dinf_inacc)   ? SolveStatus::dual_infeasible
                                             : SolveStatus::numerical_failure;
        break;
      }
      pres_prev = pres;

      const Exit e = check_exit(false);
      if (e == Exit::optimal) {
        status = SolveStatus::optimal;
        break;
      }
      if (e == Exit::pinf) {
        status = SolveStatus::primal_infeasible;
        break;
      }
      if (e == Exit::dinf) {
        status = SolveStatus::dual_infeasible;
        break;
      }

      if (iter > 0 && step == cfg.step_min * cfg.step_scale) {
        restore_best();
        const Exit er = check_exit(true);
        status = (er == Exit::optimal_inacc) ? SolveStatus::optimal_inaccurate
                 : (er == Exit::pinf_inacc)  ? SolveStatus::primal_infeasible
                 : (er == Exit::dinf_inacc)  ? SolveStatus::dual_infeasible
                                             : SolveStatus::numerical_failure;
        break;
      }
      if (iter == cfg.max_iters) {
        if (!current_better_than_best()) {
          restore_best();
        }
        const Exit er = check_exit(true);
        status = (er == Exit::optimal_inacc) ? SolveStatus::optimal_inaccurate
                 : (er == Exit::pinf_inacc)  ? SolveStatus::primal_infeasible
                 : (er == Exit::dinf_inacc)  ? SolveStatus::dual_infeasible
                                             : SolveStatus::max_iterations;
        break;
      }
      if (std::isnan(pcost)) {
        status = SolveStatus::numerical_failure;
        break;
      }

      if (iter == 0 || current_better_than_best()) {
        save_best();
      }

      if (!update_scalings()) {
        restore_best();
        const Exit er = check_exit(true);
        status = (er == Exit::optimal_inacc) ? SolveStatus::optimal_inaccurate
                                             : SolveStatus::numerical_failure;
        break;
      }
      update_kkt_scalings();
      ldlt.factorize(K);
      if (ldlt.info() != Eigen::Success) {
        status = SolveStatus::numerical_failure;
        break;
      }

      solve_kkt(rhs1, dx1, dy1, dz1, false);

      // Affine (predictor) direction.
      rhs2.head(n) = rx;
      rhs2.segment(n, p) = -ry;
      set_rhs_cone_part(rhs2, s - rz);
      solve_kkt(rhs2, dx2, dy2, dz2, false);

      const double dtau_denom = kap / tau - c.dot(dx1) - b.dot(dy1) - h.dot(dz1);
      const double dtau_aff = (rt - kap + c.dot(dx2) + b.dot(dy2) + h.dot(dz2)) / dtau_denom;

      dz2 += dtau_aff * dz1;
      scale(dz2, w_dz);
      ds_by_w = -w_dz - lambda;
      const double dkap_aff = -kap - kap / tau * dtau_aff;

      const double step_aff = line_search(lambda, ds_by_w, w_dz, tau, dtau_aff, kap, dkap_aff);
      const double sigma =
          std::clamp((1.0 - step_aff) * (1.0 - step_aff) * (1.0 - step_aff),
                     cfg.sigma_min, cfg.sigma_max);

      // Combined (corrector) direction.
      conic_product(lambda, lambda, lam_sq);
      conic_product(ds_by_w, w_dz, ds2);
      const double sigma_mu = sigma * mu;
      ds1 = lam_sq + ds2;
      ds1.head(lp).array() -= sigma_mu;
      {
        int at = lp;
        for (const SocScaling& sc : socs) {
          ds1(at) -= sigma_mu;
          at += sc.dim;
        }
      }
      conic_division(lambda, ds1, ds_by_w);  // ds_by_w = lambda \ ds1
      scale(ds_by_w, ds1);                   // ds1 = W (lambda \ ds1)

      const double one_minus_sigma = 1.0 - sigma;
      rhs2.head(n) *= one_minus_sigma;
      rhs2.segment(n, p) *= one_minus_sigma;
      set_rhs_cone_part(rhs2, -one_minus_sigma * rz + ds1);
      solve_kkt(rhs2, dx2, dy2, dz2, false);

      const double bkap = kap * tau + dkap_aff * dtau_aff - sigma_mu;
      const double dtau = (one_minus_sigma * rt - bkap / tau + c.dot(dx2) + b.dot(dy2) +
                           h.dot(dz2)) /
                          dtau_denom;
      dx2 += dtau * dx1;
      dy2 += dtau * dy1;
      dz2 += dtau * dz1;

      scale(dz2, w_dz);
      ds_by_w = -(ds_by_w + w_dz);
      const double dkap = -(bkap + kap * dtau) / tau;

      step = cfg.step_scale * line_search(lambda, ds_by_w, w_dz, tau, dtau, kap, dkap);
      scale(ds_by_w, ds_final);  // unscaled ds = W (W \ ds)

      x += step * dx2;
      y += step * dy2;
      z += step * dz2;
      s += step * ds_final;
      kap += step * dkap;
      tau += step * dtau;
    }

    // Undo homogeneous scaling and equilibration.
    out.x = (x.cwiseQuotient(e_var)) / tau;
    out.y = p > 0 ? Vector((y.cwiseQuotient(e_eq)) / tau) : Vector(0);
    out.z = (z.cwiseQuotient(e_ineq)) / tau;
    out.s = (s.cwiseProduct(e_ineq)) / tau;
    out.primal_obj = pcost;
    out.gap = gap;
    out.pres = pres;
    out.dres = dres;
    out.iterations = iter;
    out.status = status;
    return out;
  }
};

ConeSolver::ConeSolver(const Problem& problem, Settings settings)
    : impl_(std::make_unique<Impl>(problem, settings)) {}

ConeSolver::~ConeSolver() = default;

Solution ConeSolver::solve() { return impl_->run(); }

Solution solve(const Problem& problem, Settings settings) {
  ConeSolver solver(problem, settings);
  return solver.solve();
}

}  // namespace rbess::socp
