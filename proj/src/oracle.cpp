#include "otwb/oracle.hpp"

#include "otwb/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace otwb {

namespace {

struct Cell {
  Index i;
  Index j;
};

class TransportTableau {
 public:
  TransportTableau(const Matrix& cost, const Vector& mu, const Vector& nu)
      : c_(cost), n_(cost.rows()), m_(cost.cols()), x_(Matrix::Zero(n_, m_)),
        basic_(n_, std::vector<char>(static_cast<std::size_t>(m_), 0)) {
    // Northwest corner keeping exactly n + m - 1 basic cells.
    Vector ra = mu, rb = nu;
    Index i = 0, j = 0;
    while (true) {
      const double t = std::max(0.0, std::min(ra[i], rb[j]));
      x_(i, j) = t;
      ra[i] -= t;
      rb[j] -= t;
      set_basic(i, j, true);
      if (i == n_ - 1 && j == m_ - 1) break;
      if (i == n_ - 1) {
        ++j;
      } else if (j == m_ - 1) {
        ++i;
      } else if (ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  long solve() {
    const double tol = 1e-12 * std::max(1.0, c_.cwiseAbs().maxCoeff());
    long pivots = 0;
    const long max_pivots = 1000000;
    while (pivots < max_pivots) {
      potentials();
      Cell enter{-1, -1};
      for (Index i = 0; i < n_ && enter.i < 0; ++i) {
        for (Index j = 0; j < m_; ++j) {
          if (!is_basic(i, j) && c_(i, j) - u_[i] - v_[j] < -tol) {
            enter = {i, j};
            break;
          }
        }
      }
      if (enter.i < 0) return pivots;
      pivot(enter);
      ++pivots;
    }
    throw NumericalFailure("transportation simplex exceeded its pivot limit");
  }

  const Matrix& plan() const { return x_; }
  const Vector& u() const { return u_; }
  const Vector& v() const { return v_; }

 private:
  bool is_basic(Index i, Index j) const {
    return basic_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0;
  }
  void set_basic(Index i, Index j, bool on) {
    basic_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = on ? 1 : 0;
  }

  // Nodes 0..n-1 are rows, n..n+m-1 are columns.
  std::vector<std::vector<Index>> adjacency() const {
    std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n_ + m_));
    for (Index i = 0; i < n_; ++i) {
      for (Index j = 0; j < m_; ++j) {
        if (is_basic(i, j)) {
          adj[static_cast<std::size_t>(i)].push_back(n_ + j);
          adj[static_cast<std::size_t>(n_ + j)].push_back(i);
        }
      }
    }
    return adj;
  }

  void potentials() {
    u_ = Vector::Zero(n_);
    v_ = Vector::Zero(m_);
    const auto adj = adjacency();
    std::vector<char> seen(static_cast<std::size_t>(n_ + m_), 0);
    std::queue<Index> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const Index a = q.front();
      q.pop();
      for (Index b : adj[static_cast<std::size_t>(a)]) {
        if (seen[static_cast<std::size_t>(b)]) continue;
        seen[static_cast<std::size_t>(b)] = 1;
        if (a < n_) {
          v_[b - n_] = c_(a, b - n_) - u_[a];
        } else {
          u_[b] = c_(b, a - n_) - v_[a - n_];
        }
        q.push(b);
      }
    }
  }

  void pivot(Cell enter) {
    // Tree path from row node enter.i to column node enter.j.
    const auto adj = adjacency();
    std::vector<Index> parent(static_cast<std::size_t>(n_ + m_), -1);
    std::vector<char> seen(static_cast<std::size_t>(n_ + m_), 0);
    std::queue<Index> q;
    q.push(enter.i);
    seen[static_cast<std::size_t>(enter.i)] = 1;
    const Index target = n_ + enter.j;
    while (!q.empty()) {
      const Index a = q.front();
      q.pop();
      if (a == target) break;
      for (Index b : adj[static_cast<std::size_t>(a)]) {
        if (seen[static_cast<std::size_t>(b)]) continue;
        seen[static_cast<std::size_t>(b)] = 1;
        parent[static_cast<std::size_t>(b)] = a;
        q.push(b);
      }
    }
    std::vector<Index> nodes;
    for (Index a = target; a != -1; a = parent[static_cast<std::size_t>(a)]) nodes.push_back(a);
    std::reverse(nodes.begin(), nodes.end());  // enter.i ... target
    if (nodes.front() != enter.i) throw NumericalFailure("transportation basis is not a spanning tree");

    // Cycle: entering cell (+), then path edges alternating -, +, -, ...
    std::vector<Cell> cycle;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      const Index a = nodes[k], b = nodes[k + 1];
      cycle.push_back(a < n_ ? Cell{a, b - n_} : Cell{b, a - n_});
    }
    double theta = std::numeric_limits<double>::infinity();
    Cell leave{-1, -1};
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const Cell cell = cycle[k];
      const double val = x_(cell.i, cell.j);
      const bool better = val < theta;
      const bool tie_smaller = val == theta && (cell.i * m_ + cell.j < leave.i * m_ + leave.j);
      if (better || tie_smaller) {
        theta = val;
        leave = cell;
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      x_(cycle[k].i, cycle[k].j) += (k % 2 == 0) ? -theta : theta;
    }
    x_(enter.i, enter.j) += theta;
    x_(leave.i, leave.j) = 0.0;
    set_basic(leave.i, leave.j, false);
    set_basic(enter.i, enter.j, true);
  }

  const Matrix& c_;
  Index n_;
  Index m_;
  Matrix x_;
  std::vector<std::vector<char>> basic_;
  Vector u_;
  Vector v_;
};

}  // namespace

ExactSolution solve_exact_transport(const Matrix& cost, const Vector& mu, const Vector& nu,
                                    Index cap) {
  if (cost.rows() > cap || cost.cols() > cap) {
    throw UsageError("exact transport oracle refuses n=" + std::to_string(cost.rows()) +
                     " above its cap of " + std::to_string(cap));
  }
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw InvalidInstance("oracle: shape mismatch");
  }
  TransportTableau tab(cost, mu, nu);
  ExactSolution sol;
  sol.pivots = tab.solve();
  sol.plan = tab.plan().cwiseMax(0.0);
  sol.dual = {tab.u(), tab.v()};
  sol.value = (cost.array() * sol.plan.array()).sum();
  return sol;
}

ExactSolution solve_exact_ot(const OtInstance& inst, Index cap) {
  ExactSolution sol =
      solve_exact_transport(inst.cost.entries(), inst.mu.values(), inst.nu.values(), cap);
  sol.value = (inst.cost.raw().array() * sol.plan.array()).sum();
  return sol;
}

OtDual shift_dual_to_box(const Vector& u, [[maybe_unused]] const Vector& v, const Matrix& cost) {
  // Make the pair c-concave: v from u, u from v, v from u again.
  const Vector v1 = (cost.colwise() - u).colwise().minCoeff().transpose();
  Vector ut = (cost.rowwise() - v1.transpose()).rowwise().minCoeff();
  Vector vt = (cost.colwise() - ut).colwise().minCoeff().transpose();
  const double a = ut.minCoeff();
  ut.array() -= a;
  vt.array() += a;
  const double half = cost.maxCoeff() / 2.0;
  ut.array() -= half;
  vt.array() += half;
  return {ut, vt};
}

OtInstance adversarial_instance(Index n) {
  if (n < 2) throw InvalidInstance("adversarial instance needs n >= 2");
  Vector mu = Vector::Zero(n), nu = Vector::Zero(n);
  mu[0] = 1.0;
  nu[n - 1] = 1.0;
  const Matrix c = mu * nu.transpose();
  return OtInstance::make(Histogram::from_values(mu), Histogram::from_values(nu), c);
}

// ---------------------------------------------------------------------------

namespace {

class DenseSimplex {
 public:
  // Tableau rows 0..rows-1 are constraints, last row is the objective.
  // Columns: structural, artificial, rhs.
  DenseSimplex(const Matrix& a, const Vector& b) : rows_(a.rows()), nvar_(a.cols()) {
    t_ = Matrix::Zero(rows_ + 1, nvar_ + rows_ + 1);
    sign_ = Vector::Ones(rows_);
    for (Index r = 0; r < rows_; ++r) {
      const double s = b[r] < 0.0 ? -1.0 : 1.0;
      sign_[r] = s;
      t_.block(r, 0, 1, nvar_) = s * a.row(r);
      t_(r, nvar_ + r) = 1.0;
      t_(r, rhs()) = s * b[r];
    }
    basis_.resize(static_cast<std::size_t>(rows_));
    for (Index r = 0; r < rows_; ++r) basis_[static_cast<std::size_t>(r)] = nvar_ + r;
    active_.assign(static_cast<std::size_t>(rows_), 1);
  }

  Index rhs() const { return nvar_ + rows_; }

  void set_objective(const Vector& cost_all) {
    t_.row(rows_).setZero();
    t_.block(rows_, 0, 1, nvar_ + rows_) = cost_all.transpose();
    for (Index r = 0; r < rows_; ++r) {
      if (!active_[static_cast<std::size_t>(r)]) continue;
      const double cb = cost_all[basis_[static_cast<std::size_t>(r)]];
      if (cb != 0.0) t_.row(rows_) -= cb * t_.row(r);
    }
  }

  // Bland's rule; columns >= enter_limit are never entered.
  LpResult::Status optimize(Index enter_limit, long& pivots) {
    const double tol = 1e-11;
    while (true) {
      Index enter = -1;
      for (Index j = 0; j < enter_limit; ++j) {
        if (t_(rows_, j) < -tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return LpResult::Status::optimal;
      Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Index r = 0; r < rows_; ++r) {
        if (!active_[static_cast<std::size_t>(r)] || t_(r, enter) <= tol) continue;
        const double ratio = t_(r, rhs()) / t_(r, enter);
        const bool tie = std::abs(ratio - best) <= 1e-14 * std::max(1.0, std::abs(best));
        if (ratio < best - 1e-14 * std::max(1.0, std::abs(best)) ||
            (tie && basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave < 0) return LpResult::Status::unbounded;
      do_pivot(leave, enter);
      ++pivots;
    }
  }

  // Drives zero-level artificials out of the basis; rows that cannot be
  // cleared are redundant and deactivated.
  void purge_artificials() {
    for (Index r = 0; r < rows_; ++r) {
      if (basis_[static_cast<std::size_t>(r)] < nvar_) continue;
      Index col = -1;
      for (Index j = 0; j < nvar_; ++j) {
        if (std::abs(t_(r, j)) > 1e-9) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        do_pivot(r, col);
      } else {
        active_[static_cast<std::size_t>(r)] = 0;
      }
    }
  }

  double objective_rhs() const { return t_(rows_, rhs()); }

  Vector solution() const {
    Vector x = Vector::Zero(nvar_);
    for (Index r = 0; r < rows_; ++r) {
      const Index bcol = basis_[static_cast<std::size_t>(r)];
      if (active_[static_cast<std::size_t>(r)] && bcol < nvar_) x[bcol] = t_(r, rhs());
    }
    return x;
  }

  // With artificial costs zero, the reduced cost of artificial r is -y_r'.
  Vector duals() const {
    Vector y(rows_);
    for (Index r = 0; r < rows_; ++r) y[r] = -t_(rows_, nvar_ + r) * sign_[r];
    return y;
  }

 private:
  void do_pivot(Index r, Index col) {
    t_.row(r) /= t_(r, col);
    for (Index k = 0; k <= rows_; ++k) {
      if (k != r && t_(k, col) != 0.0) t_.row(k) -= t_(k, col) * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = col;
  }

  Index rows_;
  Index nvar_;
  Matrix t_;
  Vector sign_;
  std::vector<Index> basis_;
  std::vector<char> active_;
};

}  // namespace

LpResult solve_lp(const Matrix& a, const Vector& b, const Vector& c) {
  if (a.rows() != b.size() || a.cols() != c.size()) throw Error("solve_lp: shape mismatch");
  const Index nvar = a.cols(), rows = a.rows();
  DenseSimplex s(a, b);
  LpResult res;

  Vector phase1 = Vector::Zero(nvar + rows);
  phase1.tail(rows).setOnes();
  s.set_objective(phase1);
  s.optimize(nvar, res.pivots);
  if (-s.objective_rhs() > 1e-9 * std::max(1.0, b.cwiseAbs().sum())) {
    res.status = LpResult::Status::infeasible;
    return res;
  }
  s.purge_artificials();

  Vector phase2 = Vector::Zero(nvar + rows);
  phase2.head(nvar) = c;
  s.set_objective(phase2);
  res.status = s.optimize(nvar, res.pivots);
  if (res.status != LpResult::Status::optimal) return res;
  res.x = s.solution().cwiseMax(0.0);
  res.y = s.duals();
  res.value = c.dot(res.x);
  return res;
}

ExactWbSolution solve_exact_wb(const WbInstance& inst) {
  const Index n = inst.n, m = inst.m;
  if (n > kWbOracleMaxN || m > kWbOracleMaxM) {
    throw UsageError("exact barycenter oracle is capped at n <= 8, m <= 3");
  }
  const Index block = n * n;
  const Index nvar = m * block;
  const Index rows = m * n + (m - 1) * n;
  Matrix a = Matrix::Zero(rows, nvar);
  Vector b = Vector::Zero(rows);
  Vector c(nvar);
  // Variable (l, i, j) sits at l*n*n + j*n + i (column-major per block).
  auto var = [&](Index l, Index i, Index j) { return l * block + j * n + i; };
  for (Index l = 0; l < m; ++l) {
    const Matrix& cl = inst.cost(l).entries();
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        c[var(l, i, j)] = inst.weights[l] * cl(i, j);
        a(l * n + i, var(l, i, j)) = 1.0;
      }
      b[l * n + i] = inst.marginals[static_cast<std::size_t>(l)][i];
    }
  }
  for (Index l = 0; l + 1 < m; ++l) {
    for (Index j = 0; j < n; ++j) {
      const Index r = m * n + l * n + j;
      for (Index i = 0; i < n; ++i) {
        a(r, var(l, i, j)) = 1.0;
        a(r, var(m - 1, i, j)) = -1.0;
      }
    }
  }
  const LpResult lp = solve_lp(a, b, c);
  if (lp.status != LpResult::Status::optimal) throw NumericalFailure("barycenter LP did not solve");

  ExactWbSolution out;
  out.value = lp.value;
  for (Index l = 0; l < m; ++l) {
    out.plans.push_back(Eigen::Map<const Matrix>(lp.x.data() + l * block, n, n));
  }
  out.barycenter = out.plans.back().colwise().sum().transpose();
  Vector sum_beta = Vector::Zero(n);
  for (Index l = 0; l < m; ++l) {
    const double w = inst.weights[l];
    out.u.push_back(lp.y.segment(l * n, n) / w);
    if (l + 1 < m) {
      const Vector beta = lp.y.segment(m * n + l * n, n);
      out.v.push_back(beta / w);
      sum_beta += beta;
    }
  }
  out.v.push_back(-sum_beta / inst.weights[m - 1]);
  return out;
}

}  // namespace otwb
