#include "dali/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dali/errors.hpp"

namespace dali {

namespace {

constexpr double kWeightFloor = 1e-12;  // below this a point carries no mass
constexpr double kMassTolerance = 1e-6;
constexpr double kUnitSumTolerance = 1e-9;

void validate_cloud(const WeightedPointCloud& c, const char* which) {
  if (c.points.rows() == 0) {
    throw ParameterError(std::string("cloud ") + which + ": needs at least one point");
  }
  if (c.weights.size() != c.points.rows()) {
    throw ParameterError(std::string("cloud ") + which + ": " +
                         std::to_string(c.weights.size()) + " weights for " +
                         std::to_string(c.points.rows()) + " points");
  }
  require_finite(c.points, "cloud points");
  for (double w : c.weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ParameterError(std::string("cloud ") + which + ": weights must be finite and >= 0");
    }
  }
}

// The transportation simplex below keeps a spanning-tree basis of n + m - 1
// cells and improves it with MODI (u, v potential) pivots. Entering and
// leaving cells follow Bland's rule (lowest row-major index), which both
// pins down determinism and rules out cycling.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> a, std::vector<double> b, const Matrix& cost)
      : a_(std::move(a)),
        b_(std::move(b)),
        cost_(cost),
        n_(a_.size()),
        m_(b_.size()),
        flow_(n_, m_),
        in_basis_(n_, m_),
        u_(n_),
        v_(m_) {
    double cmax = 1.0;
    for (double c : cost_.data()) cmax = std::max(cmax, std::abs(c));
    tol_ = 1e-12 * cmax;
  }

  void solve() {
    northwest_corner();
    const std::size_t max_iter = 10000 * (n_ + m_);
    for (iterations_ = 0; iterations_ < max_iter; ++iterations_) {
      compute_potentials();
      std::size_t ei = 0, ej = 0;
      if (!find_entering(ei, ej)) return;
      pivot(ei, ej);
    }
    throw SolverError("transport simplex did not converge", iterations_);
  }

  const Matrix& flow() const { return flow_; }
  const std::vector<double>& row_potentials() const { return u_; }
  const std::vector<double>& col_potentials() const { return v_; }
  std::size_t iterations() const { return iterations_; }

 private:
  // Advances exactly one index per step, so exactly n + m - 1 cells enter
  // the basis; exhausted-and-tied steps leave a degenerate zero basic.
  void northwest_corner() {
    std::vector<double> ra = a_, rb = b_;
    std::size_t i = 0, j = 0;
    while (true) {
      const double f = std::min(ra[i], rb[j]);
      flow_(i, j) = f;
      in_basis_(i, j) = 1.0;
      ra[i] -= f;
      rb[j] -= f;
      if (i == n_ - 1 && j == m_ - 1) break;
      if (ra[i] <= 0.0 && i < n_ - 1) {
        ++i;
      } else if (j < m_ - 1) {
        ++j;
      } else {
        ++i;
      }
    }
  }

  // Basis cells form a spanning tree over rows and columns; u_0 = 0 roots it
  // and u_i + v_j = cost(i, j) propagates along tree edges.
  void compute_potentials() {
    std::fill(u_.begin(), u_.end(), std::numeric_limits<double>::quiet_NaN());
    std::fill(v_.begin(), v_.end(), std::numeric_limits<double>::quiet_NaN());
    u_[0] = 0.0;
    std::vector<std::size_t> row_stack{0};
    std::vector<std::size_t> col_stack;
    while (!row_stack.empty() || !col_stack.empty()) {
      if (!row_stack.empty()) {
        const std::size_t i = row_stack.back();
        row_stack.pop_back();
        for (std::size_t j = 0; j < m_; ++j) {
          if (in_basis_(i, j) != 0.0 && std::isnan(v_[j])) {
            v_[j] = cost_(i, j) - u_[i];
            col_stack.push_back(j);
          }
        }
      } else {
        const std::size_t j = col_stack.back();
        col_stack.pop_back();
        for (std::size_t i = 0; i < n_; ++i) {
          if (in_basis_(i, j) != 0.0 && std::isnan(u_[i])) {
            u_[i] = cost_(i, j) - v_[j];
            row_stack.push_back(i);
          }
        }
      }
    }
    for (double x : u_) {
      if (std::isnan(x)) throw SolverError("transport basis lost connectivity", iterations_);
    }
    for (double x : v_) {
      if (std::isnan(x)) throw SolverError("transport basis lost connectivity", iterations_);
    }
  }

  bool find_entering(std::size_t& ei, std::size_t& ej) const {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) {
        if (in_basis_(i, j) != 0.0) continue;
        if (cost_(i, j) - u_[i] - v_[j] < -tol_) {
          ei = i;
          ej = j;
          return true;
        }
      }
    }
    return false;
  }

  // Unique alternating cycle: the entering cell plus the tree path from its
  // row to its column. Even positions gain theta, odd positions lose it.
  void pivot(std::size_t ei, std::size_t ej) {
    const std::vector<std::pair<std::size_t, std::size_t>> path = tree_path(ei, ej);
    std::vector<std::pair<std::size_t, std::size_t>> cycle;
    cycle.reserve(path.size() + 1);
    cycle.emplace_back(ei, ej);
    for (auto it = path.rbegin(); it != path.rend(); ++it) cycle.push_back(*it);

    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < cycle.size(); k += 2) {
      theta = std::min(theta, flow_(cycle[k].first, cycle[k].second));
    }
    // Leaving cell: lowest row-major index among minimum-flow losers.
    std::size_t leave = 0;
    for (std::size_t k = 1; k < cycle.size(); k += 2) {
      const auto [i, j] = cycle[k];
      if (flow_(i, j) > theta) continue;
      if (leave == 0) {
        leave = k;
        continue;
      }
      const auto [li, lj] = cycle[leave];
      if (i * m_ + j < li * m_ + lj) leave = k;
    }

    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto [i, j] = cycle[k];
      if (k % 2 == 0) {
        flow_(i, j) += theta;
      } else {
        flow_(i, j) = std::max(0.0, flow_(i, j) - theta);
      }
    }
    const auto [li, lj] = cycle[leave];
    in_basis_(li, lj) = 0.0;
    flow_(li, lj) = 0.0;
    in_basis_(ei, ej) = 1.0;
  }

  // Path from row node ei to column node ej through basis edges, returned as
  // the cell sequence along the walk.
  std::vector<std::pair<std::size_t, std::size_t>> tree_path(std::size_t ei,
                                                             std::size_t ej) const {
    // parent_edge[node] = basis cell that discovered it; rows are 0..n-1,
    // columns n..n+m-1.
    const std::size_t total = n_ + m_;
    std::vector<std::pair<std::size_t, std::size_t>> parent_edge(
        total, {std::size_t(-1), std::size_t(-1)});
    std::vector<std::size_t> parent_node(total, std::size_t(-1));
    std::vector<char> seen(total, 0);
    std::vector<std::size_t> queue{ei};
    seen[ei] = 1;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const std::size_t node = queue[qi];
      if (node == n_ + ej) break;
      if (node < n_) {
        const std::size_t i = node;
        for (std::size_t j = 0; j < m_; ++j) {
          if (in_basis_(i, j) != 0.0 && !seen[n_ + j]) {
            seen[n_ + j] = 1;
            parent_edge[n_ + j] = {i, j};
            parent_node[n_ + j] = node;
            queue.push_back(n_ + j);
          }
        }
      } else {
        const std::size_t j = node - n_;
        for (std::size_t i = 0; i < n_; ++i) {
          if (in_basis_(i, j) != 0.0 && !seen[i]) {
            seen[i] = 1;
            parent_edge[i] = {i, j};
            parent_node[i] = node;
            queue.push_back(i);
          }
        }
      }
    }
    if (!seen[n_ + ej]) {
      throw SolverError("transport basis lost connectivity", iterations_);
    }
    std::vector<std::pair<std::size_t, std::size_t>> path;
    for (std::size_t node = n_ + ej; node != ei; node = parent_node[node]) {
      path.push_back(parent_edge[node]);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  std::vector<double> a_, b_;
  const Matrix& cost_;
  std::size_t n_, m_;
  Matrix flow_;
  Matrix in_basis_;
  std::vector<double> u_, v_;
  double tol_ = 1e-12;
  std::size_t iterations_ = 0;
};

}  // namespace

WeightedPointCloud make_cloud(Matrix points, std::vector<double> weights) {
  WeightedPointCloud c{std::move(points), std::move(weights)};
  validate_cloud(c, "input");
  double s = 0.0;
  for (double w : c.weights) s += w;
  if (std::abs(s - 1.0) > kUnitSumTolerance) {
    throw ParameterError("cloud weights sum to " + std::to_string(s) + ", expected 1");
  }
  return c;
}

WeightedPointCloud uniform_cloud(Matrix points) {
  const std::size_t n = points.rows();
  if (n == 0) throw ParameterError("cloud: needs at least one point");
  return WeightedPointCloud{std::move(points), std::vector<double>(n, 1.0 / double(n))};
}

CostMatrix cost_matrix(const Matrix& x, const Matrix& y) {
  return CostMatrix{pairwise_sq_dists(x, y)};
}

TransportPlan solve_transport(const std::vector<double>& a, const std::vector<double>& b,
                              const Matrix& cost) {
  const std::size_t n = a.size(), m = b.size();
  if (cost.rows() != n || cost.cols() != m) {
    throw DimensionError("solve_transport: cost is " + std::to_string(cost.rows()) + "x" +
                         std::to_string(cost.cols()) + " for " + std::to_string(n) + "x" +
                         std::to_string(m) + " weights");
  }
  require_finite(cost, "solve_transport cost");
  double sa = 0.0, sb = 0.0;
  for (double w : a) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("solve_transport: bad row weight");
    sa += w;
  }
  for (double w : b) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("solve_transport: bad col weight");
    sb += w;
  }
  if (std::abs(sa - sb) > kMassTolerance) {
    throw MarginalError("transport marginals differ: " + std::to_string(sa) + " vs " +
                        std::to_string(sb));
  }
  if (sa <= 0.0 || sb <= 0.0) throw ParameterError("solve_transport: zero total mass");

  // Points below the mass floor are excluded from the network so they cannot
  // seed degenerate bases; their rows come back as zeros.
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > kWeightFloor) rows.push_back(i);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (b[j] > kWeightFloor) cols.push_back(j);
  }
  if (rows.empty() || cols.empty()) throw ParameterError("solve_transport: all mass clamped");

  double ssa = 0.0, ssb = 0.0;
  for (std::size_t i : rows) ssa += a[i];
  for (std::size_t j : cols) ssb += b[j];
  std::vector<double> ra(rows.size()), rb(cols.size());
  for (std::size_t k = 0; k < rows.size(); ++k) ra[k] = a[rows[k]] / ssa;
  for (std::size_t k = 0; k < cols.size(); ++k) rb[k] = b[cols[k]] / ssb;

  Matrix rc(rows.size(), cols.size());
  for (std::size_t ki = 0; ki < rows.size(); ++ki) {
    for (std::size_t kj = 0; kj < cols.size(); ++kj) rc(ki, kj) = cost(rows[ki], cols[kj]);
  }

  TransportSimplex simplex(std::move(ra), std::move(rb), rc);
  simplex.solve();

  TransportPlan plan;
  plan.coupling = Matrix(n, m);
  plan.row_potentials.assign(n, 0.0);
  plan.col_potentials.assign(m, 0.0);
  plan.iterations = simplex.iterations();

  const double mass = ssa;  // undo the active-mass normalization
  for (std::size_t ki = 0; ki < rows.size(); ++ki) {
    for (std::size_t kj = 0; kj < cols.size(); ++kj) {
      plan.coupling(rows[ki], cols[kj]) = simplex.flow()(ki, kj) * mass;
    }
  }
  std::vector<char> row_active(n, 0), col_active(m, 0);
  for (std::size_t ki = 0; ki < rows.size(); ++ki) {
    plan.row_potentials[rows[ki]] = simplex.row_potentials()[ki];
    row_active[rows[ki]] = 1;
  }
  for (std::size_t kj = 0; kj < cols.size(); ++kj) {
    plan.col_potentials[cols[kj]] = simplex.col_potentials()[kj];
    col_active[cols[kj]] = 1;
  }
  // Excluded points get the tightest dual-feasible potential; they carry no
  // mass, so any feasible value is a valid sensitivity.
  for (std::size_t j = 0; j < m; ++j) {
    if (col_active[j]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t ki = 0; ki < rows.size(); ++ki) {
      best = std::min(best, cost(rows[ki], j) - plan.row_potentials[rows[ki]]);
    }
    plan.col_potentials[j] = best;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (row_active[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      best = std::min(best, cost(i, j) - plan.col_potentials[j]);
    }
    plan.row_potentials[i] = best;
  }

  plan.total_cost = frobenius_dot(plan.coupling, cost);
  return plan;
}

TransportPlan emd_exact(const WeightedPointCloud& a, const WeightedPointCloud& b) {
  validate_cloud(a, "alpha");
  validate_cloud(b, "beta");
  const CostMatrix cost = cost_matrix(a.points, b.points);
  return solve_transport(a.weights, b.weights, cost.entries);
}

EmdGradients emd_loss_grad(const WeightedPointCloud& a, const WeightedPointCloud& b) {
  EmdGradients g{emd_exact(a, b), Matrix(a.points.rows(), a.points.cols()),
                 Matrix(b.points.rows(), b.points.cols())};
  const Matrix& gamma = g.plan.coupling;
  for (std::size_t i = 0; i < a.points.rows(); ++i) {
    for (std::size_t j = 0; j < b.points.rows(); ++j) {
      const double w = gamma(i, j);
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < a.points.cols(); ++k) {
        const double diff = 2.0 * w * (a.points(i, k) - b.points(j, k));
        g.dx(i, k) += diff;
        g.dy(j, k) -= diff;
      }
    }
  }
  return g;
}

}  // namespace dali
