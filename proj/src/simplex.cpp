#include "qmargin/simplex.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace qmargin::lp {

namespace {

// Pivot magnitude relative to the entering column below which the kernel
// refactors and, failing that, tries another entering column first.
constexpr double kStablePivot = 1e-6;

// Right-hand-side shift applied to basic values once degenerate pivots stall,
// relative to the largest rhs entry.
constexpr double kPerturbation = 1e-7;

class Kernel {
 public:
  Kernel(const StandardForm& sf, const KernelOptions& opt)
      : opt_(opt), m_(sf.num_rows), n_(sf.columns.size()) {
    if (sf.rhs.size() != m_ || sf.cost.size() != n_) {
      throw std::invalid_argument("standard form dimensions inconsistent");
    }
    row_sign_.assign(m_, 1.0);
    b_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      if (sf.rhs[i] < 0.0) row_sign_[i] = -1.0;
      b_(static_cast<Eigen::Index>(i)) = std::abs(sf.rhs[i]);
    }
    cols_.reserve(n_ + m_);
    for (const auto& col : sf.columns) {
      SparseVector c;
      c.reserve(col.size());
      for (const auto& e : col) {
        if (e.column >= m_) throw std::invalid_argument("standard form column row out of range");
        c.push_back({e.column, e.value * row_sign_[e.column]});
      }
      cols_.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < m_; ++i) cols_.push_back(SparseVector{{i, 1.0}});
    cost_ = sf.cost;
    cost_.resize(n_ + m_, 0.0);
  }

  KernelResult run() {
    KernelResult res;
    const auto m = static_cast<Eigen::Index>(m_);
    basic_.resize(m_);
    is_basic_.assign(n_ + m_, false);
    for (std::size_t i = 0; i < m_; ++i) {
      basic_[i] = n_ + i;
      is_basic_[n_ + i] = true;
    }
    binv_ = Eigen::MatrixXd::Identity(m, m);
    xb_ = b_;

    std::vector<double> phase1(n_ + m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) phase1[n_ + i] = 1.0;

    KernelStatus st = iterate(phase1, /*allow_artificial=*/true);
    if (st == KernelStatus::kIterationLimit || st == KernelStatus::kNumericalFailure) return finish(res, st);
    const double infeas = artificial_sum();
    if (infeas > opt_.feasibility_tol * std::max(1.0, b_.lpNorm<Eigen::Infinity>())) {
      return finish(res, KernelStatus::kInfeasible);
    }
    drive_out_artificials();

    st = iterate(cost_, /*allow_artificial=*/false);
    return finish(res, st);
  }

 private:
  double artificial_sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (basic_[i] >= n_) s += std::max(0.0, xb_(static_cast<Eigen::Index>(i)));
    }
    return s;
  }

  Eigen::VectorXd column_image(std::size_t j) const {
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    for (const auto& e : cols_[j]) {
      alpha.noalias() += e.value * binv_.col(static_cast<Eigen::Index>(e.column));
    }
    return alpha;
  }

  void pivot(std::size_t r, std::size_t q, const Eigen::VectorXd& alpha) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double theta = xb_(ri) / alpha(ri);
    xb_.noalias() -= theta * alpha;
    xb_(ri) = theta;
    Eigen::RowVectorXd prow = binv_.row(ri) / alpha(ri);
    Eigen::VectorXd a = alpha;
    a(ri) = 0.0;
    binv_.noalias() -= a * prow;
    binv_.row(ri) = prow;
    is_basic_[basic_[r]] = false;
    basic_[r] = q;
    is_basic_[q] = true;
  }

  bool refactor() {
    const auto m = static_cast<Eigen::Index>(m_);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < m_; ++i) {
      for (const auto& e : cols_[basic_[i]]) {
        basis(static_cast<Eigen::Index>(e.column), static_cast<Eigen::Index>(i)) += e.value;
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis);
    if (!(lu.rcond() > 1e-14)) return false;
    binv_ = lu.inverse();
    xb_ = binv_ * b_;
    return binv_.allFinite();
  }

  KernelStatus iterate(const std::vector<double>& cost, bool allow_artificial) {
    const std::size_t ncols = allow_artificial ? n_ + m_ : n_;
    bool bland = false;
    bool accept_unstable = false;
    std::size_t degenerate_streak = 0;
    bool perturbed = false;
    bool may_perturb = true;
    std::size_t since_refactor = 0;
    std::vector<bool> rejected(ncols, false);
    std::size_t num_rejected = 0;
    const auto clear_rejected = [&] {
      if (num_rejected == 0) return;
      std::fill(rejected.begin(), rejected.end(), false);
      num_rejected = 0;
    };
    Eigen::VectorXd cb(static_cast<Eigen::Index>(m_));
    while (true) {
      if (iterations_ >= opt_.max_iterations) return KernelStatus::kIterationLimit;
      if (since_refactor >= opt_.refactor_period) {
        if (!refactor()) return KernelStatus::kNumericalFailure;
        since_refactor = 0;
      }
      for (std::size_t i = 0; i < m_; ++i) cb(static_cast<Eigen::Index>(i)) = cost[basic_[i]];
      pi_ = binv_.transpose() * cb;

      std::size_t entering = ncols;
      double best = -opt_.optimality_tol;
      for (std::size_t j = 0; j < ncols; ++j) {
        if (is_basic_[j] || rejected[j]) continue;
        double d = cost[j];
        for (const auto& e : cols_[j]) d -= pi_(static_cast<Eigen::Index>(e.column)) * e.value;
        if (bland) {
          if (d < -opt_.optimality_tol) {
            entering = j;
            break;
          }
        } else if (d < best) {
          best = d;
          entering = j;
        }
      }
      if (entering == ncols) {
        if (since_refactor > 0) {
          since_refactor = opt_.refactor_period;  // confirm on a fresh factorization
          continue;
        }
        if (num_rejected > 0) {
          // Only unstable pivots remain; take the best of them.
          clear_rejected();
          accept_unstable = true;
          continue;
        }
        if (perturbed) {
          // Reduced costs do not depend on b: the basis stays dual feasible,
          // so dual pivots recover primal feasibility for the true rhs.
          b_ = b_true_;
          perturbed = false;
          const KernelStatus st = restore_feasibility(cost, ncols);
          if (st != KernelStatus::kOptimal) return st;
          since_refactor = opt_.refactor_period;
          bland = false;
          degenerate_streak = 0;
          continue;
        }
        return KernelStatus::kOptimal;
      }

      const Eigen::VectorXd alpha = column_image(entering);
      const double alpha_max = alpha.lpNorm<Eigen::Infinity>();
      // Pivots tiny relative to the column leave a near-singular basis.
      const double pivot_tol = std::max(opt_.pivot_tol, 1e-9 * alpha_max);

      // Harris two-pass ratio test; plain min-ratio with lowest-index ties under Bland.
      std::size_t leave = m_;
      if (bland) {
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m_; ++i) {
          const double a = alpha(static_cast<Eigen::Index>(i));
          if (a <= pivot_tol) continue;
          best_ratio = std::min(best_ratio, std::max(0.0, xb_(static_cast<Eigen::Index>(i))) / a);
        }
        for (std::size_t i = 0; i < m_; ++i) {
          const double a = alpha(static_cast<Eigen::Index>(i));
          if (a <= pivot_tol) continue;
          const double ratio = std::max(0.0, xb_(static_cast<Eigen::Index>(i))) / a;
          if (ratio <= best_ratio + 1e-12 && (leave == m_ || basic_[i] < basic_[leave])) leave = i;
        }
      } else {
        double bound = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m_; ++i) {
          const double a = alpha(static_cast<Eigen::Index>(i));
          if (a <= pivot_tol) continue;
          bound = std::min(bound, (std::max(0.0, xb_(static_cast<Eigen::Index>(i))) +
                                   opt_.feasibility_tol) / a);
        }
        double best_alpha = 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
          const double a = alpha(static_cast<Eigen::Index>(i));
          if (a <= pivot_tol) continue;
          const double ratio = std::max(0.0, xb_(static_cast<Eigen::Index>(i))) / a;
          if (ratio <= bound && a > best_alpha) {
            best_alpha = a;
            leave = i;
          }
        }
      }
      if (leave == m_) {
        if (since_refactor > 0) {
          since_refactor = opt_.refactor_period;
          continue;
        }
        if (allow_artificial) {
          // Phase 1 is bounded below: every blocking entry is under the pivot
          // tolerance, so this column cannot make progress.
          if (accept_unstable) return KernelStatus::kOptimal;
          rejected[entering] = true;
          ++num_rejected;
          continue;
        }
        ray_.assign(n_, 0.0);
        ray_[entering] = 1.0;
        for (std::size_t i = 0; i < m_; ++i) {
          if (basic_[i] < n_) ray_[basic_[i]] = -alpha(static_cast<Eigen::Index>(i));
        }
        return KernelStatus::kUnbounded;
      }

      const bool unstable = alpha(static_cast<Eigen::Index>(leave)) < kStablePivot * alpha_max;
      if (unstable && !accept_unstable) {
        if (since_refactor > 0) {
          since_refactor = opt_.refactor_period;
          continue;
        }
        rejected[entering] = true;
        ++num_rejected;
        continue;
      }

      const double step = std::max(0.0, xb_(static_cast<Eigen::Index>(leave))) /
                          alpha(static_cast<Eigen::Index>(leave));
      if (step <= 1e-12) {
        if (++degenerate_streak > opt_.degenerate_switch) {
          if (may_perturb) {
            perturb(allow_artificial);
            perturbed = true;
            may_perturb = false;
            degenerate_streak = 0;
          } else {
            bland = true;
          }
        }
      } else {
        degenerate_streak = 0;
        bland = false;
      }
      pivot(leave, entering, alpha);
      // Harris may accept a slightly infeasible leaving value; clamp the drift.
      for (Eigen::Index i = 0; i < xb_.size(); ++i) {
        if (xb_(i) < 0.0 && xb_(i) > -opt_.feasibility_tol) xb_(i) = 0.0;
      }
      ++iterations_;
      ++since_refactor;
      accept_unstable = false;
      if (unstable) {
        since_refactor = opt_.refactor_period;
      } else {
        clear_rejected();
      }
    }
  }

  // Shifts every basic value up by a small random amount, moving b to match.
  void perturb(bool include_artificials) {
    b_true_ = b_;
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> unit(1.0, 2.0);
    const double scale = kPerturbation * std::max(1.0, b_.lpNorm<Eigen::Infinity>());
    for (std::size_t i = 0; i < m_; ++i) {
      if (basic_[i] >= n_ && !include_artificials) continue;
      const double delta = scale * unit(rng);
      xb_(static_cast<Eigen::Index>(i)) += delta;
      for (const auto& e : cols_[basic_[i]]) b_(static_cast<Eigen::Index>(e.column)) += delta * e.value;
    }
  }

  // Dual simplex from a dual-feasible basis until the basic values are
  // nonnegative again.
  KernelStatus restore_feasibility(const std::vector<double>& cost, std::size_t ncols) {
    if (!refactor()) return KernelStatus::kNumericalFailure;
    std::size_t since_refactor = 0;
    Eigen::VectorXd cb(static_cast<Eigen::Index>(m_));
    const double tol = opt_.feasibility_tol * std::max(1.0, b_.lpNorm<Eigen::Infinity>());
    while (true) {
      if (iterations_ >= opt_.max_iterations) return KernelStatus::kIterationLimit;
      if (since_refactor >= opt_.refactor_period) {
        if (!refactor()) return KernelStatus::kNumericalFailure;
        since_refactor = 0;
      }
      std::size_t r = m_;
      double worst = -tol;
      for (std::size_t i = 0; i < m_; ++i) {
        if (xb_(static_cast<Eigen::Index>(i)) < worst) {
          worst = xb_(static_cast<Eigen::Index>(i));
          r = i;
        }
      }
      if (r == m_) {
        if (since_refactor > 0) {
          since_refactor = opt_.refactor_period;
          continue;
        }
        for (Eigen::Index i = 0; i < xb_.size(); ++i) xb_(i) = std::max(0.0, xb_(i));
        return KernelStatus::kOptimal;
      }

      for (std::size_t i = 0; i < m_; ++i) cb(static_cast<Eigen::Index>(i)) = cost[basic_[i]];
      pi_ = binv_.transpose() * cb;
      const Eigen::RowVectorXd rho = binv_.row(static_cast<Eigen::Index>(r));
      std::size_t entering = ncols;
      double best_ratio = std::numeric_limits<double>::infinity();
      double best_abs = 0.0;
      for (std::size_t j = 0; j < ncols; ++j) {
        if (is_basic_[j]) continue;
        double a = 0.0;
        double d = cost[j];
        for (const auto& e : cols_[j]) {
          a += rho(static_cast<Eigen::Index>(e.column)) * e.value;
          d -= pi_(static_cast<Eigen::Index>(e.column)) * e.value;
        }
        if (a >= -opt_.pivot_tol) continue;
        const double ratio = std::max(0.0, d) / -a;
        if (ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && -a > best_abs)) {
          best_ratio = std::min(best_ratio, ratio);
          best_abs = -a;
          entering = j;
        }
      }
      if (entering == ncols) {
        if (since_refactor > 0) {
          since_refactor = opt_.refactor_period;
          continue;
        }
        // No column can lift row r: the unperturbed program is infeasible
        // along it, which a feasible starting basis rules out.
        return KernelStatus::kNumericalFailure;
      }
      const Eigen::VectorXd alpha = column_image(entering);
      const bool unstable = std::abs(alpha(static_cast<Eigen::Index>(r))) < kStablePivot * alpha.lpNorm<Eigen::Infinity>();
      pivot(r, entering, alpha);
      ++iterations_;
      ++since_refactor;
      if (unstable) since_refactor = opt_.refactor_period;
    }
  }

  void drive_out_artificials() {
    for (std::size_t r = 0; r < m_; ++r) {
      if (basic_[r] < n_) continue;
      const auto ri = static_cast<Eigen::Index>(r);
      std::size_t best_j = n_;
      double best_abs = 1e-7;
      for (std::size_t j = 0; j < n_; ++j) {
        if (is_basic_[j]) continue;
        double v = 0.0;
        for (const auto& e : cols_[j]) v += binv_(ri, static_cast<Eigen::Index>(e.column)) * e.value;
        if (std::abs(v) > best_abs) {
          best_abs = std::abs(v);
          best_j = j;
        }
      }
      if (best_j == n_) continue;  // redundant row: artificial stays basic at zero
      pivot(r, best_j, column_image(best_j));
    }
  }

  KernelResult& finish(KernelResult& res, KernelStatus st) {
    res.status = st;
    res.iterations = iterations_;
    if (st == KernelStatus::kUnbounded) res.ray = ray_;
    if (st != KernelStatus::kOptimal) return res;
    if (!refactor()) {
      res.status = KernelStatus::kNumericalFailure;
      return res;
    }
    Eigen::VectorXd cb(static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i) cb(static_cast<Eigen::Index>(i)) = cost_[basic_[i]];
    pi_ = binv_.transpose() * cb;
    res.x.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (basic_[i] < n_) res.x[basic_[i]] = std::max(0.0, xb_(static_cast<Eigen::Index>(i)));
    }
    res.duals.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      res.duals[i] = pi_(static_cast<Eigen::Index>(i)) * row_sign_[i];
    }
    res.objective = 0.0;
    for (std::size_t j = 0; j < n_; ++j) res.objective += cost_[j] * res.x[j];
    return res;
  }

  KernelOptions opt_;
  std::size_t m_;
  std::size_t n_;
  std::vector<double> row_sign_;
  Eigen::VectorXd b_;
  Eigen::VectorXd b_true_;
  std::vector<SparseVector> cols_;  // Coefficient::column holds the row index here
  std::vector<double> cost_;
  std::vector<std::size_t> basic_;
  std::vector<bool> is_basic_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  Eigen::VectorXd pi_;
  std::vector<double> ray_;
  std::size_t iterations_ = 0;
};

}  // namespace

KernelResult solve_standard_form(const StandardForm& sf, const KernelOptions& opt) {
  return Kernel(sf, opt).run();
}

}  // namespace qmargin::lp

namespace qmargin::lp {

namespace {

struct ScaledRow {
  SparseVector coeffs;
  Relation relation;
  double rhs;
  double scale;
};

std::vector<ScaledRow> equilibrate(const LinearProgram& lp) {
  std::vector<ScaledRow> out;
  out.reserve(lp.num_rows());
  for (const auto& row : lp.rows()) {
    double scale = 0.0;
    for (const auto& c : row.coeffs) scale = std::max(scale, std::abs(c.value));
    ScaledRow s{row.coeffs, row.relation, row.rhs, 1.0};
    if (scale > 0.0) {
      for (auto& c : s.coeffs) c.value /= scale;
      s.rhs /= scale;
      s.scale = scale;
    }
    out.push_back(std::move(s));
  }
  return out;
}

LpStatus to_lp_status(KernelStatus s) {
  switch (s) {
    case KernelStatus::kOptimal: return LpStatus::kOptimal;
    case KernelStatus::kInfeasible: return LpStatus::kInfeasible;
    case KernelStatus::kUnbounded: return LpStatus::kUnbounded;
    case KernelStatus::kIterationLimit:
    case KernelStatus::kNumericalFailure: return LpStatus::kIterationLimit;
  }
  return LpStatus::kIterationLimit;
}

void finalize(const LinearProgram& lp, LpSolution& sol) {
  sol.objective_value = 0.0;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    sol.objective_value += lp.objective()[j] * sol.point[j];
  }
}

// Each column gets shifted onto x' >= 0; free columns split into x+ - x-.
LpSolution solve_primal_route(const LinearProgram& lp, const KernelOptions& opt) {
  enum class Map { kShiftLower, kShiftUpper, kSplit };
  const std::size_t n = lp.num_vars();
  const auto rows = equilibrate(lp);
  const double sense = lp.sense() == Sense::kMaximize ? -1.0 : 1.0;

  std::vector<Map> map(n);
  std::vector<std::size_t> first(n);
  std::size_t ncols = 0;
  std::size_t bound_rows = 0;
  for (std::size_t j = 0; j < n; ++j) {
    first[j] = ncols;
    if (std::isfinite(lp.lower(j))) {
      map[j] = Map::kShiftLower;
      ++ncols;
      if (std::isfinite(lp.upper(j))) ++bound_rows;
    } else if (std::isfinite(lp.upper(j))) {
      map[j] = Map::kShiftUpper;
      ++ncols;
    } else {
      map[j] = Map::kSplit;
      ncols += 2;
    }
  }
  std::size_t slack_cols = bound_rows;
  for (const auto& r : rows) {
    if (r.relation != Relation::kEqual) ++slack_cols;
  }

  StandardForm sf;
  sf.num_rows = rows.size() + bound_rows;
  sf.columns.resize(ncols + slack_cols);
  sf.rhs.assign(sf.num_rows, 0.0);
  sf.cost.assign(ncols + slack_cols, 0.0);

  auto put = [&](std::size_t row, std::size_t j, double a, double& rhs) {
    switch (map[j]) {
      case Map::kShiftLower:
        sf.columns[first[j]].push_back({row, a});
        rhs -= a * lp.lower(j);
        break;
      case Map::kShiftUpper:
        sf.columns[first[j]].push_back({row, -a});
        rhs -= a * lp.upper(j);
        break;
      case Map::kSplit:
        sf.columns[first[j]].push_back({row, a});
        sf.columns[first[j] + 1].push_back({row, -a});
        break;
    }
  };

  std::size_t slack = ncols;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double rhs = rows[i].rhs;
    for (const auto& c : rows[i].coeffs) put(i, c.column, c.value, rhs);
    sf.rhs[i] = rhs;
    if (rows[i].relation == Relation::kLessEqual) sf.columns[slack++].push_back({i, 1.0});
    if (rows[i].relation == Relation::kGreaterEqual) sf.columns[slack++].push_back({i, -1.0});
  }
  std::size_t brow = rows.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (map[j] == Map::kShiftLower && std::isfinite(lp.upper(j))) {
      sf.columns[first[j]].push_back({brow, 1.0});
      sf.columns[slack++].push_back({brow, 1.0});
      sf.rhs[brow] = lp.upper(j) - lp.lower(j);
      ++brow;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double c = sense * lp.objective()[j];
    switch (map[j]) {
      case Map::kShiftLower: sf.cost[first[j]] = c; break;
      case Map::kShiftUpper: sf.cost[first[j]] = -c; break;
      case Map::kSplit:
        sf.cost[first[j]] = c;
        sf.cost[first[j] + 1] = -c;
        break;
    }
  }

  const KernelResult kr = solve_standard_form(sf, opt);
  LpSolution sol;
  sol.status = to_lp_status(kr.status);
  sol.iterations = kr.iterations;
  if (kr.status != KernelStatus::kOptimal) return sol;
  sol.point.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    switch (map[j]) {
      case Map::kShiftLower: sol.point[j] = lp.lower(j) + kr.x[first[j]]; break;
      case Map::kShiftUpper: sol.point[j] = lp.upper(j) - kr.x[first[j]]; break;
      case Map::kSplit: sol.point[j] = kr.x[first[j]] - kr.x[first[j] + 1]; break;
    }
  }
  finalize(lp, sol);
  return sol;
}

// min c^T x s.t. G x >= h, E x = f, x free  <->  max h^T y + f^T w s.t.
// G^T y + E^T w = c, y >= 0. The kernel solves the latter; x = -pi.
// ray >= 0 with sum_k ray_k col_k = 0 and cost . ray < 0, up to scaled tolerances.
// Columns are equilibrated, so entries are at most 1 in magnitude.
bool farkas_certificate_holds(const StandardForm& sf, std::vector<double> ray) {
  if (ray.size() != sf.columns.size()) return false;
  double largest = 0.0;
  for (double r : ray) largest = std::max(largest, std::abs(r));
  if (!(largest > 0.0) || !std::isfinite(largest)) return false;
  double mass = 0.0;
  for (double& r : ray) {
    if (r < -1e-9 * largest) return false;
    r = std::max(r, 0.0);
    mass += r;
  }
  std::vector<double> residual(sf.num_rows, 0.0);
  double value = 0.0;
  for (std::size_t k = 0; k < ray.size(); ++k) {
    if (ray[k] == 0.0) continue;
    for (const auto& e : sf.columns[k]) residual[e.column] += ray[k] * e.value;
    value += ray[k] * sf.cost[k];
  }
  double worst = 0.0;
  for (double v : residual) worst = std::max(worst, std::abs(v));
  return worst <= 1e-9 * mass && value < -1e-7 * mass;
}

// With a zero objective every basis of the transposed problem is degenerate
// (its feasible set is a cone with apex 0). Normalizing by sum(y) = 1 turns the
// search into a bounded LP: a negative optimum is a Farkas certificate, and
// otherwise the multipliers give a feasible point.
LpSolution solve_farkas_cone(const LinearProgram& lp, const StandardForm& sf, const KernelOptions& opt,
                             bool& ambiguous) {
  const std::size_t n = lp.num_vars();
  StandardForm cone = sf;
  cone.num_rows = n + 1;
  cone.rhs.push_back(1.0);
  for (auto& col : cone.columns) col.push_back({n, 1.0});

  const KernelResult kr = solve_standard_form(cone, opt);
  LpSolution sol;
  sol.iterations = kr.iterations;
  if (kr.status != KernelStatus::kOptimal) {
    ambiguous = true;
    sol.status = LpStatus::kIterationLimit;
    return sol;
  }
  if (farkas_certificate_holds(sf, kr.x)) {
    sol.status = LpStatus::kInfeasible;
    return sol;
  }
  sol.status = LpStatus::kOptimal;
  sol.point.resize(n);
  for (std::size_t j = 0; j < n; ++j) sol.point[j] = -kr.duals[j];
  finalize(lp, sol);
  return sol;
}

// `relax` loosens every row and bound by that absolute amount; in the
// transposed problem this raises each column cost.
LpSolution solve_dual_route(const LinearProgram& lp, const KernelOptions& opt, double relax, bool& ambiguous) {
  ambiguous = false;
  const std::size_t n = lp.num_vars();
  const auto rows = equilibrate(lp);
  const double sense = lp.sense() == Sense::kMaximize ? -1.0 : 1.0;

  StandardForm sf;
  sf.num_rows = n;
  sf.rhs.resize(n);
  for (std::size_t j = 0; j < n; ++j) sf.rhs[j] = sense * lp.objective()[j];

  auto add_column = [&](const SparseVector& coeffs, double sign, double cost) {
    SparseVector col;
    col.reserve(coeffs.size());
    for (const auto& c : coeffs) col.push_back({c.column, sign * c.value});
    sf.columns.push_back(std::move(col));
    sf.cost.push_back(cost);
  };
  for (const auto& r : rows) {
    const double slack = relax / r.scale;
    switch (r.relation) {
      case Relation::kGreaterEqual: add_column(r.coeffs, 1.0, slack - r.rhs); break;
      case Relation::kLessEqual: add_column(r.coeffs, -1.0, slack + r.rhs); break;
      case Relation::kEqual:
        add_column(r.coeffs, 1.0, slack - r.rhs);
        add_column(r.coeffs, -1.0, slack + r.rhs);
        break;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (std::isfinite(lp.lower(j))) add_column({{j, 1.0}}, 1.0, relax - lp.lower(j));
    if (std::isfinite(lp.upper(j))) add_column({{j, 1.0}}, -1.0, relax + lp.upper(j));
  }

  const bool feasibility_only =
      std::all_of(sf.rhs.begin(), sf.rhs.end(), [](double v) { return v == 0.0; });
  if (feasibility_only) return solve_farkas_cone(lp, sf, opt, ambiguous);

  const KernelResult kr = solve_standard_form(sf, opt);
  LpSolution sol;
  sol.iterations = kr.iterations;
  switch (kr.status) {
    case KernelStatus::kUnbounded:
      // Accept "primal infeasible" only with a checked Farkas certificate.
      ambiguous = !farkas_certificate_holds(sf, kr.ray);
      sol.status = LpStatus::kInfeasible;
      return sol;
    case KernelStatus::kInfeasible:
    case KernelStatus::kNumericalFailure:
      ambiguous = true;
      sol.status = LpStatus::kInfeasible;
      return sol;
    case KernelStatus::kIterationLimit:
      sol.status = LpStatus::kIterationLimit;
      return sol;
    case KernelStatus::kOptimal:
      break;
  }
  sol.status = LpStatus::kOptimal;
  sol.point.resize(n);
  for (std::size_t j = 0; j < n; ++j) sol.point[j] = -kr.duals[j];
  finalize(lp, sol);
  return sol;
}

}  // namespace

LpSolution SimplexBackend::solve(const LinearProgram& lp) const {
  lp.check_valid();
  std::size_t primal_rows = lp.num_rows();
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (std::isfinite(lp.lower(j)) && std::isfinite(lp.upper(j))) ++primal_rows;
  }
  SimplexRoute route = options_.route;
  if (route == SimplexRoute::kAuto) {
    route = lp.num_vars() < primal_rows ? SimplexRoute::kDual : SimplexRoute::kPrimal;
  }

  if (route == SimplexRoute::kPrimal) {
    LpSolution sol = solve_primal_route(lp, options_.kernel);
    if (sol.optimal()) {
      const double viol = check_solution(lp, sol.point);
      if (!std::isfinite(viol)) {
        sol.status = LpStatus::kIterationLimit;
        sol.point.clear();
        sol.message = "primal route lost numerical accuracy";
      } else if (viol > kFeasTol) {
        sol.message = "primal route residual " + std::to_string(viol);
      }
    }
    return sol;
  }

  // Verdicts from the transposed problem count only when verified: a Farkas
  // certificate for infeasible, a point within kFeasTol for optimal.
  const auto verified = [&](const LpSolution& s, bool ambiguous) {
    if (ambiguous) return false;
    if (s.optimal()) return check_solution(lp, s.point) <= kFeasTol;
    return s.status == LpStatus::kInfeasible;
  };
  bool ambiguous = false;
  LpSolution sol = solve_dual_route(lp, options_.kernel, 0.0, ambiguous);
  if (verified(sol, ambiguous) || sol.status == LpStatus::kIterationLimit) return sol;
  std::size_t iterations = sol.iterations;

  // Near the feasibility boundary: rows loosened by half the tolerance still
  // give points within it, and stay infeasible only with some margin.
  sol = solve_dual_route(lp, options_.kernel, 0.5 * kFeasTol, ambiguous);
  iterations += sol.iterations;
  if (verified(sol, ambiguous)) {
    sol.iterations = iterations;
    return sol;
  }

  // Dual infeasible can also mean an unbounded primal.
  LpSolution primal = solve_primal_route(lp, options_.kernel);
  primal.iterations += iterations;
  if (primal.status == LpStatus::kUnbounded ||
      (primal.optimal() && check_solution(lp, primal.point) <= kFeasTol)) {
    return primal;
  }
  LpSolution out;
  out.status = LpStatus::kIterationLimit;
  out.iterations = primal.iterations;
  out.message = "no verified verdict";
  return out;
}

}  // namespace qmargin::lp
