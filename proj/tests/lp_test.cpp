#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "qmargin/lp.hpp"
#include "qmargin/simplex.hpp"

namespace qmargin::lp {
namespace {

LinearProgram single_var_max() {
  LinearProgram lp(1);
  lp.set_sense(Sense::kMaximize);
  lp.set_objective({1.0});
  lp.add_row({{0, 1.0}}, Relation::kLessEqual, 3.0);
  lp.add_row({{0, 1.0}}, Relation::kGreaterEqual, 0.0);
  return lp;
}

TEST(SolveLp, BoundedMaximum) {
  SimplexBackend backend;
  const auto sol = solve_lp(backend, single_var_max());
  ASSERT_EQ(sol.status, LpStatus::kOptimal);
  EXPECT_NEAR(sol.objective_value, 3.0, 1e-12);
}

TEST(SolveLp, ContradictoryRowsAreInfeasible) {
  LinearProgram lp(1);
  lp.add_row({{0, 1.0}}, Relation::kLessEqual, 0.0);
  lp.add_row({{0, 1.0}}, Relation::kGreaterEqual, 1.0);
  for (auto route : {SimplexRoute::kPrimal, SimplexRoute::kDual}) {
    SimplexBackend backend({route, {}});
    EXPECT_EQ(solve_lp(backend, lp).status, LpStatus::kInfeasible);
  }
}

TEST(SolveLp, DegenerateFaceHasUniqueValue) {
  LinearProgram lp(2);
  lp.set_sense(Sense::kMaximize);
  lp.set_objective({1.0, 1.0});
  lp.add_row({{0, 1.0}, {1, 1.0}}, Relation::kLessEqual, 1.0);
  lp.set_bounds(0, 0.0, kInfinity);
  lp.set_bounds(1, 0.0, kInfinity);
  SimplexBackend backend;
  const auto sol = solve_lp(backend, lp);
  ASSERT_EQ(sol.status, LpStatus::kOptimal);
  EXPECT_NEAR(sol.objective_value, 1.0, 1e-12);
  EXPECT_LE(check_solution(lp, sol.point), kFeasTol);
}

TEST(SolveLp, UnboundedDetectedOnBothRoutes) {
  LinearProgram lp(2);
  lp.set_sense(Sense::kMaximize);
  lp.set_objective({1.0, 0.0});
  lp.add_row({{0, 1.0}, {1, -1.0}}, Relation::kGreaterEqual, 0.0);
  lp.add_row({{1, 1.0}}, Relation::kGreaterEqual, 0.0);
  lp.add_row({{0, -1.0}}, Relation::kLessEqual, 0.0);
  for (auto route : {SimplexRoute::kPrimal, SimplexRoute::kDual}) {
    SimplexBackend backend({route, {}});
    EXPECT_EQ(solve_lp(backend, lp).status, LpStatus::kUnbounded);
  }
}

TEST(SolveLp, RejectsBinaries) {
  LinearProgram lp(1);
  lp.set_kind(0, VarKind::kBinary);
  SimplexBackend backend;
  EXPECT_THROW(solve_lp(backend, lp), std::invalid_argument);
}

TEST(SolveLp, IterationLimitIsItsOwnStatus) {
  LinearProgram lp(3);
  lp.set_sense(Sense::kMaximize);
  lp.set_objective({1.0, 2.0, 3.0});
  lp.add_row({{0, 1.0}, {1, 1.0}, {2, 1.0}}, Relation::kLessEqual, 4.0);
  for (std::size_t j = 0; j < 3; ++j) lp.set_bounds(j, 0.0, 2.0);
  SimplexOptions opt;
  opt.route = SimplexRoute::kPrimal;
  opt.kernel.max_iterations = 1;
  SimplexBackend backend(opt);
  EXPECT_EQ(solve_lp(backend, lp).status, LpStatus::kIterationLimit);
}

TEST(CheckSolution, ReportsLargestViolation) {
  LinearProgram lp(2);
  lp.add_row({{0, 1.0}}, Relation::kLessEqual, 1.0);
  lp.add_row({{0, 1.0}, {1, 1.0}}, Relation::kEqual, 2.0);
  const std::vector<double> feasible{1.0, 1.0};
  EXPECT_LE(check_solution(lp, feasible), kFeasTol);
  const std::vector<double> off{1.5, 0.5};
  EXPECT_NEAR(check_solution(lp, off), 0.5, 1e-15);
}

TEST(CheckSolution, NonFinitePointIsInfinitelyViolated) {
  LinearProgram lp(2);
  lp.add_row({{0, 1.0}}, Relation::kLessEqual, 1.0);
  const std::vector<double> nan_point{std::nan(""), 0.0};
  EXPECT_EQ(check_solution(lp, nan_point), kInfinity);
}

// Brute-force oracle: enumerate every n-subset of constraints (rows and finite
// bounds) held tight, keep feasible vertices, return the best objective.
struct Halfspace {
  Eigen::VectorXd a;
  double rhs;  // a.x <= rhs
};

std::optional<double> vertex_enumeration(const LinearProgram& lp) {
  const auto n = static_cast<Eigen::Index>(lp.num_vars());
  std::vector<Halfspace> hs;
  std::vector<bool> is_eq;
  for (const auto& row : lp.rows()) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const auto& c : row.coeffs) a(static_cast<Eigen::Index>(c.column)) += c.value;
    if (row.relation == Relation::kGreaterEqual) {
      hs.push_back({-a, -row.rhs});
      is_eq.push_back(false);
    } else {
      hs.push_back({a, row.rhs});
      is_eq.push_back(row.relation == Relation::kEqual);
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
    if (std::isfinite(lp.lower(j))) {
      hs.push_back({-e, -lp.lower(j)});
      is_eq.push_back(false);
    }
    if (std::isfinite(lp.upper(j))) {
      hs.push_back({e, lp.upper(j)});
      is_eq.push_back(false);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> c(lp.objective().data(), n);
  const double sign = lp.sense() == Sense::kMaximize ? 1.0 : -1.0;
  std::optional<double> best;
  const std::size_t k = hs.size();
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == static_cast<std::size_t>(n)) {
      Eigen::MatrixXd m(n, n);
      Eigen::VectorXd r(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        m.row(i) = hs[idx[static_cast<std::size_t>(i)]].a.transpose();
        r(i) = hs[idx[static_cast<std::size_t>(i)]].rhs;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
      if (!lu.isInvertible()) return;
      const Eigen::VectorXd x = lu.solve(r);
      for (std::size_t h = 0; h < k; ++h) {
        const double v = hs[h].a.dot(x) - hs[h].rhs;
        if (v > 1e-9 || (is_eq[h] && v < -1e-9)) return;
      }
      const double obj = c.dot(x);
      if (!best || sign * obj > sign * *best) best = obj;
      return;
    }
    for (std::size_t h = start; h < k; ++h) {
      idx[depth] = h;
      rec(h + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

LinearProgram random_boxed_lp(std::mt19937& rng, std::size_t n, std::size_t rows) {
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  std::uniform_int_distribution<int> rel(0, 5);
  LinearProgram lp(n);
  lp.set_sense(rng() % 2 ? Sense::kMaximize : Sense::kMinimize);
  std::vector<double> c(n);
  for (auto& v : c) v = coef(rng);
  lp.set_objective(c);
  for (std::size_t j = 0; j < n; ++j) lp.set_bounds(j, -5.0 + coef(rng) * 0.1, 5.0);
  for (std::size_t i = 0; i < rows; ++i) {
    SparseVector row;
    for (std::size_t j = 0; j < n; ++j) row.push_back({j, coef(rng)});
    const int r = rel(rng);
    const Relation relation = r == 0 ? Relation::kEqual
                              : r < 3 ? Relation::kGreaterEqual
                                      : Relation::kLessEqual;
    lp.add_row(std::move(row), relation, coef(rng));
  }
  return lp;
}

TEST(SolveLp, RoutesMatchVertexEnumeration) {
  std::mt19937 rng(7);
  int feasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 3;
    auto lp = random_boxed_lp(rng, n, 1 + trial % 5);
    const auto oracle = vertex_enumeration(lp);
    for (auto route : {SimplexRoute::kPrimal, SimplexRoute::kDual}) {
      SimplexBackend backend({route, {}});
      const auto sol = solve_lp(backend, lp);
      if (!oracle) {
        EXPECT_EQ(sol.status, LpStatus::kInfeasible) << "trial " << trial;
        continue;
      }
      ASSERT_EQ(sol.status, LpStatus::kOptimal) << "trial " << trial;
      EXPECT_NEAR(sol.objective_value, *oracle, 1e-7 * (1.0 + std::abs(*oracle)))
          << "trial " << trial;
      EXPECT_LE(check_solution(lp, sol.point), kFeasTol);
    }
    feasible += oracle.has_value();
  }
  EXPECT_GT(feasible, 50);
}

TEST(SolveLp, FeasibilityProgramsMatchVertexEnumeration) {
  std::mt19937 rng(19);
  int feasible = 0, infeasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 3;
    auto lp = random_boxed_lp(rng, n, 2 + trial % 6);
    lp.set_objective(std::vector<double>(n, 0.0));
    const bool oracle = vertex_enumeration(lp).has_value();
    for (auto route : {SimplexRoute::kPrimal, SimplexRoute::kDual}) {
      const auto sol = solve_lp(SimplexBackend({route, {}}), lp);
      if (!oracle) {
        EXPECT_EQ(sol.status, LpStatus::kInfeasible) << "trial " << trial;
        continue;
      }
      ASSERT_EQ(sol.status, LpStatus::kOptimal) << "trial " << trial;
      EXPECT_LE(check_solution(lp, sol.point), kFeasTol) << "trial " << trial;
    }
    (oracle ? feasible : infeasible)++;
  }
  EXPECT_GT(feasible, 30);
  EXPECT_GT(infeasible, 30);
}

TEST(SolveLp, TallFreeVariableProgramUsesDualRouteConsistently) {
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 6;
  LinearProgram lp(n);
  lp.set_sense(Sense::kMaximize);
  std::vector<double> c(n);
  for (auto& v : c) v = g(rng);
  lp.set_objective(c);
  for (int i = 0; i < 80; ++i) {
    SparseVector row;
    for (std::size_t j = 0; j < n; ++j) row.push_back({j, g(rng)});
    lp.add_row(std::move(row), Relation::kLessEqual, 1.0 + std::abs(g(rng)));
  }
  const auto dual = SimplexBackend({SimplexRoute::kDual, {}}).solve(lp);
  const auto primal = SimplexBackend({SimplexRoute::kPrimal, {}}).solve(lp);
  ASSERT_EQ(dual.status, LpStatus::kOptimal);
  ASSERT_EQ(primal.status, LpStatus::kOptimal);
  EXPECT_NEAR(dual.objective_value, primal.objective_value, 1e-8);
  EXPECT_LE(check_solution(lp, dual.point), kFeasTol);
}

TEST(SolveLp, HighlyDegenerateVertexOnBothRoutes) {
  // 300 rows all tight at x*, objective inside their cone: x* is optimal and
  // every pivot at it is degenerate.
  std::mt19937 rng(29);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 8;
  Eigen::VectorXd xs(n);
  for (auto& v : xs) v = g(rng);
  LinearProgram lp(n);
  lp.set_sense(Sense::kMaximize);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < 300; ++k) {
    Eigen::VectorXd a(n);
    for (auto& v : a) v = g(rng);
    if (k < 12) c += std::abs(g(rng)) * a;
    SparseVector row;
    for (std::size_t j = 0; j < n; ++j) row.push_back({j, a(static_cast<Eigen::Index>(j))});
    lp.add_row(std::move(row), Relation::kLessEqual, a.dot(xs));
  }
  lp.set_objective(std::vector<double>(c.data(), c.data() + n));
  for (std::size_t j = 0; j < n; ++j) lp.set_bounds(j, -20.0, 20.0);
  for (auto route : {SimplexRoute::kPrimal, SimplexRoute::kDual}) {
    KernelOptions k;
    k.degenerate_switch = 2;
    const auto sol = SimplexBackend({route, k}).solve(lp);
    ASSERT_EQ(sol.status, LpStatus::kOptimal);
    EXPECT_NEAR(sol.objective_value, c.dot(xs), 1e-7 * (1.0 + std::abs(c.dot(xs))));
    EXPECT_LE(check_solution(lp, sol.point), kFeasTol);
  }
}

TEST(SolveLp, DeterministicForIdenticalInput) {
  std::mt19937 rng(3);
  auto lp = random_boxed_lp(rng, 3, 4);
  SimplexBackend backend;
  const auto a = backend.solve(lp);
  const auto b = backend.solve(lp);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.point, b.point);
}

TEST(BranchAndBound, PicksLargerBranch) {
  // max z s.t. z <= 1 + R(1-d1), z <= 2 + R(1-d2), d1 + d2 = 1
  const double R = 10.0;
  LinearProgram lp(3);  // z, d1, d2
  lp.set_sense(Sense::kMaximize);
  lp.set_objective({1.0, 0.0, 0.0});
  lp.set_kind(1, VarKind::kBinary);
  lp.set_kind(2, VarKind::kBinary);
  lp.add_row({{0, 1.0}, {1, R}}, Relation::kLessEqual, 1.0 + R);
  lp.add_row({{0, 1.0}, {2, R}}, Relation::kLessEqual, 2.0 + R);
  lp.add_row({{1, 1.0}, {2, 1.0}}, Relation::kEqual, 1.0);
  SimplexBackend backend;
  const auto res = solve_binary_bnb(backend, lp);
  ASSERT_EQ(res.solution.status, LpStatus::kOptimal);
  EXPECT_NEAR(res.solution.objective_value, 2.0, 1e-9);
  EXPECT_NEAR(res.solution.point[2], 1.0, 1e-12);
}

TEST(BranchAndBound, AllBranchesInfeasible) {
  LinearProgram lp(2);
  lp.set_kind(0, VarKind::kBinary);
  lp.set_kind(1, VarKind::kBinary);
  lp.add_row({{0, 1.0}, {1, 1.0}}, Relation::kEqual, 1.5);
  lp.add_row({{0, 1.0}, {1, -1.0}}, Relation::kEqual, 0.5);
  SimplexBackend backend;
  EXPECT_EQ(solve_binary_bnb(backend, lp).solution.status, LpStatus::kInfeasible);
}

// Exhaustive enumeration over binary assignments as an independent oracle.
std::optional<double> enumerate_binaries(const LinearProgram& lp, const SolverBackend& backend) {
  std::vector<std::size_t> bins;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (lp.kind(j) == VarKind::kBinary) bins.push_back(j);
  }
  std::optional<double> best;
  for (std::size_t mask = 0; mask < (std::size_t{1} << bins.size()); ++mask) {
    LinearProgram sub = lp;
    for (std::size_t k = 0; k < bins.size(); ++k) {
      sub.set_kind(bins[k], VarKind::kContinuous);
      const double v = (mask >> k) & 1U ? 1.0 : 0.0;
      sub.set_bounds(bins[k], v, v);
    }
    const auto sol = backend.solve(sub);
    if (!sol.optimal()) continue;
    if (!best || (lp.sense() == Sense::kMaximize ? sol.objective_value > *best
                                                 : sol.objective_value < *best)) {
      best = sol.objective_value;
    }
  }
  return best;
}

TEST(BranchAndBound, MatchesExhaustiveEnumeration) {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  SimplexBackend backend;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t nbin = 2 + static_cast<std::size_t>(trial) % 11;  // up to 12
    LinearProgram lp(nbin + 2);
    lp.set_sense(trial % 2 ? Sense::kMaximize : Sense::kMinimize);
    std::vector<double> c(nbin + 2);
    for (auto& v : c) v = u(rng);
    lp.set_objective(c);
    lp.set_bounds(nbin, -3.0, 3.0);
    lp.set_bounds(nbin + 1, -3.0, 3.0);
    for (std::size_t j = 0; j < nbin; ++j) lp.set_kind(j, VarKind::kBinary);
    for (int r = 0; r < 4; ++r) {
      SparseVector row;
      for (std::size_t j = 0; j < nbin + 2; ++j) row.push_back({j, u(rng)});
      lp.add_row(std::move(row), Relation::kLessEqual, 1.0 + std::abs(u(rng)));
    }
    const auto oracle = enumerate_binaries(lp, backend);
    const auto res = solve_binary_bnb(backend, lp);
    if (!oracle) {
      EXPECT_EQ(res.solution.status, LpStatus::kInfeasible);
      continue;
    }
    ASSERT_EQ(res.solution.status, LpStatus::kOptimal) << "trial " << trial;
    EXPECT_NEAR(res.solution.objective_value, *oracle, 1e-7) << "trial " << trial;
  }
}

}  // namespace
}  // namespace qmargin::lp
