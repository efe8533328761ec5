#include <gtest/gtest.h>
#include <omp.h>

#include <random>

#include "qmargin/lift.hpp"
#include "qmargin/lower.hpp"
#include "qmargin/simplex.hpp"
#include "qmargin/upper.hpp"
#include "test_systems.hpp"

namespace qmargin {
namespace {

using testing::random_matrix;
using testing::random_vector;
using testing::toy_polytope;
using testing::toy_system;
using upper::OuterMode;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double solve_value(const lp::LinearProgram& prog) {
  const auto sol = lp::solve_lp(lp::SimplexBackend{}, prog);
  EXPECT_TRUE(sol.optimal()) << lp::to_string(sol.status);
  return sol.objective_value;
}

TEST(InnerMax, ToyShape) {
  const auto dual = upper::build_inner_max(toy_system(), toy_polytope());
  EXPECT_EQ(dual.rows(), 22u);
  EXPECT_EQ(dual.cols, 6u);
  EXPECT_TRUE(dual.uses_dummy);
  const Vector g = dual.g(vec({1, 0}));
  EXPECT_EQ(g, vec({1, -3, 1, 0, 0, 2}));
}

TEST(InnerMax, NoDummyWhenForecastIsZero) {
  const auto toy = toy_system();
  const QuadraticSystem sys(toy.q(), toy.l(), Vector::Zero(2), toy.e());
  const auto dual = upper::build_inner_max(sys, toy_polytope());
  EXPECT_FALSE(dual.uses_dummy);
  EXPECT_EQ(dual.cols, 5u);
  EXPECT_EQ(dual.rows(), 20u);
}

TEST(InnerMax, GIsLinear) {
  std::mt19937_64 rng(8);
  const auto dual = upper::build_inner_max(toy_system(), toy_polytope());
  for (int t = 0; t < 20; ++t) {
    const Vector a = random_vector(rng, 2), b = random_vector(rng, 2);
    EXPECT_LE((dual.g(a + b) - dual.g(a) - dual.g(b)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Dualize, StrongDualityToy) {
  const auto dual = upper::build_inner_max(toy_system(), toy_polytope());
  for (const Vector& l : {vec({1, 0}), vec({-1, 0}), vec({0, 1}), vec({0, -1}), vec({0.3077, -0.6923})}) {
    const double d = solve_value(upper::dualize(dual, l));
    const double p = solve_value(upper::inner_max_program(dual, l));
    EXPECT_NEAR(d, p, 1e-6 * std::max(1.0, std::abs(p)));
  }
}

TEST(Dualize, ToyVertexValues) {
  const auto dual = upper::build_inner_max(toy_system(), toy_polytope());
  EXPECT_NEAR(solve_value(upper::dualize(dual, vec({1, 0}))), 12.5, 1e-6);
  EXPECT_NEAR(solve_value(upper::dualize(dual, vec({0, 1}))), 8.0, 1e-6);
  EXPECT_NEAR(solve_value(upper::dualize(dual, vec({-1, 0}))), 6.25, 1e-6);
  EXPECT_NEAR(solve_value(upper::dualize(dual, vec({0, -1}))), 3.25, 1e-6);
}

TEST(Dualize, NormalizationAndHomogeneity) {
  const auto dual = upper::build_inner_max(toy_system(), toy_polytope());
  EXPECT_THROW(upper::dualize(dual, vec({2, 0})), std::invalid_argument);
  const Vector l = vec({0.4, -0.6});
  const double one = solve_value(upper::dualize(dual, l));
  const double two = solve_value(upper::dualize(dual, 2.0 * l, {.check_normalization = false}));
  EXPECT_NEAR(two, 2.0 * one, 1e-8 * std::max(1.0, std::abs(one)));
}

TEST(Dualize, EmptyPolytopeFlagged) {
  Polytope p = toy_polytope();
  p.b(1) = -1.0;
  const auto dual = upper::build_inner_max(toy_system(), p);
  const auto sol = lp::solve_lp(lp::SimplexBackend{}, upper::dualize(dual, vec({1, 0})));
  EXPECT_EQ(sol.status, lp::LpStatus::kUnbounded);
  const auto res = upper::solve_outer(toy_system(), p, OuterMode::kVertex);
  EXPECT_FALSE(res.z.has_value());
  EXPECT_FALSE(res.diagnostic.empty());
}

TEST(Outer, ToyComplementarity) {
  const auto r = upper::solve_outer(toy_system(), toy_polytope(), OuterMode::kSignComplementarity);
  ASSERT_TRUE(r.z.has_value()) << r.diagnostic;
  EXPECT_NEAR(*r.z, 2.63462, 1e-3);
  EXPECT_NEAR(r.lambda_argmin.lpNorm<1>(), 1.0, 1e-9);
  EXPECT_GT(r.lambda_argmin(0), 0.0);
  EXPECT_LT(r.lambda_argmin(1), 0.0);
}

TEST(Outer, ToyVertexDominates) {
  const auto v = upper::solve_outer(toy_system(), toy_polytope(), OuterMode::kVertex);
  ASSERT_TRUE(v.z.has_value());
  EXPECT_NEAR(*v.z, 3.25, 1e-6);
  EXPECT_EQ(v.directions.size(), 4u);
  EXPECT_EQ(v.lambda_argmin, vec({0, -1}));
  EXPECT_GE(*v.z, 2.63462 - 1e-6);
}

TEST(Outer, SymmetricRelaxationSingleActiveDim) {
  // F_1 = x_1 on a box symmetric about the forecast; only dimension 1 is uncertain.
  Matrix l = Matrix::Identity(2, 2);
  const QuadraticSystem sys({Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, l, vec({0.5, 0.0}), vec({1.0, 0.0}));
  Polytope p;
  p.a.resize(4, 2);
  p.a << 1, 0, -1, 0, 0, 1, 0, -1;
  p.b = vec({1.25, 0.25, 1, 1});  // x_1 in [-0.25, 1.25]
  const auto r = upper::solve_outer(sys, p, OuterMode::kVertex);
  ASSERT_TRUE(r.z.has_value());
  EXPECT_NEAR(*r.z, 0.75, 1e-7);
  EXPECT_NEAR(r.directions[0].value, r.directions[1].value, 1e-7);
  EXPECT_NEAR(upper::margin_upper(sys, p, OuterMode::kSignComplementarity), 0.75, 1e-7);
}

TEST(Outer, SandwichWithLowerOnToy) {
  const double up = upper::margin_upper(toy_system(), toy_polytope(), OuterMode::kSignComplementarity);
  for (auto p : {lower::Procedure::kFeasibility, lower::Procedure::kTightening}) {
    EXPECT_LE(lower::margin_search_lower(toy_system(), toy_polytope(), p, up).lower, up);
  }
}

TEST(Outer, StrongDualityRandom) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 2;
    std::vector<Matrix> q;
    for (Eigen::Index i = 0; i < n; ++i) q.push_back(random_matrix(rng, n, n));
    const QuadraticSystem sys(q, random_matrix(rng, n, n), random_vector(rng, n), Vector::Ones(n));
    Polytope p;
    p.a.resize(2 * n, n);
    p.a << Matrix::Identity(n, n), -Matrix::Identity(n, n);
    p.b = Vector::Ones(2 * n) + 0.5 * random_vector(rng, 2 * n).cwiseAbs();
    const auto dual = upper::build_inner_max(sys, p);
    Vector l = random_vector(rng, n);
    l /= l.lpNorm<1>();
    const double d = solve_value(upper::dualize(dual, l));
    const double pr = solve_value(upper::inner_max_program(dual, l));
    EXPECT_NEAR(d, pr, 1e-6 * std::max(1.0, std::abs(pr)));
  }
}

TEST(Outer, ParallelMatchesSerial) {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  upper::OuterOptions serial;
  serial.parallel = false;
  const auto a = upper::solve_outer(toy_system(), toy_polytope(), OuterMode::kVertex, serial);
  const auto b = upper::solve_outer(toy_system(), toy_polytope(), OuterMode::kVertex);
  ASSERT_EQ(a.directions.size(), b.directions.size());
  for (std::size_t k = 0; k < a.directions.size(); ++k) EXPECT_EQ(a.directions[k].value, b.directions[k].value);
  EXPECT_EQ(a.z, b.z);
  omp_set_num_threads(saved);
}

TEST(Outer, JsonHasUpper) {
  const auto j = upper::to_json(upper::solve_outer(toy_system(), toy_polytope(), OuterMode::kVertex));
  EXPECT_EQ(j["mode"], "vertex");
  EXPECT_NEAR(j["upper"].get<double>(), 3.25, 1e-6);
  EXPECT_EQ(j["directions"].size(), 4u);
}

}  // namespace
}  // namespace qmargin
