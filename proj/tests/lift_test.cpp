#include <gtest/gtest.h>

#include <random>
#include <set>

#include "qmargin/lift.hpp"
#include "test_systems.hpp"

namespace qmargin {
namespace {

using testing::random_matrix;
using testing::random_system;
using testing::random_vector;
using testing::toy_polytope;
using testing::toy_system;

double row_value(const lp::Row& row, const Vector& p) {
  double s = 0.0;
  for (const auto& c : row.coeffs) s += c.value * p(static_cast<Eigen::Index>(c.column));
  return s;
}

bool satisfied(const lp::Row& row, const Vector& p, double tol) {
  const double v = row_value(row, p);
  switch (row.relation) {
    case lp::Relation::kLessEqual: return v <= row.rhs + tol;
    case lp::Relation::kGreaterEqual: return v >= row.rhs - tol;
    case lp::Relation::kEqual: return std::abs(v - row.rhs) <= tol;
  }
  return false;
}

TEST(Lift, Dimension) {
  EXPECT_EQ(lift_dim(2), 5u);
  EXPECT_EQ(lift_dim(8), 44u);
  EXPECT_EQ(lift_dim(16), 152u);
  EXPECT_EQ(lift_dim(26), 377u);
  EXPECT_EQ(lift_dim(58), 1769u);
}

TEST(Lift, IndexIsBijective) {
  for (std::size_t n : {1u, 2u, 5u, 9u}) {
    const LiftedIndex idx(n);
    std::set<std::size_t> seen;
    for (std::size_t q = 0; q < n; ++q) {
      for (std::size_t r = q; r < n; ++r) {
        const std::size_t c = idx.X(q, r);
        EXPECT_EQ(c, idx.X(r, q));
        EXPECT_GE(c, n);
        EXPECT_LT(c, idx.dim());
        seen.insert(c);
      }
    }
    EXPECT_EQ(seen.size(), n * (n + 1) / 2);
  }
  const LiftedIndex idx(2);
  EXPECT_EQ(idx.X(0, 0), 2u);
  EXPECT_EQ(idx.X(0, 1), 3u);
  EXPECT_EQ(idx.X(1, 1), 4u);
  EXPECT_EQ(idx.name(0), "x1");
  EXPECT_EQ(idx.name(3), "X1_2");
  EXPECT_EQ(idx.name(4), "X2_2");
}

TEST(QuadraticRow, Toy) {
  const auto row = lp::to_dense(quadratic_row(toy_system(), 0), 5);
  EXPECT_EQ(row, (std::vector<double>{1, -3, 1, 0, 0}));
  EXPECT_THROW(quadratic_row(toy_system(), 2), std::out_of_range);
}

TEST(QuadraticRow, ZeroQIsL) {
  std::mt19937_64 rng(2);
  const Matrix l = random_matrix(rng, 3, 3);
  const QuadraticSystem sys(std::vector<Matrix>(3, Matrix::Zero(3, 3)), l, Vector::Zero(3),
                            Vector::Ones(3));
  const auto row = lp::to_dense(quadratic_row(sys, 1), lift_dim(3));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(row[j], l(1, static_cast<Eigen::Index>(j)));
  for (std::size_t j = 3; j < row.size(); ++j) EXPECT_EQ(row[j], 0.0);
}

TEST(QuadraticRow, ReproducesEvalOnRankOneLift) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    const auto sys = random_system(rng, n);
    const Vector x = random_vector(rng, n) * 2.0;
    const Vector f = eval_f(sys, x);
    const Vector p = lifted_point(x);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = lp::dot(quadratic_row(sys, static_cast<std::size_t>(i)),
                               std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
      EXPECT_NEAR(v, f(i), 1e-10 * std::max(1.0, std::abs(f(i))));
    }
  }
}

TEST(Rlt, ToyCountAndProducts) {
  const auto block = rlt_rows(toy_polytope());
  ASSERT_EQ(block.rows.size(), 16u);
  EXPECT_EQ(block.count(Provenance::kRlt), 16u);
  // Row (q, r) at a rank-1 lift equals -(b - Ax)_q (b - Ax)_r + 0 <= 0 after moving terms.
  Vector x(2);
  x << 1.2, 2.9;
  const Vector slack = toy_polytope().b - toy_polytope().a * x;
  const Vector p = lifted_point(x);
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t r = 0; r < 4; ++r) {
      const auto& row = block.rows[q * 4 + r];
      const double gap = row.rhs - row_value(row, p);
      EXPECT_NEAR(gap, slack(static_cast<Eigen::Index>(q)) * slack(static_cast<Eigen::Index>(r)), 1e-12);
    }
  }
}

TEST(Assemble, ToyCounts) {
  const auto block = assemble_base_constraints(toy_system(), toy_polytope(), box_at_radius(toy_system(), 1.0));
  EXPECT_EQ(block.rows.size(), 24u);
  EXPECT_EQ(block.nominal_rows, 24u);
  EXPECT_EQ(block.count(Provenance::kULower), 2u);
  EXPECT_EQ(block.count(Provenance::kUUpper), 2u);
  EXPECT_EQ(block.count(Provenance::kStateLimit), 4u);
  EXPECT_EQ(block.provenance.front(), Provenance::kULower);
  EXPECT_EQ(block.provenance[2], Provenance::kUUpper);
  EXPECT_EQ(block.provenance[4], Provenance::kStateLimit);
  EXPECT_EQ(block.provenance[8], Provenance::kRlt);
}

TEST(Assemble, DegenerateDimsCountTwice) {
  const auto toy = toy_system();
  Vector e(2);
  e << 0.0, 1.0;
  const QuadraticSystem sys(toy.q(), toy.l(), toy.u_star(), e);
  const auto box = box_at_radius(sys, 0.5);
  const auto merged = assemble_base_constraints(sys, toy_polytope(), box);
  EXPECT_EQ(merged.rows.size(), 23u);
  EXPECT_EQ(merged.nominal_rows, 24u);
  EXPECT_EQ(merged.rows[0].relation, lp::Relation::kEqual);
  const auto split = assemble_base_constraints(sys, toy_polytope(), box, {.split_degenerate = true});
  EXPECT_EQ(split.rows.size(), 24u);
  EXPECT_EQ(split.nominal_rows, 24u);
}

TEST(Assemble, RankOneFeasibility) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> mdist(1, 6);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 5;
    const auto sys = random_system(rng, n);
    Polytope poly;
    const Eigen::Index m = mdist(rng);
    poly.a = random_matrix(rng, m, n);
    const Vector x = random_vector(rng, n);
    // b chosen so that x is feasible with random nonnegative slack.
    poly.b = poly.a * x + random_vector(rng, m).cwiseAbs();
    const Vector f = eval_f(sys, x);
    UncertaintyBox box;
    box.u_min = f - random_vector(rng, n).cwiseAbs();
    box.u_max = f + random_vector(rng, n).cwiseAbs();
    box.active.assign(static_cast<std::size_t>(n), true);
    const auto block = assemble_base_constraints(sys, poly, box);
    EXPECT_EQ(block.nominal_rows, static_cast<std::size_t>(2 * n + m + m * m));
    const Vector p = lifted_point(x);
    for (const auto& row : block.rows) {
      const double scale = 1.0 + std::abs(row.rhs);
      EXPECT_TRUE(satisfied(row, p, 1e-10 * scale));
    }
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}

TEST(Assemble, DimensionMismatchThrows) {
  auto box = box_at_radius(toy_system(), 1.0);
  box.u_min.resize(3);
  EXPECT_THROW(assemble_base_constraints(toy_system(), toy_polytope(), box), std::invalid_argument);
}

TEST(ToProgram, NamesAndRows) {
  const auto block = assemble_base_constraints(toy_system(), toy_polytope(), box_at_radius(toy_system(), 1.0));
  const auto prog = to_program(block, 2);
  EXPECT_EQ(prog.num_vars(), 5u);
  EXPECT_EQ(prog.rows().size(), 24u);
  EXPECT_EQ(prog.name(2), "X1_1");
}

}  // namespace
}  // namespace qmargin
