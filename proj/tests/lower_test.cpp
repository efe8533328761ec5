#include <gtest/gtest.h>
#include <omp.h>

#include <random>

#include "qmargin/lower.hpp"
#include "test_systems.hpp"

namespace qmargin {
namespace {

using lower::Procedure;
using testing::random_instance;
using testing::toy_polytope;
using testing::toy_system;

TEST(Facet, ToyClearAtOne) {
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(lower::facet_feasibility_certificate(toy_system(), toy_polytope(), 1.0, i),
              lower::FacetOutcome::kFacetClear);
  }
}

TEST(Facet, ToyReachableAtOnePointFive) {
  bool reachable = false;
  for (std::size_t i = 0; i < 4; ++i) {
    reachable |= lower::facet_feasibility_certificate(toy_system(), toy_polytope(), 1.5, i) ==
                 lower::FacetOutcome::kBoundaryReachable;
  }
  EXPECT_TRUE(reachable);
  EXPECT_THROW(lower::facet_feasibility_certificate(toy_system(), toy_polytope(), 1.0, 4), std::out_of_range);
}

TEST(Feasibility, ToyThreshold) {
  const auto yes = lower::lp_feasibility_certificate(toy_system(), toy_polytope(), 1.20);
  EXPECT_TRUE(yes.certified);
  EXPECT_EQ(yes.evidence.size(), 4u);
  const auto no = lower::lp_feasibility_certificate(toy_system(), toy_polytope(), 1.21);
  EXPECT_FALSE(no.certified);
  EXPECT_FALSE(no.reason.empty());
  EXPECT_TRUE(lower::lp_feasibility_certificate(toy_system(), toy_polytope(), 0.0).certified);
  EXPECT_THROW(lower::lp_feasibility_certificate(toy_system(), toy_polytope(), -1.0), std::invalid_argument);
}

TEST(Mip, ToyAgreesWithFeasibility) {
  const auto mip = lower::mip_certificate(toy_system(), toy_polytope(), 1.0);
  EXPECT_TRUE(mip.certified) << mip.reason;
  EXPECT_EQ(mip.certified, lower::lp_feasibility_certificate(toy_system(), toy_polytope(), 1.0).certified);
  const auto far = lower::mip_certificate(toy_system(), toy_polytope(), 2.0);
  EXPECT_FALSE(far.certified);
  ASSERT_TRUE(far.evidence.front().value.has_value());
  EXPECT_GE(*far.evidence.front().value, -lower::kCertTol);
}

TEST(Mip, IntervalAgreesWithFacetEnumeration) {
  // Smallest bounded polytope in one dimension: two facets.
  const QuadraticSystem sys({Matrix::Constant(1, 1, 0.3)}, Matrix::Constant(1, 1, 1.0),
                            Vector::Constant(1, 1.3), Vector::Ones(1));
  Polytope poly;
  poly.a.resize(2, 1);
  poly.a << 1, -1;
  poly.b.resize(2);
  poly.b << 2, 0;
  for (double r : {0.0, 0.2, 0.5, 1.0, 2.0}) {
    EXPECT_EQ(lower::mip_certificate(sys, poly, r).certified,
              lower::lp_feasibility_certificate(sys, poly, r).certified)
        << "r = " << r;
  }
}

TEST(Tightening, ToyThreshold) {
  const auto yes = lower::bound_tightening_certificate(toy_system(), toy_polytope(), 1.70);
  EXPECT_TRUE(yes.certified) << yes.reason;
  EXPECT_GT(yes.iterations, 1u);
  for (const auto& ev : yes.evidence) {
    ASSERT_TRUE(ev.value.has_value());
    EXPECT_LE(*ev.value, toy_polytope().b(static_cast<Eigen::Index>(ev.facet)) + lp::kFeasTol);
  }
  EXPECT_FALSE(lower::bound_tightening_certificate(toy_system(), toy_polytope(), 1.75).certified);
}

TEST(Tightening, PassCapIsFlagged) {
  lower::LowerOptions opts;
  opts.tighten_cap = 1;
  const auto c = lower::bound_tightening_certificate(toy_system(), toy_polytope(), 1.70, opts);
  EXPECT_FALSE(c.certified);
  EXPECT_TRUE(c.iteration_cap_hit);
}

TEST(Properties, ToyGridDominanceAndEquivalence) {
  for (double r = 0.0; r <= 2.0; r += 0.1) {
    const bool feas = lower::lp_feasibility_certificate(toy_system(), toy_polytope(), r).certified;
    const bool mip = lower::mip_certificate(toy_system(), toy_polytope(), r).certified;
    const bool tight = lower::bound_tightening_certificate(toy_system(), toy_polytope(), r).certified;
    EXPECT_EQ(feas, mip) << "r = " << r;
    if (feas) EXPECT_TRUE(tight) << "r = " << r;
  }
}

TEST(Properties, RandomInstances) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> rdist(0.0, 1.5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = random_instance(rng);
    const double r = rdist(rng);
    const bool feas = lower::lp_feasibility_certificate(inst.sys, inst.poly, r).certified;
    const bool mip = lower::mip_certificate(inst.sys, inst.poly, r).certified;
    const bool tight = lower::bound_tightening_certificate(inst.sys, inst.poly, r).certified;
    EXPECT_EQ(feas, mip) << "trial " << trial << " r = " << r;
    if (feas) EXPECT_TRUE(tight) << "trial " << trial << " r = " << r;
  }
}

TEST(Parallel, MatchesSerial) {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  lower::LowerOptions serial;
  serial.parallel = false;
  for (double r : {0.5, 1.2, 1.5, 1.7}) {
    for (auto p : {Procedure::kFeasibility, Procedure::kTightening}) {
      const auto a = lower::certify(p, toy_system(), toy_polytope(), r, serial);
      const auto b = lower::certify(p, toy_system(), toy_polytope(), r);
      EXPECT_EQ(a.certified, b.certified);
      ASSERT_EQ(a.evidence.size(), b.evidence.size());
      for (std::size_t k = 0; k < a.evidence.size(); ++k) {
        EXPECT_EQ(a.evidence[k].facet, b.evidence[k].facet);
        EXPECT_EQ(a.evidence[k].status, b.evidence[k].status);
        EXPECT_EQ(a.evidence[k].value, b.evidence[k].value);
      }
    }
  }
  omp_set_num_threads(saved);
}

TEST(Search, ToyValues) {
  const auto feas = lower::margin_search_lower(toy_system(), toy_polytope(), Procedure::kFeasibility, 1.0);
  EXPECT_NEAR(feas.lower, 1.20454, 1e-2);
  EXPECT_FALSE(feas.non_monotone);
  EXPECT_TRUE(feas.diagnostic.empty());
  const auto tight = lower::margin_search_lower(toy_system(), toy_polytope(), Procedure::kTightening, 1.0);
  EXPECT_NEAR(tight.lower, 1.706649, 1e-2);
  EXPECT_GE(tight.lower, feas.lower);
  // Every certified radius is below every failing one, and the trail brackets the result.
  for (const auto& c : tight.trail) {
    if (c.certified) EXPECT_LE(c.radius, tight.lower);
    else EXPECT_GT(c.radius, tight.lower);
  }
}

TEST(Search, BoundaryForecastReturnsZero) {
  const auto sys = toy_system();
  const auto x = newton_solve(sys, sys.u_star(), Vector::Ones(2)).solution;
  Polytope poly = toy_polytope();
  poly.b(1) = x(0);  // forecast solution lies on facet 2
  const auto res = lower::margin_search_lower(sys, poly, Procedure::kFeasibility, 1.0);
  EXPECT_EQ(res.lower, 0.0);
  EXPECT_FALSE(res.diagnostic.empty());
  EXPECT_EQ(res.trail.size(), 1u);
}

TEST(Search, RejectsBadHint) {
  EXPECT_THROW(lower::margin_search_lower(toy_system(), toy_polytope(), Procedure::kFeasibility, 0.0),
               std::invalid_argument);
}

TEST(Sizes, TableCounts) {
  const std::size_t ns[] = {8, 16, 26, 58}, ms[] = {24, 36, 80, 164};
  const std::size_t lp_vars[] = {44, 152, 377, 1769}, lp_cons[] = {616, 1364, 6532, 27176};
  const std::size_t mip_vars[] = {69, 189, 458, 1934}, mip_cons[] = {641, 1401, 6613, 27341};
  for (int k = 0; k < 4; ++k) {
    const auto a = lower::problem_size(Procedure::kFeasibility, ns[k], ms[k]);
    const auto b = lower::problem_size(Procedure::kMip, ns[k], ms[k]);
    EXPECT_EQ(a.variables, lp_vars[k]);
    EXPECT_EQ(a.constraints, lp_cons[k]);
    EXPECT_EQ(b.variables, mip_vars[k]);
    EXPECT_EQ(b.constraints, mip_cons[k]);
  }
}

TEST(Json, CertificateFields) {
  const auto c = lower::lp_feasibility_certificate(toy_system(), toy_polytope(), 1.0);
  const auto j = lower::to_json(c);
  EXPECT_EQ(j["verdict"], "certified-robust-feasible");
  EXPECT_EQ(j["procedure"], "feasibility");
  EXPECT_EQ(j["evidence"].size(), 4u);
  EXPECT_EQ(j["evidence"][0]["status"], "infeasible");
}

}  // namespace
}  // namespace qmargin
