#include "qmargin/lower.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "parallel.hpp"
#include "qmargin/simplex.hpp"

namespace qmargin::lower {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const lp::SolverBackend& backend_of(const LowerOptions& options) {
  static const lp::SimplexBackend builtin;
  return options.backend ? *options.backend : builtin;
}

lp::SparseVector facet_row(const Polytope& poly, std::size_t i) {
  lp::SparseVector row;
  for (Eigen::Index j = 0; j < poly.a.cols(); ++j) {
    const double v = poly.a(static_cast<Eigen::Index>(i), j);
    if (v != 0.0) row.push_back({static_cast<std::size_t>(j), v});
  }
  return row;
}

lp::LinearProgram base_program(const QuadraticSystem& sys, const Polytope& poly, double r,
                               const LowerOptions& options) {
  return to_program(assemble_base_constraints(sys, poly, box_at_radius(sys, r), options.assemble),
                    sys.dimension());
}

FacetOutcome outcome_of(lp::LpStatus s) {
  switch (s) {
    case lp::LpStatus::kInfeasible: return FacetOutcome::kFacetClear;
    case lp::LpStatus::kOptimal: return FacetOutcome::kBoundaryReachable;
    default: return FacetOutcome::kInconclusive;
  }
}

FacetEvidence solve_facet(const lp::LinearProgram& base, const Polytope& poly, std::size_t i,
                          const lp::SolverBackend& backend) {
  lp::LinearProgram prog = base;
  prog.add_row(facet_row(poly, i), lp::Relation::kEqual, poly.b(static_cast<Eigen::Index>(i)));
  const auto sol = lp::solve_lp(backend, prog);
  return {i, sol.status, std::nullopt};
}

void check_radius(double r) {
  if (!(r >= 0.0)) throw std::invalid_argument("radius must be nonnegative");
}

}  // namespace

const char* to_string(Procedure p) {
  switch (p) {
    case Procedure::kFeasibility: return "feasibility";
    case Procedure::kMip: return "mip";
    case Procedure::kTightening: return "tightening";
  }
  return "?";
}

std::optional<Procedure> parse_procedure(const std::string& s) {
  if (s == "feasibility") return Procedure::kFeasibility;
  if (s == "mip") return Procedure::kMip;
  if (s == "tightening") return Procedure::kTightening;
  return std::nullopt;
}

const char* to_string(FacetOutcome o) {
  switch (o) {
    case FacetOutcome::kFacetClear: return "facet-clear";
    case FacetOutcome::kBoundaryReachable: return "boundary-reachable";
    case FacetOutcome::kInconclusive: return "inconclusive";
  }
  return "?";
}

ProblemSize problem_size(Procedure p, std::size_t n, std::size_t m) {
  ProblemSize s{lift_dim(n), 2 * n + m + m * m};
  if (p == Procedure::kMip) {
    s.variables += m + 1;
    s.constraints += m + 1;
  }
  return s;
}

FacetOutcome facet_feasibility_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                           std::size_t i, const LowerOptions& options) {
  check_radius(r);
  if (i >= poly.rows()) throw std::out_of_range("facet index out of range");
  const auto base = base_program(sys, poly, r, options);
  return outcome_of(solve_facet(base, poly, i, backend_of(options)).status);
}

Certificate lp_feasibility_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                       const LowerOptions& options) {
  check_radius(r);
  const auto t0 = Clock::now();
  Certificate cert;
  cert.radius = r;
  cert.procedure = Procedure::kFeasibility;
  const auto base = base_program(sys, poly, r, options);
  const auto& backend = backend_of(options);
  cert.evidence = detail::ordered_sweep<FacetEvidence>(
      poly.rows(), options.parallel,
      [&](std::size_t i) { return solve_facet(base, poly, i, backend); },
      [](const FacetEvidence& e) { return e.status != lp::LpStatus::kInfeasible; });

  cert.certified = cert.evidence.size() == poly.rows() &&
                   std::all_of(cert.evidence.begin(), cert.evidence.end(),
                               [](const FacetEvidence& e) { return e.status == lp::LpStatus::kInfeasible; });
  if (!cert.certified) {
    const auto& last = cert.evidence.back();
    cert.reason = std::string("facet ") + std::to_string(last.facet + 1) + " " +
                  to_string(outcome_of(last.status));
  }
  cert.seconds = elapsed(t0);
  return cert;
}

Certificate mip_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                            const LowerOptions& options) {
  check_radius(r);
  const auto t0 = Clock::now();
  const auto& backend = backend_of(options);
  Certificate cert;
  cert.radius = r;
  cert.procedure = Procedure::kMip;

  const PolytopeExtent ext = polytope_extent(poly, backend);
  if (ext.status != ExtentStatus::kBounded) {
    cert.reason = "polytope extent unavailable; big-M cannot be sized";
    cert.seconds = elapsed(t0);
    return cert;
  }
  const double row_norm = poly.a.cwiseAbs().rowwise().sum().maxCoeff();
  const double big_m = 2.0 * (poly.b.lpNorm<Eigen::Infinity>() + row_norm * ext.max_abs());

  lp::LinearProgram prog = base_program(sys, poly, r, options);
  const std::size_t m = poly.rows();
  std::vector<std::size_t> d(m);
  for (std::size_t i = 0; i < m; ++i) {
    d[i] = prog.add_variable(0.0, 1.0, lp::VarKind::kBinary, "d" + std::to_string(i + 1));
  }
  const std::size_t z = prog.add_variable(-lp::kInfinity, lp::kInfinity, lp::VarKind::kContinuous, "z");
  for (std::size_t i = 0; i < m; ++i) {
    // z - (Ax)_i + R d_i <= R - b_i
    lp::SparseVector row;
    for (const auto& c : facet_row(poly, i)) row.push_back({c.column, -c.value});
    row.push_back({d[i], big_m});
    row.push_back({z, 1.0});
    prog.add_row(std::move(row), lp::Relation::kLessEqual, big_m - poly.b(static_cast<Eigen::Index>(i)));
  }
  lp::SparseVector pick;
  for (std::size_t i = 0; i < m; ++i) pick.push_back({d[i], 1.0});
  prog.add_row(std::move(pick), lp::Relation::kEqual, 1.0);
  prog.set_sense(lp::Sense::kMaximize);
  prog.set_objective_coefficient(z, 1.0);

  lp::BnbOptions bnb;
  bnb.stop_at = -options.cert_tol;
  const auto result = lp::solve_binary_bnb(backend, prog, bnb);
  cert.iterations = result.nodes;
  const auto& sol = result.solution;

  FacetEvidence ev;
  ev.status = sol.status;
  if (sol.status == lp::LpStatus::kOptimal) {
    ev.value = sol.objective_value;
    ev.facet = static_cast<std::size_t>(
        std::max_element(d.begin(), d.end(),
                         [&](std::size_t a, std::size_t b) { return sol.point[a] < sol.point[b]; }) -
        d.begin());
  }
  cert.evidence.push_back(ev);

  if (sol.status == lp::LpStatus::kInfeasible) {
    cert.certified = true;
  } else if (sol.status == lp::LpStatus::kOptimal) {
    cert.certified = sol.objective_value < -options.cert_tol;
    if (!cert.certified) cert.reason = "facet " + std::to_string(ev.facet + 1) + " reachable";
  } else {
    cert.reason = std::string("MIP ") + lp::to_string(sol.status) +
                  (sol.message.empty() ? "" : ": " + sol.message);
  }
  cert.seconds = elapsed(t0);
  return cert;
}

Certificate bound_tightening_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                         const LowerOptions& options) {
  check_radius(r);
  const auto t0 = Clock::now();
  const auto& backend = backend_of(options);
  const auto box = box_at_radius(sys, r);
  const std::size_t m = poly.rows();
  const std::size_t n = sys.dimension();

  Certificate cert;
  cert.radius = r;
  cert.procedure = Procedure::kTightening;

  Polytope current = poly;
  for (std::size_t pass = 0; pass < options.tighten_cap; ++pass) {
    cert.iterations = pass + 1;
    const auto base = to_program(assemble_base_constraints(sys, current, box, options.assemble), n);
    cert.evidence = detail::parallel_map<FacetEvidence>(m, options.parallel, [&](std::size_t i) {
      lp::LinearProgram prog = base;
      std::vector<double> c(prog.num_vars(), 0.0);
      for (const auto& e : facet_row(poly, i)) c[e.column] = e.value;
      prog.set_objective(std::move(c));
      prog.set_sense(lp::Sense::kMaximize);
      const auto sol = lp::solve_lp(backend, prog);
      FacetEvidence ev{i, sol.status, std::nullopt};
      if (sol.optimal()) {
        ev.value = std::min(sol.objective_value, current.b(static_cast<Eigen::Index>(i)));
      }
      return ev;
    });

    for (const auto& ev : cert.evidence) {
      if (ev.status == lp::LpStatus::kInfeasible) {
        cert.certified = true;
        cert.reason.clear();
        cert.seconds = elapsed(t0);
        return cert;
      }
      if (ev.status != lp::LpStatus::kOptimal) {
        cert.reason = "facet " + std::to_string(ev.facet + 1) + " LP " + lp::to_string(ev.status);
        cert.seconds = elapsed(t0);
        return cert;
      }
    }

    bool clear = true;
    double shrink = 0.0;
    Vector next(static_cast<Eigen::Index>(m));
    for (const auto& ev : cert.evidence) {
      const auto i = static_cast<Eigen::Index>(ev.facet);
      next(i) = *ev.value;
      clear = clear && *ev.value < poly.b(i) - options.cert_tol;
      shrink = std::max(shrink, current.b(i) - *ev.value);
    }
    if (clear) {
      cert.certified = true;
      cert.seconds = elapsed(t0);
      return cert;
    }
    if (shrink < options.tighten_tol) {
      cert.reason = "bounds converged with a facet still reachable";
      cert.seconds = elapsed(t0);
      return cert;
    }
    current.b = next;
  }
  cert.iteration_cap_hit = true;
  cert.reason = "tightening pass cap reached";
  cert.seconds = elapsed(t0);
  return cert;
}

Certificate certify(Procedure p, const QuadraticSystem& sys, const Polytope& poly, double r,
                    const LowerOptions& options) {
  switch (p) {
    case Procedure::kFeasibility: return lp_feasibility_certificate(sys, poly, r, options);
    case Procedure::kMip: return mip_certificate(sys, poly, r, options);
    case Procedure::kTightening: return bound_tightening_certificate(sys, poly, r, options);
  }
  throw std::invalid_argument("unknown procedure");
}

SearchResult margin_search_lower(const QuadraticSystem& sys, const Polytope& poly, Procedure p,
                                 double r_hi_hint, const LowerOptions& options,
                                 const SearchOptions& search) {
  if (!(r_hi_hint > 0.0) || !std::isfinite(r_hi_hint)) {
    throw std::invalid_argument("margin_search_lower: hint must be positive and finite");
  }
  if (!(search.bisect_tol > 0.0)) throw std::invalid_argument("bisect_tol must be positive");
  const auto t0 = Clock::now();
  SearchResult out;
  out.procedure = p;
  auto test = [&](double r) {
    out.trail.push_back(certify(p, sys, poly, r, options));
    return out.trail.back().certified;
  };

  if (!test(0.0)) {
    out.lower = 0.0;
    out.diagnostic = "radius 0 not certified (" + out.trail.back().reason +
                     "): the forecast solution touches the boundary or the relaxation is too loose";
    out.seconds = elapsed(t0);
    return out;
  }

  double lo = 0.0;
  double hi = r_hi_hint;
  std::size_t doublings = 0;
  while (test(hi)) {
    lo = hi;
    if (++doublings > search.max_doublings) {
      out.lower = lo;
      out.diagnostic = "no failing radius found after " + std::to_string(search.max_doublings) + " doublings";
      out.seconds = elapsed(t0);
      return out;
    }
    hi *= 2.0;
  }
  while (hi - lo > search.bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    if (test(mid)) lo = mid;
    else hi = mid;
  }
  out.lower = lo;

  double lowest_failure = INFINITY;
  for (const auto& c : out.trail)
    if (!c.certified) lowest_failure = std::min(lowest_failure, c.radius);
  for (const auto& c : out.trail)
    if (c.certified && c.radius > lowest_failure) out.non_monotone = true;
  if (out.non_monotone) out.diagnostic = "certificates were not monotone in the radius";
  out.seconds = elapsed(t0);
  return out;
}

nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["radius"] = c.radius;
  j["verdict"] = c.certified ? "certified-robust-feasible" : "not-certified";
  j["procedure"] = to_string(c.procedure);
  j["iterations"] = c.iterations;
  j["iteration_cap_hit"] = c.iteration_cap_hit;
  j["seconds"] = c.seconds;
  if (!c.reason.empty()) j["reason"] = c.reason;
  auto& ev = j["evidence"] = nlohmann::json::array();
  for (const auto& e : c.evidence) {
    nlohmann::json x{{"facet", e.facet + 1}, {"status", lp::to_string(e.status)}};
    if (e.value) x["value"] = *e.value;
    ev.push_back(std::move(x));
  }
  return j;
}

nlohmann::json to_json(const SearchResult& s) {
  nlohmann::json j;
  j["procedure"] = to_string(s.procedure);
  j["lower"] = s.lower;
  j["non_monotone"] = s.non_monotone;
  j["seconds"] = s.seconds;
  if (!s.diagnostic.empty()) j["diagnostic"] = s.diagnostic;
  auto& trail = j["trail"] = nlohmann::json::array();
  for (const auto& c : s.trail) trail.push_back(to_json(c));
  return j;
}

}  // namespace qmargin::lower
