#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qmargin/lift.hpp"
#include "qmargin/lp.hpp"
#include "qmargin/qsys.hpp"

namespace qmargin::lower {

inline constexpr double kCertTol = 1e-6;
inline constexpr double kTightenTol = 1e-5;
inline constexpr std::size_t kTightenCap = 20;
inline constexpr double kBisectTol = 1e-3;

enum class Procedure { kFeasibility, kMip, kTightening };
const char* to_string(Procedure p);
std::optional<Procedure> parse_procedure(const std::string& s);

enum class FacetOutcome { kFacetClear, kBoundaryReachable, kInconclusive };
const char* to_string(FacetOutcome o);

struct FacetEvidence {
  std::size_t facet = 0;
  lp::LpStatus status = lp::LpStatus::kOptimal;
  std::optional<double> value;  // z_i where the procedure has one
};

struct Certificate {
  double radius = 0.0;
  bool certified = false;
  Procedure procedure = Procedure::kFeasibility;
  std::vector<FacetEvidence> evidence;
  std::size_t iterations = 0;  // tightening passes, B&B nodes for mip
  bool iteration_cap_hit = false;
  std::string reason;
  double seconds = 0.0;
};

struct LowerOptions {
  const lp::SolverBackend* backend = nullptr;  // builtin simplex when null
  double cert_tol = kCertTol;
  double tighten_tol = kTightenTol;
  std::size_t tighten_cap = kTightenCap;
  AssembleOptions assemble;
  bool parallel = true;
};

/// Variable and row counts of the programs each procedure solves, with the
/// degenerate-box equality counted as two rows.
struct ProblemSize {
  std::size_t variables = 0;
  std::size_t constraints = 0;
};
ProblemSize problem_size(Procedure p, std::size_t n, std::size_t m);

/// LP feasibility of the base constraints plus (Ax)_i = b_i.
FacetOutcome facet_feasibility_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                           std::size_t i, const LowerOptions& options = {});

Certificate lp_feasibility_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                       const LowerOptions& options = {});

/// Single binary program max z, z <= (Ax)_i - b_i + R(1 - d_i), sum d = 1.
Certificate mip_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                            const LowerOptions& options = {});

Certificate bound_tightening_certificate(const QuadraticSystem& sys, const Polytope& poly, double r,
                                         const LowerOptions& options = {});

Certificate certify(Procedure p, const QuadraticSystem& sys, const Polytope& poly, double r,
                    const LowerOptions& options = {});

struct SearchOptions {
  double bisect_tol = kBisectTol;
  std::size_t max_doublings = 40;
};

struct SearchResult {
  double lower = 0.0;
  Procedure procedure = Procedure::kFeasibility;
  std::vector<Certificate> trail;  // every radius tested, in order
  bool non_monotone = false;       // a certified radius above an uncertified one
  std::string diagnostic;
  double seconds = 0.0;
};

/// Largest certified radius: check r = 0, double from the hint until a
/// radius fails, then bisect.
SearchResult margin_search_lower(const QuadraticSystem& sys, const Polytope& poly, Procedure p,
                                 double r_hi_hint, const LowerOptions& options = {},
                                 const SearchOptions& search = {});

nlohmann::json to_json(const Certificate& c);
nlohmann::json to_json(const SearchResult& s);

}  // namespace qmargin::lower
