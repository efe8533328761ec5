#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qmargin/lp.hpp"
#include "qmargin/qsys.hpp"

namespace qmargin::upper {

enum class OuterMode { kVertex, kSignComplementarity };
const char* to_string(OuterMode m);
std::optional<OuterMode> parse_outer_mode(const std::string& s);

/// Inner max of lambda^T (F(x) - u*) over the lifted relaxation, written as
/// max g(lambda)^T w s.t. M w <= B with w = [x; X upper triangle; dummy].
struct DualSystem {
  std::size_t n = 0;
  std::size_t cols = 0;  // lift_dim(n), plus one when the dummy is used
  bool uses_dummy = false;
  std::vector<lp::SparseVector> m_rows;
  Vector rhs;
  std::vector<bool> active;
  /// Column i holds g(e_i); g(lambda) = g_basis * lambda.
  Matrix g_basis;

  std::size_t rows() const { return m_rows.size(); }
  Vector g(const Vector& lambda) const;
};

DualSystem build_inner_max(const QuadraticSystem& sys, const Polytope& poly);

struct DualizeOptions {
  bool check_normalization = true;  // require ||lambda||_1 = 1 within 1e-9
};

/// min B^T y s.t. M^T y = g(lambda), y >= 0.
lp::LinearProgram dualize(const DualSystem& dual, const Vector& lambda, const DualizeOptions& options = {});

/// The primal side max g(lambda)^T w s.t. M w <= B, for duality checks.
lp::LinearProgram inner_max_program(const DualSystem& dual, const Vector& lambda);

struct DirectionValue {
  Vector lambda;
  lp::LpStatus status = lp::LpStatus::kOptimal;
  double value = 0.0;  // +inf when the relaxation is unbounded along lambda
};

struct OuterOptions {
  const lp::SolverBackend* backend = nullptr;  // builtin simplex when null
  bool parallel = true;
  std::size_t max_nodes = 100000;
};

struct OuterResult {
  OuterMode mode = OuterMode::kVertex;
  std::optional<double> z;  // empty: no finite upper bound
  Vector lambda_argmin;
  std::vector<DirectionValue> directions;  // vertex mode only
  std::size_t nodes = 0;                   // complementarity mode only
  std::size_t variables = 0;
  std::size_t constraints = 0;
  std::string diagnostic;
  double seconds = 0.0;
};

OuterResult solve_outer(const QuadraticSystem& sys, const Polytope& poly, OuterMode mode,
                        const OuterOptions& options = {});

/// solve_outer's z, or +inf when no direction is bounded.
double margin_upper(const QuadraticSystem& sys, const Polytope& poly, OuterMode mode,
                    const OuterOptions& options = {});

nlohmann::json to_json(const OuterResult& r);

}  // namespace qmargin::upper
