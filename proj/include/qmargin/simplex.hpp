#pragma once

#include <cstddef>
#include <vector>

#include "qmargin/lp.hpp"

namespace qmargin::lp {

/// Standard form: min c^T x  s.t.  A x = b,  x >= 0.  A is stored by column.
struct StandardForm {
  std::size_t num_rows = 0;
  std::vector<SparseVector> columns;  // column j: (row index, value)
  std::vector<double> rhs;
  std::vector<double> cost;
};

enum class KernelStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit, kNumericalFailure };

struct KernelResult {
  KernelStatus status = KernelStatus::kInfeasible;
  std::vector<double> x;     // primal values, size = columns
  std::vector<double> duals; // simplex multipliers pi, size = rows (A^T pi <= c)
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> ray;   // improving direction over the columns when unbounded
};

struct KernelOptions {
  std::size_t max_iterations = 200000;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_switch = 50;
  std::size_t refactor_period = 100;
  double pivot_tol = 1e-7;
  double optimality_tol = 1e-9;
  double feasibility_tol = 1e-9;
};

/// Two-phase dense revised simplex with an explicit basis inverse.
/// Dantzig pricing; falls back to Bland's rule on degenerate stalls.
KernelResult solve_standard_form(const StandardForm& sf, const KernelOptions& opt = {});

enum class SimplexRoute { kAuto, kPrimal, kDual };

struct SimplexOptions {
  SimplexRoute route = SimplexRoute::kAuto;
  KernelOptions kernel;
};

/// Built-in backend. Tall programs are transposed and solved through their
/// dual, whose basis is only as large as the number of columns.
class SimplexBackend final : public SolverBackend {
 public:
  explicit SimplexBackend(SimplexOptions options = {}) : options_(options) {}
  LpSolution solve(const LinearProgram& lp) const override;
  std::string name() const override { return "builtin-simplex"; }

 private:
  SimplexOptions options_;
};

}  // namespace qmargin::lp
