#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qmargin::lp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Feasibility tolerance every trusted solution must meet on the original rows.
inline constexpr double kFeasTol = 1e-7;
/// Relative optimality tolerance.
inline constexpr double kOptTol = 1e-9;

struct Coefficient {
  std::size_t column;
  double value;
};

/// Sparse row or column; entries are kept in insertion order and may repeat
/// a column (repeats are summed by every consumer).
using SparseVector = std::vector<Coefficient>;

enum class Relation { kLessEqual, kEqual, kGreaterEqual };
enum class Sense { kMinimize, kMaximize };
enum class VarKind { kContinuous, kBinary };

const char* to_string(Relation r);

struct Row {
  SparseVector coeffs;
  Relation relation = Relation::kLessEqual;
  double rhs = 0.0;
};

double dot(const SparseVector& v, std::span<const double> x);
std::vector<double> to_dense(const SparseVector& v, std::size_t dim);
SparseVector from_dense(std::span<const double> v, double drop_tol = 0.0);

class LinearProgram {
 public:
  explicit LinearProgram(std::size_t num_vars = 0);

  std::size_t num_vars() const { return objective_.size(); }
  std::size_t num_rows() const { return rows_.size(); }

  /// Appends a variable (free by default) and returns its column index.
  std::size_t add_variable(double lower = -kInfinity, double upper = kInfinity,
                           VarKind kind = VarKind::kContinuous,
                           std::string name = {});
  void add_row(Row row);
  void add_row(SparseVector coeffs, Relation rel, double rhs);

  void set_sense(Sense s) { sense_ = s; }
  Sense sense() const { return sense_; }
  void set_objective(std::vector<double> c);
  void set_objective_coefficient(std::size_t j, double v) { objective_.at(j) = v; }
  const std::vector<double>& objective() const { return objective_; }

  void set_bounds(std::size_t j, double lower, double upper);
  double lower(std::size_t j) const { return lower_[j]; }
  double upper(std::size_t j) const { return upper_[j]; }
  VarKind kind(std::size_t j) const { return kind_[j]; }
  void set_kind(std::size_t j, VarKind k);
  bool has_binaries() const;

  void set_name(std::size_t j, std::string name) { names_.at(j) = std::move(name); }
  /// Column name used by the text export; falls back to "c<j>".
  std::string name(std::size_t j) const;

  const std::vector<Row>& rows() const { return rows_; }
  const Row& row(std::size_t i) const { return rows_[i]; }

  /// Throws std::invalid_argument when a row references a column out of range,
  /// a binary has bounds other than [0,1], or bounds cross.
  void check_valid() const;

 private:
  Sense sense_ = Sense::kMinimize;
  std::vector<double> objective_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<VarKind> kind_;
  std::vector<std::string> names_;
  std::vector<Row> rows_;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };
const char* to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  std::vector<double> point;  // populated when optimal
  double objective_value = 0.0;
  std::size_t iterations = 0;
  std::string message;

  bool optimal() const { return status == LpStatus::kOptimal; }
};

/// Largest violation of any row or bound at `point` (0 when feasible).
double check_solution(const LinearProgram& lp, std::span<const double> point);

/// Solver contract: deterministic, reentrant, no shared mutable state.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual LpSolution solve(const LinearProgram& lp) const = 0;
  virtual std::string name() const = 0;
};

/// Solves a continuous LP. Throws std::invalid_argument if `lp` has binaries.
LpSolution solve_lp(const SolverBackend& backend, const LinearProgram& lp);

struct BnbOptions {
  std::size_t max_nodes = 100000;
  /// Stop as soon as an integral solution with objective at least this good
  /// (>= for maximize, <= for minimize) is found.
  std::optional<double> stop_at;
  double integrality_tol = 1e-6;
};

struct BnbResult {
  LpSolution solution;
  std::size_t nodes = 0;
  bool stopped_early = false;
};

/// Depth-first branch-and-bound over the binary variables of `lp`, bounding
/// with LP relaxations from `backend`.
BnbResult solve_binary_bnb(const SolverBackend& backend, const LinearProgram& lp,
                           const BnbOptions& options = {});

}  // namespace qmargin::lp
