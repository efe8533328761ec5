#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "qmargin/lp.hpp"

namespace qmargin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// F(x) = Q(x) + L x with [Q(x)]_i = x^T Q_i x, plus the forecast u* and the
/// error-bound pattern e. Square Q_i are symmetrized on construction.
class QuadraticSystem {
 public:
  QuadraticSystem() = default;
  QuadraticSystem(std::vector<Matrix> q, Matrix l, Vector u_star, Vector e);

  std::size_t dimension() const { return static_cast<std::size_t>(u_star_.size()); }
  const std::vector<Matrix>& q() const { return q_; }
  const Matrix& q(std::size_t i) const { return q_.at(i); }
  const Matrix& l() const { return l_; }
  const Vector& u_star() const { return u_star_; }
  const Vector& e() const { return e_; }

  /// Dimensions with e_i > 0.
  std::vector<bool> active_mask() const;

 private:
  std::vector<Matrix> q_;
  Matrix l_;
  Vector u_star_;
  Vector e_;
};

/// State limits A x <= b.
struct Polytope {
  Matrix a;
  Vector b;

  std::size_t rows() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(a.cols()); }
};

struct UncertaintyBox {
  Vector u_min;
  Vector u_max;
  std::vector<bool> active;
};

struct Violation {
  std::string invariant;
  std::string detail;
};

/// Empty iff every model invariant holds. Boundedness is checked with 2n LPs.
std::vector<Violation> validate(const QuadraticSystem& sys, const Polytope& poly,
                                const lp::SolverBackend& backend);
std::vector<Violation> validate(const QuadraticSystem& sys, const Polytope& poly);

Vector eval_f(const QuadraticSystem& sys, const Vector& x);

/// Row i is 2 (Q_i x)^T + L_i.
Matrix jacobian(const QuadraticSystem& sys, const Vector& x);

struct NewtonOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 50;
  std::size_t max_halvings = 40;
};

struct DegreeCheck {
  Vector solution;
  double jacobian_det = 0.0;
  int sign = 0;
  bool converged = false;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||F(x) - target||_inf at `solution`
  std::string reason;     // why it did not converge
};

/// Damped Newton on F(x) = target. Never throws on singular Jacobians; the
/// failure is reported through `converged` and `reason`.
DegreeCheck newton_solve(const QuadraticSystem& sys, const Vector& target, const Vector& x0,
                         const NewtonOptions& options = {});

/// Active dims get [u*_i - r, u*_i + r]; inactive dims are pinned at u*_i.
UncertaintyBox box_at_radius(const QuadraticSystem& sys, double r);

enum class ExtentStatus { kBounded, kUnbounded, kEmpty, kSolverFailure };

struct PolytopeExtent {
  ExtentStatus status = ExtentStatus::kSolverFailure;
  Vector lower;
  Vector upper;

  /// max_j max(|lower_j|, |upper_j|)
  double max_abs() const;
};

PolytopeExtent polytope_extent(const Polytope& poly, const lp::SolverBackend& backend);

/// Centre of the largest inscribed ball; throws std::runtime_error when the
/// polytope is empty or the LP fails.
Vector chebyshev_center(const Polytope& poly, const lp::SolverBackend& backend);

/// Newton solution of the forecast system, located strictly inside the
/// polytope, with nonzero Jacobian sign. Uniqueness inside the polytope is
/// not verified, so `uniqueness_unverified` is always set.
struct DegreePrecondition {
  DegreeCheck newton;
  bool interior = false;
  double interior_slack = 0.0;  // min_i (b - A x)_i
  bool passed = false;
  bool uniqueness_unverified = true;
  std::string reason;
};

DegreePrecondition check_degree_precondition(const QuadraticSystem& sys, const Polytope& poly,
                                             const Vector& x0,
                                             const NewtonOptions& options = {});

}  // namespace qmargin
