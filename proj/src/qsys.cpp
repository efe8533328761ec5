#include "qmargin/qsys.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qmargin/simplex.hpp"

namespace qmargin {

QuadraticSystem::QuadraticSystem(std::vector<Matrix> q, Matrix l, Vector u_star, Vector e)
    : q_(std::move(q)), l_(std::move(l)), u_star_(std::move(u_star)), e_(std::move(e)) {
  for (auto& qi : q_) {
    if (qi.rows() == qi.cols()) {
      Matrix sym = 0.5 * (qi + qi.transpose());
      qi = std::move(sym);
    }
  }
}

std::vector<bool> QuadraticSystem::active_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(e_.size()));
  for (Eigen::Index i = 0; i < e_.size(); ++i) mask[static_cast<std::size_t>(i)] = e_(i) > 0.0;
  return mask;
}

namespace {

void require_dim(const QuadraticSystem& sys, const Vector& x, const char* what) {
  if (static_cast<std::size_t>(x.size()) != sys.dimension()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                std::to_string(sys.dimension()) + ", got " +
                                std::to_string(x.size()) + ")");
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

std::vector<Violation> validate(const QuadraticSystem& sys, const Polytope& poly,
                                const lp::SolverBackend& backend) {
  std::vector<Violation> out;
  const auto n = static_cast<Eigen::Index>(sys.dimension());
  bool shapes_ok = true;

  if (n == 0) {
    out.push_back({"dimension", "n must be positive"});
    shapes_ok = false;
  }
  if (sys.q().size() != static_cast<std::size_t>(n)) {
    out.push_back({"dimension", "expected " + std::to_string(n) + " Q matrices, got " +
                                    std::to_string(sys.q().size())});
    shapes_ok = false;
  }
  for (std::size_t i = 0; i < sys.q().size(); ++i) {
    if (sys.q(i).rows() != n || sys.q(i).cols() != n) {
      out.push_back({"dimension", "Q_" + std::to_string(i + 1) + " must be n x n"});
      shapes_ok = false;
    } else if (!all_finite(sys.q(i))) {
      out.push_back({"finite", "Q_" + std::to_string(i + 1) + " has non-finite entries"});
    }
  }
  if (sys.l().rows() != n || sys.l().cols() != n) {
    out.push_back({"dimension", "L must be n x n"});
    shapes_ok = false;
  }
  if (sys.e().size() != n) {
    out.push_back({"dimension", "e must have n entries"});
    shapes_ok = false;
  } else if ((sys.e().array() < 0.0).any()) {
    out.push_back({"e must be nonnegative", "negative error bound"});
  }
  if (!sys.u_star().allFinite() || !all_finite(sys.l())) {
    out.push_back({"finite", "u* and L must be finite"});
  }

  if (poly.rows() == 0) {
    out.push_back({"polytope rows", "A needs at least one row"});
    return out;
  }
  if (static_cast<Eigen::Index>(poly.cols()) != n || poly.b.size() != poly.a.rows()) {
    out.push_back({"dimension", "A must be m x n and b must have m entries"});
    return out;
  }
  for (Eigen::Index i = 0; i < poly.a.rows(); ++i) {
    if (poly.a.row(i).cwiseAbs().maxCoeff() == 0.0) {
      out.push_back({"polytope zero row", "row " + std::to_string(i + 1) + " of A is all zeros"});
    }
  }
  if (!poly.a.allFinite() || !poly.b.allFinite()) {
    out.push_back({"finite", "A and b must be finite"});
    return out;
  }
  if (!shapes_ok) return out;

  const PolytopeExtent ext = polytope_extent(poly, backend);
  switch (ext.status) {
    case ExtentStatus::kBounded: break;
    case ExtentStatus::kUnbounded: out.push_back({"polytope unbounded", "some max +-x_j is infinite"}); break;
    case ExtentStatus::kEmpty: out.push_back({"polytope empty", "A x <= b has no solution"}); break;
    case ExtentStatus::kSolverFailure: out.push_back({"polytope boundedness", "LP solver failed"}); break;
  }
  return out;
}

std::vector<Violation> validate(const QuadraticSystem& sys, const Polytope& poly) {
  return validate(sys, poly, lp::SimplexBackend{});
}

Vector eval_f(const QuadraticSystem& sys, const Vector& x) {
  require_dim(sys, x, "eval_f");
  Vector f = sys.l() * x;
  for (std::size_t i = 0; i < sys.dimension(); ++i) {
    f(static_cast<Eigen::Index>(i)) += x.dot(sys.q(i) * x);
  }
  return f;
}

Matrix jacobian(const QuadraticSystem& sys, const Vector& x) {
  require_dim(sys, x, "jacobian");
  Matrix j = sys.l();
  for (std::size_t i = 0; i < sys.dimension(); ++i) {
    j.row(static_cast<Eigen::Index>(i)) += 2.0 * (sys.q(i) * x).transpose();
  }
  return j;
}

DegreeCheck newton_solve(const QuadraticSystem& sys, const Vector& target, const Vector& x0,
                         const NewtonOptions& options) {
  require_dim(sys, target, "newton_solve target");
  require_dim(sys, x0, "newton_solve x0");
  DegreeCheck out;
  if (!x0.allFinite()) {
    out.solution = x0;
    out.reason = "start point is not finite";
    return out;
  }

  Vector x = x0;
  Vector r = eval_f(sys, x) - target;
  double rnorm = r.lpNorm<Eigen::Infinity>();
  std::size_t it = 0;
  for (; rnorm > options.tol && it < options.max_iterations; ++it) {
    Eigen::FullPivLU<Matrix> lu(jacobian(sys, x));
    if (!lu.isInvertible()) {
      out.reason = "singular Jacobian at iteration " + std::to_string(it);
      break;
    }
    const Vector dx = lu.solve(-r);
    double step = 1.0;
    bool accepted = false;
    for (std::size_t h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      const Vector xn = x + step * dx;
      const Vector rn = eval_f(sys, xn) - target;
      if (rn.allFinite() && rn.norm() < r.norm()) {
        x = xn;
        r = rn;
        rnorm = r.lpNorm<Eigen::Infinity>();
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.reason = "line search failed at iteration " + std::to_string(it);
      ++it;
      break;
    }
  }

  out.solution = x;
  out.iterations = it;
  out.residual = rnorm;
  out.converged = rnorm <= options.tol;
  if (out.converged) {
    out.reason.clear();
  } else if (out.reason.empty()) {
    out.reason = "no convergence within " + std::to_string(options.max_iterations) + " iterations";
  }
  Eigen::FullPivLU<Matrix> lu(jacobian(sys, x));
  if (lu.isInvertible()) {
    out.jacobian_det = lu.determinant();
    out.sign = out.jacobian_det > 0.0 ? 1 : (out.jacobian_det < 0.0 ? -1 : 0);
  }
  return out;
}

UncertaintyBox box_at_radius(const QuadraticSystem& sys, double r) {
  if (!(r >= 0.0)) throw std::invalid_argument("box_at_radius: radius must be nonnegative");
  UncertaintyBox box;
  box.active = sys.active_mask();
  box.u_min = sys.u_star();
  box.u_max = sys.u_star();
  for (std::size_t i = 0; i < box.active.size(); ++i) {
    if (!box.active[i]) continue;
    box.u_min(static_cast<Eigen::Index>(i)) -= r;
    box.u_max(static_cast<Eigen::Index>(i)) += r;
  }
  return box;
}

double PolytopeExtent::max_abs() const {
  return std::max(lower.cwiseAbs().maxCoeff(), upper.cwiseAbs().maxCoeff());
}

namespace {

lp::LinearProgram polytope_lp(const Polytope& poly) {
  lp::LinearProgram prog(poly.cols());
  for (Eigen::Index i = 0; i < poly.a.rows(); ++i) {
    lp::SparseVector row;
    for (Eigen::Index j = 0; j < poly.a.cols(); ++j) {
      if (poly.a(i, j) != 0.0) row.push_back({static_cast<std::size_t>(j), poly.a(i, j)});
    }
    prog.add_row(std::move(row), lp::Relation::kLessEqual, poly.b(i));
  }
  return prog;
}

}  // namespace

PolytopeExtent polytope_extent(const Polytope& poly, const lp::SolverBackend& backend) {
  PolytopeExtent ext;
  const std::size_t n = poly.cols();
  ext.lower = Vector::Zero(static_cast<Eigen::Index>(n));
  ext.upper = Vector::Zero(static_cast<Eigen::Index>(n));
  lp::LinearProgram prog = polytope_lp(poly);
  bool unbounded = false;
  for (std::size_t j = 0; j < n; ++j) {
    for (const double dir : {1.0, -1.0}) {
      std::vector<double> c(n, 0.0);
      c[j] = dir;
      prog.set_objective(c);
      prog.set_sense(lp::Sense::kMaximize);
      const auto sol = lp::solve_lp(backend, prog);
      switch (sol.status) {
        case lp::LpStatus::kInfeasible:
          ext.status = ExtentStatus::kEmpty;
          return ext;
        case lp::LpStatus::kUnbounded:
          unbounded = true;
          break;
        case lp::LpStatus::kIterationLimit:
          ext.status = ExtentStatus::kSolverFailure;
          return ext;
        case lp::LpStatus::kOptimal:
          if (dir > 0) ext.upper(static_cast<Eigen::Index>(j)) = sol.objective_value;
          else ext.lower(static_cast<Eigen::Index>(j)) = -sol.objective_value;
          break;
      }
    }
  }
  ext.status = unbounded ? ExtentStatus::kUnbounded : ExtentStatus::kBounded;
  return ext;
}

Vector chebyshev_center(const Polytope& poly, const lp::SolverBackend& backend) {
  const std::size_t n = poly.cols();
  lp::LinearProgram prog(n + 1);
  for (Eigen::Index i = 0; i < poly.a.rows(); ++i) {
    lp::SparseVector row;
    for (Eigen::Index j = 0; j < poly.a.cols(); ++j) {
      if (poly.a(i, j) != 0.0) row.push_back({static_cast<std::size_t>(j), poly.a(i, j)});
    }
    row.push_back({n, poly.a.row(i).norm()});
    prog.add_row(std::move(row), lp::Relation::kLessEqual, poly.b(i));
  }
  prog.set_bounds(n, 0.0, lp::kInfinity);
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  prog.set_objective(c);
  prog.set_sense(lp::Sense::kMaximize);
  const auto sol = lp::solve_lp(backend, prog);
  if (!sol.optimal()) {
    throw std::runtime_error(std::string("chebyshev_center: LP ") + lp::to_string(sol.status));
  }
  return Eigen::Map<const Vector>(sol.point.data(), static_cast<Eigen::Index>(n));
}

DegreePrecondition check_degree_precondition(const QuadraticSystem& sys, const Polytope& poly,
                                             const Vector& x0, const NewtonOptions& options) {
  DegreePrecondition out;
  out.newton = newton_solve(sys, sys.u_star(), x0, options);
  if (!out.newton.converged) {
    out.reason = "Newton did not converge: " + out.newton.reason;
    return out;
  }
  out.interior_slack = (poly.b - poly.a * out.newton.solution).minCoeff();
  out.interior = out.interior_slack > 0.0;
  if (!out.interior) {
    out.reason = "forecast solution is not strictly inside the polytope";
    return out;
  }
  if (out.newton.sign == 0) {
    out.reason = "Jacobian is singular at the forecast solution";
    return out;
  }
  out.passed = true;
  return out;
}

}  // namespace qmargin
