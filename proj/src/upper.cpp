#include "qmargin/upper.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"
#include "qmargin/lift.hpp"
#include "qmargin/simplex.hpp"
#include "qmargin/system_io.hpp"

namespace qmargin::upper {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kInf = std::numeric_limits<double>::infinity();

const lp::SolverBackend& backend_of(const OuterOptions& options) {
  static const lp::SimplexBackend builtin;
  return options.backend ? *options.backend : builtin;
}

// Column-major view of M: for each column, the (row, value) entries.
std::vector<lp::SparseVector> transpose(const DualSystem& dual) {
  std::vector<lp::SparseVector> cols(dual.cols);
  for (std::size_t r = 0; r < dual.rows(); ++r)
    for (const auto& c : dual.m_rows[r]) cols[c.column].push_back({r, c.value});
  return cols;
}

std::vector<double> rhs_vector(const DualSystem& dual) {
  return {dual.rhs.data(), dual.rhs.data() + dual.rhs.size()};
}

}  // namespace

const char* to_string(OuterMode m) {
  switch (m) {
    case OuterMode::kVertex: return "vertex";
    case OuterMode::kSignComplementarity: return "mip";
  }
  return "?";
}

std::optional<OuterMode> parse_outer_mode(const std::string& s) {
  if (s == "vertex") return OuterMode::kVertex;
  if (s == "mip" || s == "sign-complementarity") return OuterMode::kSignComplementarity;
  return std::nullopt;
}

Vector DualSystem::g(const Vector& lambda) const {
  if (static_cast<std::size_t>(lambda.size()) != n) throw std::invalid_argument("g: lambda has wrong size");
  return g_basis * lambda;
}

DualSystem build_inner_max(const QuadraticSystem& sys, const Polytope& poly) {
  const std::size_t n = sys.dimension();
  if (poly.cols() != n) throw std::invalid_argument("build_inner_max: dimension mismatch");
  DualSystem dual;
  dual.n = n;
  dual.uses_dummy = (sys.u_star().array() != 0.0).any();
  const std::size_t lifted = lift_dim(n);
  dual.cols = lifted + (dual.uses_dummy ? 1 : 0);
  dual.active = sys.active_mask();

  ConstraintBlock block = state_rows(poly);
  block.append(rlt_rows(poly));
  std::vector<double> rhs;
  for (auto& row : block.rows) {
    dual.m_rows.push_back(std::move(row.coeffs));
    rhs.push_back(row.rhs);
  }
  if (dual.uses_dummy) {
    dual.m_rows.push_back({{lifted, 1.0}});
    rhs.push_back(1.0);
    dual.m_rows.push_back({{lifted, -1.0}});
    rhs.push_back(-1.0);
  }
  dual.rhs = Eigen::Map<const Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

  dual.g_basis = Matrix::Zero(static_cast<Eigen::Index>(dual.cols), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (const auto& c : quadratic_row(sys, i)) dual.g_basis(static_cast<Eigen::Index>(c.column), col) = c.value;
    if (dual.uses_dummy) dual.g_basis(static_cast<Eigen::Index>(lifted), col) = -sys.u_star()(col);
  }
  return dual;
}

lp::LinearProgram dualize(const DualSystem& dual, const Vector& lambda, const DualizeOptions& options) {
  if (options.check_normalization && std::abs(lambda.lpNorm<1>() - 1.0) > 1e-9) {
    throw std::invalid_argument("dualize: lambda must have unit l1 norm");
  }
  const Vector g = dual.g(lambda);
  lp::LinearProgram prog(dual.rows());
  for (std::size_t r = 0; r < dual.rows(); ++r) prog.set_bounds(r, 0.0, lp::kInfinity);
  prog.set_objective(rhs_vector(dual));
  prog.set_sense(lp::Sense::kMinimize);
  const auto cols = transpose(dual);
  for (std::size_t c = 0; c < dual.cols; ++c) {
    prog.add_row(cols[c], lp::Relation::kEqual, g(static_cast<Eigen::Index>(c)));
  }
  return prog;
}

lp::LinearProgram inner_max_program(const DualSystem& dual, const Vector& lambda) {
  const Vector g = dual.g(lambda);
  lp::LinearProgram prog(dual.cols);
  for (std::size_t r = 0; r < dual.rows(); ++r) {
    prog.add_row(dual.m_rows[r], lp::Relation::kLessEqual, dual.rhs(static_cast<Eigen::Index>(r)));
  }
  prog.set_objective(std::vector<double>(g.data(), g.data() + g.size()));
  prog.set_sense(lp::Sense::kMaximize);
  return prog;
}

namespace {

DirectionValue evaluate_direction(const DualSystem& dual, const Vector& lambda, const lp::SolverBackend& backend) {
  DirectionValue d;
  d.lambda = lambda;
  const auto sol = lp::solve_lp(backend, dualize(dual, lambda));
  d.status = sol.status;
  switch (sol.status) {
    case lp::LpStatus::kOptimal: d.value = sol.objective_value; break;
    case lp::LpStatus::kInfeasible: d.value = kInf; break;     // inner max unbounded along lambda
    case lp::LpStatus::kUnbounded: d.value = -kInf; break;     // inner relaxation empty
    case lp::LpStatus::kIterationLimit: d.value = kInf; break;  // no usable bound from this direction
  }
  return d;
}

void solve_vertex(const DualSystem& dual, const OuterOptions& options, OuterResult& out) {
  std::vector<Vector> dirs;
  for (std::size_t i = 0; i < dual.n; ++i) {
    if (!dual.active[i]) continue;
    for (const double s : {1.0, -1.0}) {
      Vector l = Vector::Zero(static_cast<Eigen::Index>(dual.n));
      l(static_cast<Eigen::Index>(i)) = s;
      dirs.push_back(std::move(l));
    }
  }
  const auto& backend = backend_of(options);
  out.directions = detail::parallel_map<DirectionValue>(
      dirs.size(), options.parallel, [&](std::size_t k) { return evaluate_direction(dual, dirs[k], backend); });
  out.variables = dual.rows();
  out.constraints = dual.cols;

  double best = kInf;
  for (const auto& d : out.directions) {
    if (d.status == lp::LpStatus::kUnbounded) {
      out.diagnostic = "inner relaxation is empty (dual unbounded); polytope infeasible";
    }
    if (d.value < best) {
      best = d.value;
      out.lambda_argmin = d.lambda;
    }
  }
  if (std::isfinite(best)) out.z = best;
  else if (out.diagnostic.empty()) out.diagnostic = "relaxation unbounded in every direction; no finite upper bound";
}

void solve_complementarity(const DualSystem& dual, const OuterOptions& options, OuterResult& out) {
  std::vector<std::size_t> act;
  for (std::size_t i = 0; i < dual.n; ++i)
    if (dual.active[i]) act.push_back(i);
  const std::size_t ny = dual.rows();
  const std::size_t k = act.size();

  lp::LinearProgram prog(ny);
  for (std::size_t r = 0; r < ny; ++r) prog.set_bounds(r, 0.0, lp::kInfinity);
  std::vector<std::size_t> plus(k), minus(k), sign(k);
  for (std::size_t a = 0; a < k; ++a) {
    const std::string id = std::to_string(act[a] + 1);
    plus[a] = prog.add_variable(0.0, 1.0, lp::VarKind::kContinuous, "lp" + id);
    minus[a] = prog.add_variable(0.0, 1.0, lp::VarKind::kContinuous, "lm" + id);
    sign[a] = prog.add_variable(0.0, 1.0, lp::VarKind::kBinary, "s" + id);
  }
  std::vector<double> cost(prog.num_vars(), 0.0);
  for (std::size_t r = 0; r < ny; ++r) cost[r] = dual.rhs(static_cast<Eigen::Index>(r));
  prog.set_objective(std::move(cost));
  prog.set_sense(lp::Sense::kMinimize);

  // M^T y - G (lambda+ - lambda-) = 0
  auto cols = transpose(dual);
  for (std::size_t c = 0; c < dual.cols; ++c) {
    lp::SparseVector row = std::move(cols[c]);
    for (std::size_t a = 0; a < k; ++a) {
      const double gv = dual.g_basis(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(act[a]));
      if (gv == 0.0) continue;
      row.push_back({plus[a], -gv});
      row.push_back({minus[a], gv});
    }
    prog.add_row(std::move(row), lp::Relation::kEqual, 0.0);
  }
  lp::SparseVector norm;
  for (std::size_t a = 0; a < k; ++a) {
    prog.add_row({{plus[a], 1.0}, {sign[a], -1.0}}, lp::Relation::kLessEqual, 0.0);
    prog.add_row({{minus[a], 1.0}, {sign[a], 1.0}}, lp::Relation::kLessEqual, 1.0);
    norm.push_back({plus[a], 1.0});
    norm.push_back({minus[a], 1.0});
  }
  prog.add_row(std::move(norm), lp::Relation::kEqual, 1.0);
  out.variables = prog.num_vars();
  out.constraints = prog.rows().size();

  lp::BnbOptions bnb;
  bnb.max_nodes = options.max_nodes;
  const auto res = lp::solve_binary_bnb(backend_of(options), prog, bnb);
  out.nodes = res.nodes;
  const auto& sol = res.solution;
  if (sol.status == lp::LpStatus::kOptimal) {
    out.z = sol.objective_value;
    out.lambda_argmin = Vector::Zero(static_cast<Eigen::Index>(dual.n));
    for (std::size_t a = 0; a < k; ++a) {
      out.lambda_argmin(static_cast<Eigen::Index>(act[a])) = sol.point[plus[a]] - sol.point[minus[a]];
    }
  } else if (sol.status == lp::LpStatus::kInfeasible) {
    out.diagnostic = "relaxation unbounded in every direction; no finite upper bound";
  } else if (sol.status == lp::LpStatus::kUnbounded) {
    out.diagnostic = "inner relaxation is empty (dual unbounded); polytope infeasible";
  } else {
    out.diagnostic = std::string("complementarity MIP ") + lp::to_string(sol.status) +
                     (sol.message.empty() ? "" : ": " + sol.message);
  }
}

}  // namespace

OuterResult solve_outer(const QuadraticSystem& sys, const Polytope& poly, OuterMode mode,
                        const OuterOptions& options) {
  const auto t0 = Clock::now();
  OuterResult out;
  out.mode = mode;
  const auto active = sys.active_mask();
  if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
    out.diagnostic = "no active uncertainty dimension; margin undefined";
    return out;
  }
  const DualSystem dual = build_inner_max(sys, poly);
  if (mode == OuterMode::kVertex) solve_vertex(dual, options, out);
  else solve_complementarity(dual, options, out);
  out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

double margin_upper(const QuadraticSystem& sys, const Polytope& poly, OuterMode mode, const OuterOptions& options) {
  const auto r = solve_outer(sys, poly, mode, options);
  return r.z ? *r.z : kInf;
}

nlohmann::json to_json(const OuterResult& r) {
  nlohmann::json j;
  j["mode"] = to_string(r.mode);
  if (r.z) j["upper"] = *r.z;
  else j["upper"] = "unbounded";
  if (r.lambda_argmin.size() > 0) j["lambda_argmin"] = qmargin::to_json(r.lambda_argmin);
  j["variables"] = r.variables;
  j["constraints"] = r.constraints;
  j["seconds"] = r.seconds;
  if (r.mode == OuterMode::kSignComplementarity) j["nodes"] = r.nodes;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  if (!r.directions.empty()) {
    auto& dirs = j["directions"] = nlohmann::json::array();
    for (const auto& d : r.directions) {
      nlohmann::json x{{"lambda", qmargin::to_json(d.lambda)}, {"status", lp::to_string(d.status)}};
      if (std::isfinite(d.value)) x["value"] = d.value;
      else x["value"] = d.value > 0 ? "inf" : "-inf";
      dirs.push_back(std::move(x));
    }
  }
  return j;
}

}  // namespace qmargin::upper
