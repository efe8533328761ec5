#include "qmargin/lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace qmargin::lp {

const char* to_string(Relation r) {
  switch (r) {
    case Relation::kLessEqual: return "<=";
    case Relation::kEqual: return "=";
    case Relation::kGreaterEqual: return ">=";
  }
  return "?";
}

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kIterationLimit: return "iteration-limit";
  }
  return "unknown";
}

double dot(const SparseVector& v, std::span<const double> x) {
  double s = 0.0;
  for (const auto& c : v) s += c.value * x[c.column];
  return s;
}

std::vector<double> to_dense(const SparseVector& v, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (const auto& c : v) out.at(c.column) += c.value;
  return out;
}

SparseVector from_dense(std::span<const double> v, double drop_tol) {
  SparseVector out;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (std::abs(v[j]) > drop_tol) out.push_back({j, v[j]});
  }
  return out;
}

LinearProgram::LinearProgram(std::size_t num_vars)
    : objective_(num_vars, 0.0),
      lower_(num_vars, -kInfinity),
      upper_(num_vars, kInfinity),
      kind_(num_vars, VarKind::kContinuous),
      names_(num_vars) {}

std::size_t LinearProgram::add_variable(double lower, double upper, VarKind kind,
                                        std::string name) {
  objective_.push_back(0.0);
  lower_.push_back(lower);
  upper_.push_back(upper);
  kind_.push_back(kind);
  names_.push_back(std::move(name));
  return objective_.size() - 1;
}

void LinearProgram::add_row(Row row) { rows_.push_back(std::move(row)); }

void LinearProgram::add_row(SparseVector coeffs, Relation rel, double rhs) {
  rows_.push_back(Row{std::move(coeffs), rel, rhs});
}

void LinearProgram::set_objective(std::vector<double> c) {
  if (c.size() != objective_.size()) {
    throw std::invalid_argument("objective size does not match variable count");
  }
  objective_ = std::move(c);
}

void LinearProgram::set_bounds(std::size_t j, double lower, double upper) {
  lower_.at(j) = lower;
  upper_.at(j) = upper;
}

void LinearProgram::set_kind(std::size_t j, VarKind k) {
  kind_.at(j) = k;
  if (k == VarKind::kBinary) {
    lower_[j] = std::max(lower_[j], 0.0);
    upper_[j] = std::min(upper_[j], 1.0);
  }
}

bool LinearProgram::has_binaries() const {
  return std::any_of(kind_.begin(), kind_.end(),
                     [](VarKind k) { return k == VarKind::kBinary; });
}

std::string LinearProgram::name(std::size_t j) const {
  if (j < names_.size() && !names_[j].empty()) return names_[j];
  return "c" + std::to_string(j);
}

void LinearProgram::check_valid() const {
  const std::size_t n = num_vars();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    for (const auto& c : rows_[i].coeffs) {
      if (c.column >= n) {
        throw std::invalid_argument("row " + std::to_string(i) +
                                    " references column out of range");
      }
      if (!std::isfinite(c.value)) {
        throw std::invalid_argument("row " + std::to_string(i) + " has a non-finite coefficient");
      }
    }
    if (!std::isfinite(rows_[i].rhs)) {
      throw std::invalid_argument("row " + std::to_string(i) + " has a non-finite rhs");
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (lower_[j] > upper_[j]) {
      throw std::invalid_argument("bounds cross on column " + name(j));
    }
    if (kind_[j] == VarKind::kBinary && (lower_[j] < 0.0 || upper_[j] > 1.0)) {
      throw std::invalid_argument("binary column " + name(j) + " must lie in [0,1]");
    }
  }
}

double check_solution(const LinearProgram& lp, std::span<const double> point) {
  if (point.size() != lp.num_vars()) {
    throw std::invalid_argument("point size does not match variable count");
  }
  for (double v : point) {
    if (!std::isfinite(v)) return kInfinity;
  }
  double worst = 0.0;
  for (const auto& row : lp.rows()) {
    const double lhs = dot(row.coeffs, point);
    double v = 0.0;
    switch (row.relation) {
      case Relation::kLessEqual: v = lhs - row.rhs; break;
      case Relation::kGreaterEqual: v = row.rhs - lhs; break;
      case Relation::kEqual: v = std::abs(lhs - row.rhs); break;
    }
    worst = std::max(worst, v);
  }
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    worst = std::max(worst, lp.lower(j) - point[j]);
    worst = std::max(worst, point[j] - lp.upper(j));
  }
  return worst;
}

LpSolution solve_lp(const SolverBackend& backend, const LinearProgram& lp) {
  if (lp.has_binaries()) {
    throw std::invalid_argument("solve_lp called on a program with binary variables");
  }
  lp.check_valid();
  return backend.solve(lp);
}

namespace {

struct Node {
  std::vector<std::pair<std::size_t, double>> fixings;  // binary column -> 0/1
};

bool better(Sense sense, double a, double b) {
  return sense == Sense::kMaximize ? a > b : a < b;
}

}  // namespace

BnbResult solve_binary_bnb(const SolverBackend& backend, const LinearProgram& lp,
                           const BnbOptions& options) {
  lp.check_valid();
  std::vector<std::size_t> binaries;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (lp.kind(j) == VarKind::kBinary) binaries.push_back(j);
  }

  LinearProgram relaxed = lp;
  for (std::size_t j : binaries) relaxed.set_kind(j, VarKind::kContinuous);

  BnbResult result;
  std::optional<LpSolution> incumbent;
  bool saw_limit = false;
  bool saw_unbounded = false;

  std::vector<Node> stack;
  stack.push_back(Node{});
  while (!stack.empty()) {
    if (result.nodes >= options.max_nodes) {
      saw_limit = true;
      break;
    }
    Node node = std::move(stack.back());
    stack.pop_back();
    ++result.nodes;

    LinearProgram sub = relaxed;
    for (const auto& [j, v] : node.fixings) sub.set_bounds(j, v, v);
    LpSolution sol = backend.solve(sub);

    if (sol.status == LpStatus::kInfeasible) continue;
    if (sol.status == LpStatus::kIterationLimit) {
      saw_limit = true;
      continue;
    }
    if (sol.status == LpStatus::kUnbounded) {
      saw_unbounded = true;
      break;
    }
    if (incumbent) {
      const double slack = kOptTol * (1.0 + std::abs(incumbent->objective_value));
      const double bound = lp.sense() == Sense::kMaximize ? sol.objective_value - slack
                                                          : sol.objective_value + slack;
      if (!better(lp.sense(), bound, incumbent->objective_value)) continue;
    }

    // Most fractional binary.
    std::size_t branch_col = lp.num_vars();
    double best_frac = options.integrality_tol;
    for (std::size_t j : binaries) {
      const double v = sol.point[j];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best_frac) {
        best_frac = frac;
        branch_col = j;
      }
    }

    if (branch_col == lp.num_vars()) {
      for (std::size_t j : binaries) sol.point[j] = std::round(sol.point[j]);
      if (!incumbent || better(lp.sense(), sol.objective_value, incumbent->objective_value)) {
        incumbent = std::move(sol);
      }
      if (options.stop_at && !better(lp.sense(), *options.stop_at, incumbent->objective_value)) {
        result.stopped_early = true;
        break;
      }
      continue;
    }

    Node down = node;
    down.fixings.emplace_back(branch_col, 0.0);
    Node up = std::move(node);
    up.fixings.emplace_back(branch_col, 1.0);
    stack.push_back(std::move(down));
    stack.push_back(std::move(up));  // explored first
  }

  if (saw_unbounded) {
    result.solution.status = LpStatus::kUnbounded;
    result.solution.message = "LP relaxation unbounded";
  } else if (incumbent) {
    result.solution = std::move(*incumbent);
    if (saw_limit && !result.stopped_early) {
      result.solution.message = "node or iteration limit hit; incumbent may be suboptimal";
      result.solution.status = LpStatus::kIterationLimit;
    }
  } else if (saw_limit) {
    result.solution.status = LpStatus::kIterationLimit;
    result.solution.message = "node or iteration limit hit before any integral solution";
  } else {
    result.solution.status = LpStatus::kInfeasible;
  }
  return result;
}

}  // namespace qmargin::lp
