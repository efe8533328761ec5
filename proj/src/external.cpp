#include "qmargin/external.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "json.hpp"

#ifndef QMARGIN_TOOLS_DIR
#define QMARGIN_TOOLS_DIR "tools"
#endif

namespace qmargin::lp {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string bound(double v) {
  if (v == kInfinity) return "+inf";
  if (v == -kInfinity) return "-inf";
  return num(v);
}

void write_terms(std::ostream& out, const SparseVector& terms, const LinearProgram& lp) {
  if (terms.empty()) {
    out << " 0 " << lp.name(0);
    return;
  }
  std::size_t k = 0;
  for (const auto& c : terms) {
    if (k++ % 8 == 0 && k > 1) out << "\n   ";
    out << (c.value < 0 ? " - " : " + ") << num(std::abs(c.value)) << ' ' << lp.name(c.column);
  }
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string env_or(const char* var, const std::string& fallback) {
  const char* v = std::getenv(var);
  return v && *v ? v : fallback;
}

}  // namespace

void write_lp_format(const LinearProgram& lp, std::ostream& out) {
  if (lp.num_vars() == 0) throw std::invalid_argument("cannot export a program without columns");
  out << "\\ qmargin export: " << lp.num_vars() << " columns, " << lp.rows().size() << " rows\n";
  out << (lp.sense() == Sense::kMaximize ? "Maximize\n" : "Minimize\n");
  out << " obj:";
  write_terms(out, from_dense(lp.objective()), lp);
  out << "\nSubject To\n";
  std::size_t r = 0;
  for (const auto& row : lp.rows()) {
    out << " r" << ++r << ':';
    write_terms(out, row.coeffs, lp);
    out << ' ' << (row.relation == Relation::kLessEqual ? "<=" : row.relation == Relation::kEqual ? "=" : ">=")
        << ' ' << num(row.rhs) << '\n';
  }
  out << "Bounds\n";
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (lp.lower(j) == -kInfinity && lp.upper(j) == kInfinity) out << ' ' << lp.name(j) << " free\n";
    else out << ' ' << bound(lp.lower(j)) << " <= " << lp.name(j) << " <= " << bound(lp.upper(j)) << '\n';
  }
  bool header = false;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (lp.kind(j) != VarKind::kBinary) continue;
    if (!header) out << "Binary\n";
    header = true;
    out << ' ' << lp.name(j) << '\n';
  }
  out << "End\n";
}

void write_lp_file(const LinearProgram& lp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_lp_format(lp, out);
}

ExternalBackend::ExternalBackend(std::string script, std::string python)
    : script_(script.empty() ? env_or("QMARGIN_HIGHS_SCRIPT", QMARGIN_TOOLS_DIR "/highs_solve.py") : std::move(script)),
      python_(python.empty() ? env_or("QMARGIN_PYTHON", "python3") : std::move(python)) {}

bool ExternalBackend::available() const {
  const std::string cmd = shell_quote(python_) + ' ' + shell_quote(script_) + " --check >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

LpSolution ExternalBackend::solve(const LinearProgram& lp) const {
  static std::atomic<unsigned long> counter{0};
  const auto dir = std::filesystem::temp_directory_path();
  const std::string stem = "qmargin-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const auto in = (dir / (stem + ".lp")).string();
  const auto out = (dir / (stem + ".json")).string();

  // Column names must be unique for the round trip.
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (!column.emplace(lp.name(j), j).second) {
      throw std::invalid_argument("duplicate column name " + lp.name(j));
    }
  }

  write_lp_file(lp, in);
  const std::string cmd = shell_quote(python_) + ' ' + shell_quote(script_) + ' ' + shell_quote(in) + ' ' +
                          shell_quote(out);
  const int rc = std::system(cmd.c_str());
  std::filesystem::remove(in);
  if (rc != 0) {
    std::filesystem::remove(out);
    throw std::runtime_error("external solver failed (exit " + std::to_string(rc) + "): " + cmd);
  }
  nlohmann::json j;
  {
    std::ifstream f(out);
    if (!f) throw std::runtime_error("external solver wrote no result");
    f >> j;
  }
  std::filesystem::remove(out);

  LpSolution sol;
  const std::string status = j.value("status", "error");
  if (status == "optimal") {
    sol.status = LpStatus::kOptimal;
    sol.point.assign(lp.num_vars(), 0.0);
    for (const auto& [name, value] : j.at("values").items()) {
      const auto it = column.find(name);
      if (it != column.end()) sol.point[it->second] = value.get<double>();
    }
    double obj = 0.0;
    for (std::size_t k = 0; k < lp.num_vars(); ++k) obj += lp.objective()[k] * sol.point[k];
    sol.objective_value = obj;
  } else if (status == "infeasible") {
    sol.status = LpStatus::kInfeasible;
  } else if (status == "unbounded") {
    sol.status = LpStatus::kUnbounded;
  } else if (status == "iteration-limit") {
    sol.status = LpStatus::kIterationLimit;
  } else {
    throw std::runtime_error("external solver error: " + j.value("message", status));
  }
  return sol;
}

ExportingBackend::ExportingBackend(const SolverBackend& inner, std::string dir)
    : inner_(inner), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

LpSolution ExportingBackend::solve(const LinearProgram& lp) const {
  char name[32];
  std::snprintf(name, sizeof name, "lp_%06zu.lp", ++count_);
  write_lp_file(lp, (std::filesystem::path(dir_) / name).string());
  return inner_.solve(lp);
}

}  // namespace qmargin::lp
