#include "qmargin/report.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qmargin/simplex.hpp"

namespace qmargin::report {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const lp::SolverBackend& backend_or_builtin(const lp::SolverBackend* backend) {
  static const lp::SimplexBackend builtin;
  return backend ? *backend : builtin;
}

BoundsConfig with_backend(BoundsConfig cfg) {
  if (cfg.backend) {
    cfg.lower.backend = cfg.backend;
    cfg.outer.backend = cfg.backend;
  }
  return cfg;
}

nlohmann::json degree_json(const DegreePrecondition& d, const std::string& start) {
  nlohmann::json j;
  j["start"] = start;
  j["converged"] = d.newton.converged;
  j["iterations"] = d.newton.iterations;
  j["residual"] = d.newton.residual;
  j["sign"] = d.newton.sign;
  j["jacobian_det"] = d.newton.jacobian_det;
  j["interior"] = d.interior;
  j["interior_slack"] = d.interior_slack;
  j["passed"] = d.passed;
  j["uniqueness_unverified"] = d.uniqueness_unverified;
  if (d.newton.solution.size() > 0 && d.newton.solution.allFinite()) {
    j["solution"] = qmargin::to_json(d.newton.solution);
  }
  if (!d.reason.empty()) j["reason"] = d.reason;
  return j;
}

std::string format_number(double v, int precision) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Shortest text that reads back to the same double.
std::string round_trip(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_seconds(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

}  // namespace

MarginReport run_bounds(const SystemFile& file, const BoundsConfig& config_in) {
  const auto t_total = Clock::now();
  const BoundsConfig cfg = with_backend(config_in);
  const auto& backend = backend_or_builtin(cfg.backend);
  const auto& sys = file.system;
  const auto& poly = file.polytope;

  MarginReport r;
  r.config = cfg;
  r.system = file.name;
  r.n = sys.dimension();
  r.m = poly.rows();
  r.backend = backend.name();

  auto t0 = Clock::now();
  r.violations = validate(sys, poly, backend);
  r.seconds_validate = elapsed(t0);

  if (r.violations.empty()) {
    t0 = Clock::now();
    Vector x0;
    if (file.x0) {
      x0 = *file.x0;
      r.start = "x0";
    } else {
      r.start = "chebyshev";
      try {
        x0 = chebyshev_center(poly, backend);
      } catch (const std::runtime_error& e) {
        r.lower_suppressed = std::string("no start point: ") + e.what();
      }
    }
    if (r.lower_suppressed.empty()) {
      r.degree = check_degree_precondition(sys, poly, x0);
      if (!r.degree->passed) r.lower_suppressed = "degree precondition unmet: " + r.degree->reason;
    }
    r.seconds_degree = elapsed(t0);
  } else {
    std::string why = "model invalid:";
    for (const auto& v : r.violations) why += " " + v.invariant + ";";
    why.pop_back();
    r.lower_suppressed = why;
  }

  r.upper = upper::solve_outer(sys, poly, cfg.mode, cfg.outer);

  if (r.lower_suppressed.empty()) {
    const double hint = r.upper.z && *r.upper.z > 0.0 ? *r.upper.z : 1.0;
    for (auto p : cfg.procedures) {
      ProcedureRun run;
      run.search = lower::margin_search_lower(sys, poly, p, hint, cfg.lower, cfg.search);
      run.size = lower::problem_size(p, r.n, r.m);
      r.lowers.push_back(std::move(run));
    }
  }

  if (r.degree && r.degree->passed) {
    r.caveats.push_back("uniqueness of the interior forecast solution is not verified");
  }
  if (!r.lower_suppressed.empty()) r.caveats.push_back(r.lower_suppressed);
  if (!r.upper.z) r.caveats.push_back("no finite upper bound");
  else if (*r.upper.z < 0.0) r.caveats.push_back("negative upper bound: the forecast is outside the relaxed image");
  for (const auto& run : r.lowers) {
    const char* name = lower::to_string(run.search.procedure);
    if (run.search.non_monotone) {
      r.caveats.push_back(std::string(name) + ": certificates not monotone in r");
    }
    if (r.upper.z && run.search.lower > *r.upper.z) {
      r.caveats.push_back(std::string(name) + ": lower bound above upper bound");
    }
  }
  r.seconds_total = elapsed(t_total);
  return r;
}

nlohmann::json to_json(const MarginReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["system"] = r.system;
  j["n"] = r.n;
  j["m"] = r.m;
  j["backend"] = r.backend;
  j["tolerances"] = {{"cert_tol", r.config.lower.cert_tol},
                     {"tighten_tol", r.config.lower.tighten_tol},
                     {"tighten_cap", r.config.lower.tighten_cap},
                     {"bisect_tol", r.config.search.bisect_tol},
                     {"split_degenerate", r.config.lower.assemble.split_degenerate}};
  auto& viol = j["violations"] = nlohmann::json::array();
  for (const auto& v : r.violations) viol.push_back({{"invariant", v.invariant}, {"detail", v.detail}});
  if (r.degree) j["degree"] = degree_json(*r.degree, r.start);
  else j["degree"] = nullptr;

  auto& lowers = j["lowers"] = nlohmann::json::array();
  for (const auto& run : r.lowers) {
    auto x = lower::to_json(run.search);
    x["variables"] = run.size.variables;
    x["constraints"] = run.size.constraints;
    lowers.push_back(std::move(x));
  }
  if (!r.lower_suppressed.empty()) j["lower_suppressed"] = r.lower_suppressed;
  j["upper"] = upper::to_json(r.upper);
  j["caveats"] = r.caveats;
  j["seconds"] = {{"validate", r.seconds_validate},
                  {"degree", r.seconds_degree},
                  {"upper", r.upper.seconds},
                  {"total", r.seconds_total}};
  return j;
}

std::string render_table(const std::vector<nlohmann::json>& reports) {
  using Row = std::vector<std::string>;
  std::vector<Row> rows{{"system", "procedure", "bound", "value", "seconds", "Var#", "Cons#"}};
  for (const auto& rep : reports) {
    if (!rep.is_object() || !rep.contains("schema_version")) {
      throw std::runtime_error("report has no schema_version");
    }
    const int version = rep.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw std::runtime_error("report schema_version " + std::to_string(version) + ", expected " +
                               std::to_string(kReportSchemaVersion));
    }
    const auto name = rep.value("system", std::string("?"));
    for (const auto& l : rep.at("lowers")) {
      rows.push_back({name, l.at("procedure").get<std::string>(), "lower",
                      format_number(l.at("lower").get<double>(), 7),
                      format_seconds(l.at("seconds").get<double>()),
                      std::to_string(l.at("variables").get<std::size_t>()),
                      std::to_string(l.at("constraints").get<std::size_t>())});
    }
    if (rep.contains("lower_suppressed")) {
      rows.push_back({name, "(lower)", "lower", "suppressed", "", "", ""});
    }
    const auto& up = rep.at("upper");
    const auto& z = up.at("upper");
    rows.push_back({name, "outer-" + up.at("mode").get<std::string>(), "upper",
                    z.is_number() ? format_number(z.get<double>(), 7) : z.get<std::string>(),
                    format_seconds(up.at("seconds").get<double>()),
                    std::to_string(up.at("variables").get<std::size_t>()),
                    std::to_string(up.at("constraints").get<std::size_t>())});
  }

  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < rows[k].size(); ++c) {
      const bool numeric = c >= 3;
      if (c > 0) out << "  ";
      if (numeric) out << std::setw(static_cast<int>(width[c])) << std::right << rows[k][c];
      else out << std::setw(static_cast<int>(width[c])) << std::left << rows[k][c];
    }
    out << '\n';
    if (k == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

namespace {

struct SweepCase {
  std::optional<SystemFile> file;
  std::string error;
  Vector x0;
  std::optional<double> upper;
  double upper_seconds = 0.0;
  std::string upper_error;
};

// Runs task(0..count-1) on at most `jobs` threads.
template <class Task>
void run_pool(std::size_t count, std::size_t jobs, Task&& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : workers) t.join();
}

double grid_lower(const SystemFile& f, lower::Procedure p, const std::vector<double>& grid,
                  const lower::LowerOptions& options) {
  std::vector<double> radii = grid;
  std::sort(radii.begin(), radii.end());
  double best = 0.0;
  for (double r : radii) {
    if (!lower::certify(p, f.system, f.polytope, r, options).certified) break;
    best = r;
  }
  return best;
}

}  // namespace

std::vector<SweepRow> run_sweep(const matpower::MatpowerCase& mpc, const SweepConfig& config) {
  const BoundsConfig cfg = with_backend(config.bounds_config);
  const std::size_t nb = config.bounds.size();
  std::vector<SweepCase> cases(nb);

  run_pool(nb, config.jobs, [&](std::size_t k) {
    auto& c = cases[k];
    const auto t0 = Clock::now();
    try {
      auto conv = matpower::convert_case(mpc, config.bounds[k], config.mask, config.center);
      c.x0 = conv.forecast.converged ? conv.forecast.solution : conv.conversion.flat_start;
      const auto pre = check_degree_precondition(conv.file.system, conv.file.polytope, c.x0);
      if (!pre.passed) c.error = "degree precondition unmet: " + pre.reason;
      c.file = std::move(conv.file);
    } catch (const std::exception& e) {
      c.error = e.what();
      return;
    }
    try {
      const auto up = upper::solve_outer(c.file->system, c.file->polytope, cfg.mode, cfg.outer);
      c.upper = up.z;
      if (!up.z) c.upper_error = "no finite upper bound";
    } catch (const std::exception& e) {
      c.upper_error = e.what();
    }
    c.upper_seconds = elapsed(t0);
  });

  const std::size_t np = cfg.procedures.size();
  std::vector<SweepRow> rows(nb * (np + 1));
  for (std::size_t k = 0; k < nb; ++k) {
    auto& row = rows[k * (np + 1)];
    row.procedure = std::string("outer-") + upper::to_string(cfg.mode);
    row.bound_type = "upper";
    row.value = cases[k].upper;
    row.seconds = cases[k].upper_seconds;
    row.error = cases[k].file ? cases[k].upper_error : cases[k].error;
    for (std::size_t p = 0; p < np; ++p) {
      auto& lr = rows[k * (np + 1) + 1 + p];
      lr.procedure = lower::to_string(cfg.procedures[p]);
      lr.bound_type = "lower";
    }
    for (std::size_t i = 0; i <= np; ++i) {
      rows[k * (np + 1) + i].case_name = mpc.name;
      rows[k * (np + 1) + i].bound = config.bounds[k];
    }
  }

  run_pool(nb * np, config.jobs, [&](std::size_t cell) {
    const std::size_t k = cell / np;
    const auto p = cfg.procedures[cell % np];
    auto& row = rows[k * (np + 1) + 1 + cell % np];
    const auto& c = cases[k];
    if (!c.file || !c.error.empty()) {
      row.error = c.error;
      return;
    }
    const auto t0 = Clock::now();
    try {
      if (config.r_grid.empty()) {
        const double hint = c.upper && *c.upper > 0.0 ? *c.upper : 1.0;
        const auto s = lower::margin_search_lower(c.file->system, c.file->polytope, p, hint, cfg.lower, cfg.search);
        row.value = s.lower;
        if (s.non_monotone) row.error = "certificates not monotone in r";
      } else {
        row.value = grid_lower(*c.file, p, config.r_grid, cfg.lower);
      }
    } catch (const std::exception& e) {
      row.value.reset();
      row.error = e.what();
    }
    row.seconds = elapsed(t0);
  });
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

void write_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "case,B,procedure,bound_type,value,seconds,error\r\n";
  for (const auto& r : rows) {
    out << csv_field(r.case_name) << ',' << round_trip(r.bound) << ',' << csv_field(r.procedure) << ','
        << r.bound_type << ',';
    if (r.value) out << round_trip(*r.value);
    out << ',' << format_seconds(r.seconds) << ',' << csv_field(r.error) << "\r\n";
  }
}

std::vector<std::string> sweep_anomalies(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<std::pair<double, double>>> by_procedure;
  for (const auto& r : rows) {
    if (r.bound_type == "lower" && r.value) by_procedure[r.procedure].emplace_back(r.bound, *r.value);
  }
  std::vector<std::string> out;
  for (auto& [name, points] : by_procedure) {
    std::sort(points.begin(), points.end());
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].second < points[i - 1].second) {
        out.push_back(name + ": lower bound " + format_number(points[i].second, 7) + " at B=" +
                      format_number(points[i].first, 7) + " is below " + format_number(points[i - 1].second, 7) +
                      " at B=" + format_number(points[i - 1].first, 7));
      }
    }
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot write " + path + ": " + ec.message());
  }
}

}  // namespace qmargin::report
