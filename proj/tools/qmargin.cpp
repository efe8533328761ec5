#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qmargin/external.hpp"
#include "qmargin/matpower.hpp"
#include "qmargin/report.hpp"
#include "qmargin/simplex.hpp"
#include "qmargin/system_io.hpp"

namespace {

using namespace qmargin;

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

// Usage and IO problems: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw UsageError("cannot read " + path);
}

void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << content;
    return;
  }
  try {
    report::write_file_atomic(out_path, content);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
}

std::vector<lower::Procedure> parse_procedures(const std::vector<std::string>& names) {
  std::vector<lower::Procedure> out;
  for (const auto& s : names) {
    if (s == "all") {
      out = {lower::Procedure::kFeasibility, lower::Procedure::kMip, lower::Procedure::kTightening};
      continue;
    }
    const auto p = lower::parse_procedure(s);
    if (!p) throw UsageError("unknown procedure '" + s + "'");
    if (std::find(out.begin(), out.end(), *p) == out.end()) out.push_back(*p);
  }
  return out;
}

// 1-based on the command line.
std::vector<std::size_t> parse_mask(const std::vector<std::size_t>& one_based) {
  std::vector<std::size_t> out;
  for (auto i : one_based) {
    if (i == 0) throw UsageError("--mask entries are 1-based");
    out.push_back(i - 1);
  }
  return out;
}

matpower::Center parse_center(const std::string& s) {
  if (s == "forecast") return matpower::Center::kForecast;
  if (s == "none") return matpower::Center::kNone;
  throw UsageError("unknown --center '" + s + "'");
}

matpower::MatpowerCase read_case(const std::string& path) {
  require_file(path);
  try {
    return matpower::load_case(path);
  } catch (const matpower::ParseError& e) {
    throw UsageError(e.what());
  }
}

// Options shared by bounds and sweep.
struct SolveFlags {
  std::vector<std::string> procedures{"all"};
  std::string outer_mode = "vertex";
  double bisect_tol = lower::kBisectTol;
  double tighten_tol = lower::kTightenTol;
  std::string backend = "builtin";
  std::string export_dir;
  bool split_degenerate = false;
  bool serial = false;

  void add_to(CLI::App& app) {
    app.add_option("--procedure", procedures, "feasibility, mip, tightening or all (repeatable)")
        ->delimiter(',');
    app.add_option("--outer-mode", outer_mode, "vertex or mip")->capture_default_str();
    app.add_option("--bisect-tol", bisect_tol, "bisection tolerance on r")->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--tighten-tol", tighten_tol, "bound tightening convergence tolerance")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--backend", backend, "builtin or external")->capture_default_str();
    app.add_option("--export-lp", export_dir, "write every LP solved to this directory (forces serial)");
    app.add_flag("--split-degenerate", split_degenerate, "two inequalities per zero-width box dimension");
    app.add_flag("--serial", serial, "run the serial kernels");
  }
};

// Owns the backends a configuration points into.
struct Backends {
  lp::SimplexBackend builtin;
  std::unique_ptr<lp::ExternalBackend> external;
  std::unique_ptr<lp::ExportingBackend> exporting;
};

report::BoundsConfig make_config(const SolveFlags& f, Backends& backends) {
  report::BoundsConfig cfg;
  cfg.procedures = parse_procedures(f.procedures);
  const auto mode = upper::parse_outer_mode(f.outer_mode);
  if (!mode) throw UsageError("unknown --outer-mode '" + f.outer_mode + "'");
  cfg.mode = *mode;
  cfg.search.bisect_tol = f.bisect_tol;
  cfg.lower.tighten_tol = f.tighten_tol;
  cfg.lower.assemble.split_degenerate = f.split_degenerate;

  const lp::SolverBackend* chosen = &backends.builtin;
  if (f.backend == "external") {
    backends.external = std::make_unique<lp::ExternalBackend>();
    if (!backends.external->available()) throw UsageError("external backend unavailable (python or highspy missing)");
    chosen = backends.external.get();
  } else if (f.backend != "builtin") {
    throw UsageError("unknown --backend '" + f.backend + "'");
  }
  bool serial = f.serial;
  if (!f.export_dir.empty()) {
    backends.exporting = std::make_unique<lp::ExportingBackend>(*chosen, f.export_dir);
    chosen = backends.exporting.get();
    serial = true;
  }
  cfg.backend = chosen;
  cfg.lower.parallel = !serial;
  cfg.outer.parallel = !serial;
  return cfg;
}

int cmd_convert(const std::string& case_path, double bound, const std::vector<std::size_t>& mask,
                const std::string& center, const std::string& out_path) {
  const auto mpc = read_case(case_path);
  const auto conv = matpower::convert_case(mpc, bound, parse_mask(mask), parse_center(center));
  emit(system_to_json(conv.file).dump(2) + "\n", out_path);
  return 0;
}

int cmd_bounds(const std::string& system_path, SolveFlags& flags, const std::string& out_path) {
  require_file(system_path);
  SystemFile file;
  try {
    file = load_system(system_path);
  } catch (const std::exception& e) {
    throw UsageError(system_path + ": " + e.what());
  }
  Backends backends;
  const auto cfg = make_config(flags, backends);
  const auto rep = report::run_bounds(file, cfg);
  emit(report::to_json(rep).dump(2) + "\n", out_path);
  for (const auto& c : rep.caveats) std::cerr << "note: " << c << '\n';
  return 0;
}

int cmd_sweep(const std::string& case_path, const std::vector<double>& bounds, const std::vector<double>& r_grid,
              const std::vector<std::size_t>& mask, const std::string& center, std::size_t jobs,
              SolveFlags& flags, const std::string& out_path) {
  const auto mpc = read_case(case_path);
  Backends backends;
  report::SweepConfig cfg;
  cfg.bounds = bounds;
  cfg.r_grid = r_grid;
  cfg.bounds_config = make_config(flags, backends);
  cfg.mask = parse_mask(mask);
  cfg.center = parse_center(center);
  cfg.jobs = flags.export_dir.empty() ? jobs : 1;
  const auto rows = report::run_sweep(mpc, cfg);
  std::ostringstream csv;
  report::write_csv(rows, csv);
  emit(csv.str(), out_path);
  for (const auto& a : report::sweep_anomalies(rows)) std::cerr << "anomaly: " << a << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("report needs at least one report file");
  std::vector<nlohmann::json> reports;
  for (const auto& p : paths) {
    require_file(p);
    std::ifstream in(p);
    try {
      reports.push_back(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(p + ": " + e.what());
    }
  }
  try {
    std::cout << report::render_table(reports);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness margin bounds for quadratic systems under polytope limits"};
  app.require_subcommand(1);

  std::string case_path, system_path, out_path, center = "forecast";
  double bound = 0.001;
  std::vector<std::size_t> mask;
  std::vector<double> bounds, r_grid;
  std::size_t jobs = 1;
  std::vector<std::string> report_paths;
  SolveFlags bounds_flags, sweep_flags;

  auto* convert = app.add_subcommand("convert", "MATPOWER case to system JSON");
  convert->add_option("case", case_path, "MATPOWER .m file")->required();
  convert->add_option("-B,--bound", bound, "flow polytope half-width")->capture_default_str();
  convert->add_option("--mask", mask, "uncertain u entries, 1-based (default: first five)")->delimiter(',');
  convert->add_option("--center", center, "forecast or none")->capture_default_str();
  convert->add_option("-o,--output", out_path, "output file (default: stdout)");

  auto* bnds = app.add_subcommand("bounds", "lower and upper margin bounds for a system JSON");
  bnds->add_option("system", system_path, "system JSON")->required();
  bnds->add_option("-o,--output", out_path, "report file (default: stdout)");
  bounds_flags.add_to(*bnds);

  auto* sweep = app.add_subcommand("sweep", "bounds over several B values, as CSV");
  sweep->add_option("case", case_path, "MATPOWER .m file")->required();
  sweep->add_option("-B,--bounds", bounds, "B values, comma separated")->delimiter(',');
  sweep->add_option("--r-grid", r_grid, "certify on these radii instead of bisecting")->delimiter(',');
  sweep->add_option("--mask", mask, "uncertain u entries, 1-based (default: first five)")->delimiter(',');
  sweep->add_option("--center", center, "forecast or none")->capture_default_str();
  sweep->add_option("-j,--jobs", jobs, "concurrent sweep cells")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("-o,--output", out_path, "CSV file (default: stdout)");
  sweep_flags.add_to(*sweep);

  auto* rep = app.add_subcommand("report", "table of one or more report JSONs");
  rep->add_option("reports", report_paths, "report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*convert) return cmd_convert(case_path, bound, mask, center, out_path);
    if (*bnds) return cmd_bounds(system_path, bounds_flags, out_path);
    if (*sweep) return cmd_sweep(case_path, bounds, r_grid, mask, center, jobs, sweep_flags, out_path);
    if (*rep) return cmd_report(report_paths);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
