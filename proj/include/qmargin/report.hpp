#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qmargin/lower.hpp"
#include "qmargin/matpower.hpp"
#include "qmargin/system_io.hpp"
#include "qmargin/upper.hpp"

namespace qmargin::report {

inline constexpr int kReportSchemaVersion = 1;

struct BoundsConfig {
  std::vector<lower::Procedure> procedures{lower::Procedure::kFeasibility, lower::Procedure::kMip,
                                           lower::Procedure::kTightening};
  upper::OuterMode mode = upper::OuterMode::kVertex;
  lower::LowerOptions lower;
  lower::SearchOptions search;
  upper::OuterOptions outer;
  /// Builtin simplex when null; also used for validation and the start point.
  const lp::SolverBackend* backend = nullptr;
};

struct ProcedureRun {
  lower::SearchResult search;
  lower::ProblemSize size;
};

struct MarginReport {
  std::string system;
  std::size_t n = 0;
  std::size_t m = 0;
  std::string backend;
  std::vector<Violation> violations;
  std::string start;  // "x0" or "chebyshev"
  std::optional<DegreePrecondition> degree;
  std::string lower_suppressed;  // non-empty: reason no lower bound was searched
  std::vector<ProcedureRun> lowers;
  upper::OuterResult upper;
  std::vector<std::string> caveats;
  double seconds_validate = 0.0;
  double seconds_degree = 0.0;
  double seconds_total = 0.0;
  BoundsConfig config;
};

/// Validation, degree precondition, outer bound, then each lower procedure
/// searched from the outer bound. Failures of the model or the precondition
/// are reported, not thrown.
MarginReport run_bounds(const SystemFile& file, const BoundsConfig& config = {});

nlohmann::json to_json(const MarginReport& r);

/// Aligned text table, one row per procedure plus the outer bound of every
/// report. Throws std::runtime_error on a missing or foreign schema_version.
std::string render_table(const std::vector<nlohmann::json>& reports);

struct SweepConfig {
  std::vector<double> bounds;  // B values
  /// Empty: bisection search. Otherwise each lower bound is the largest grid
  /// radius up to which every grid radius certifies.
  std::vector<double> r_grid;
  BoundsConfig bounds_config;
  std::vector<std::size_t> mask;
  matpower::Center center = matpower::Center::kForecast;
  std::size_t jobs = 1;
};

struct SweepRow {
  std::string case_name;
  double bound = 0.0;
  std::string procedure;
  std::string bound_type;  // lower or upper
  std::optional<double> value;
  double seconds = 0.0;
  std::string error;
};

/// Rows ordered by B, then outer bound, then procedures as configured.
std::vector<SweepRow> run_sweep(const matpower::MatpowerCase& mpc, const SweepConfig& config);

void write_csv(const std::vector<SweepRow>& rows, std::ostream& out);

/// Procedures whose lower bound drops as B grows.
std::vector<std::string> sweep_anomalies(const std::vector<SweepRow>& rows);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace qmargin::report
