#pragma once

#include <atomic>
#include <cstddef>
#include <iosfwd>
#include <string>

#include "qmargin/lp.hpp"

namespace qmargin::lp {

/// CPLEX LP text format. Every column gets an explicit bound line, so the
/// format's default of [0, inf) never applies silently.
void write_lp_format(const LinearProgram& lp, std::ostream& out);
void write_lp_file(const LinearProgram& lp, const std::string& path);

/// Runs an external solver script on an LP export and reads its JSON answer.
/// The script is called as `<python> <script> <in.lp> <out.json>` and must
/// write {"status": ..., "objective": ..., "values": {name: value}}.
class ExternalBackend final : public SolverBackend {
 public:
  /// Empty arguments fall back to $QMARGIN_HIGHS_SCRIPT / $QMARGIN_PYTHON and
  /// then to the bundled tools/highs_solve.py and python3.
  explicit ExternalBackend(std::string script = {}, std::string python = {});

  LpSolution solve(const LinearProgram& lp) const override;
  std::string name() const override { return "external-highs"; }

  /// True when the interpreter and the solver module can be started.
  bool available() const;

 private:
  std::string script_;
  std::string python_;
};

/// Writes every program it is asked to solve to `<dir>/lp_<k>.lp`, k counting
/// from 1 in call order, then delegates to `inner`. Creates `dir`.
class ExportingBackend final : public SolverBackend {
 public:
  ExportingBackend(const SolverBackend& inner, std::string dir);
  LpSolution solve(const LinearProgram& lp) const override;
  std::string name() const override { return inner_.name(); }
  std::size_t exported() const { return count_.load(); }

 private:
  const SolverBackend& inner_;
  std::string dir_;
  mutable std::atomic<std::size_t> count_{0};
};

}  // namespace qmargin::lp
