#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmargin/qsys.hpp"
#include "qmargin/system_io.hpp"

namespace qmargin::matpower {

enum class BusType { kPQ = 1, kPV = 2, kSlack = 3, kIsolated = 4 };

struct Bus {
  int id = 0;
  BusType type = BusType::kPQ;
  double pd = 0.0, qd = 0.0;  // MW, MVAr
  double gs = 0.0, bs = 0.0;  // shunt, MW and MVAr at 1 p.u.
  double vm = 1.0, va = 0.0;  // p.u., degrees
  std::size_t line = 0;
};

struct Gen {
  int bus = 0;
  double pg = 0.0, qg = 0.0;
  double vg = 1.0;
  bool in_service = true;
  std::size_t line = 0;
};

struct Branch {
  int from = 0, to = 0;
  double r = 0.0, x = 0.0, b = 0.0;
  double tap = 0.0;    // 0 means a plain line
  double shift = 0.0;  // degrees
  bool in_service = true;
  std::size_t line = 0;
};

struct MatpowerCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Gen> gens;
  std::vector<Branch> branches;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Subset of the MATPOWER case format: `mpc.baseMVA = x;` and the numeric
/// `mpc.bus`, `mpc.gen`, `mpc.branch` matrices. Other fields are skipped.
MatpowerCase parse_case(const std::string& text, const std::string& source = "<text>");
MatpowerCase load_case(const std::string& path);

using ComplexMatrix = Eigen::MatrixXcd;

/// Bus admittance matrix in per unit, buses in table order.
ComplexMatrix build_ybus(const MatpowerCase& mpc);

/// Bookkeeping for the quadratic form of the power-flow equations.
struct Conversion {
  QuadraticSystem system;
  std::vector<std::string> legend;       // one label per u entry
  std::vector<std::string> state_names;  // one label per x entry
  std::vector<std::size_t> non_slack;    // bus table indices in state order
  std::vector<std::size_t> pq;           // buses with P and Q rows
  std::vector<std::size_t> pv;           // buses with P and |V|^2 rows
  std::size_t slack = 0;
  std::complex<double> slack_voltage;
  Vector flat_start;
};

/// First min(5, n) u entries.
std::vector<std::size_t> default_mask(std::size_t n);

/// x = [Re V; Im V] over non-slack buses, u = [P (all non-slack); Q (PQ); |V|^2 (PV)].
/// `mask` lists 0-based u entries with e_i = 1; empty selects default_mask.
Conversion to_quadratic_system(const MatpowerCase& mpc, std::vector<std::size_t> mask = {});

/// Four rows per in-service branch bounding the Re and Im coordinate
/// differences by B in both directions. With `center`, the rows bound the
/// deviation of each difference from its value at `center` instead.
Polytope flow_polytope(const MatpowerCase& mpc, const Conversion& conv, double bound,
                       const Vector* center = nullptr);

enum class Center { kNone, kForecast };

struct ConvertedCase {
  SystemFile file;
  Conversion conversion;
  DegreeCheck forecast;  // Newton from flat start
};

/// Full pipeline. With Center::kForecast, throws std::runtime_error when the
/// forecast Newton solve fails.
ConvertedCase convert_case(const MatpowerCase& mpc, double bound, std::vector<std::size_t> mask = {},
                           Center center = Center::kForecast);

}  // namespace qmargin::matpower
