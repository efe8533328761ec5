#pragma once

#include <cstddef>

#include "qmargin/lower.hpp"
#include "qmargin/qsys.hpp"

/// Grid-sampling references for small systems (n <= 4). Deterministic: no
/// randomness, and the parallel paths return exactly the serial results.
namespace qmargin::oracle {

struct OracleConfig {
  std::size_t resolution = 0;         // grid points per x dimension; 0 picks by n
  std::size_t budget = 20'000'000;    // max samples per call
  bool parallel = true;
};

/// 256 for n <= 2, 64 for n = 3, 24 for n = 4 unless set. Throws
/// std::invalid_argument when n > 4 or the resolution is below 16.
std::size_t resolution_for(const OracleConfig& cfg, std::size_t n);

struct Estimate {
  double value = 0.0;
  double cell = 0.0;  // resolution in u-space: image spacing or hash cell size
  std::size_t samples = 0;
};

/// Minimum l-inf distance from F(x) to the box over grid samples of every
/// facet of the polytope (0 when a sample lands inside). A sampled upper bound
/// on the true minimum. Throws std::length_error past the budget.
Estimate boundary_min_distance(const QuadraticSystem& sys, const Polytope& poly, const UncertaintyBox& box,
                               const OracleConfig& cfg = {});

/// Largest r such that every cell of the u-grid inside u* + r[-w, w] holds the
/// image of an interior sample. `weights` scales the box per dimension (zero
/// entries are pinned to u* within half a cell). `value` is accurate to about
/// two cells.
Estimate inscribed_box_margin(const QuadraticSystem& sys, const Polytope& poly, const Vector& u_star,
                              const Vector& weights, const OracleConfig& cfg = {});

enum class Consistency { kConsistent, kInconsistent };
const char* to_string(Consistency c);

/// Inconsistent iff the certificate claims robust feasibility at its radius
/// but some sampled boundary point maps inside the box.
Consistency certify_reference(const QuadraticSystem& sys, const Polytope& poly, const lower::Certificate& cert,
                              const OracleConfig& cfg = {});

}  // namespace qmargin::oracle
