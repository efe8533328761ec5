#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qmargin/lp.hpp"
#include "qmargin/qsys.hpp"

namespace qmargin {

std::size_t lift_dim(std::size_t n);

/// Columns [0, n) hold x; X_qr for q <= r follows in row-major upper-triangular order.
class LiftedIndex {
 public:
  explicit LiftedIndex(std::size_t n) : n_(n) {}

  std::size_t n() const { return n_; }
  std::size_t dim() const { return lift_dim(n_); }
  std::size_t x(std::size_t j) const { return j; }
  /// Symmetric: X(q, r) == X(r, q).
  std::size_t X(std::size_t q, std::size_t r) const;
  /// Column name as used in LP exports: x1.., X1_1..
  std::string name(std::size_t column) const;

 private:
  std::size_t n_;
};

/// (x, upper-triangle of x x^T)
Vector lifted_point(const Vector& x);

enum class Provenance { kStateLimit, kRlt, kULower, kUUpper, kFacet, kDummy };
const char* to_string(Provenance p);

struct ConstraintBlock {
  std::size_t dim = 0;
  std::vector<lp::Row> rows;
  std::vector<Provenance> provenance;
  /// Row count with each degenerate-box equality counted as two rows.
  std::size_t nominal_rows = 0;

  void append(lp::Row row, Provenance p, std::size_t weight = 1);
  void append(const ConstraintBlock& other);
  std::size_t count(Provenance p) const;
};

/// Trace(Q_i X) + L_i x over lifted columns.
lp::SparseVector quadratic_row(const QuadraticSystem& sys, std::size_t i);

/// All m^2 ordered pairs of (b - Ax)(b - Ax)^T >= 0, written as <= rows.
ConstraintBlock rlt_rows(const Polytope& poly);

/// State limits A x <= b on lifted columns.
ConstraintBlock state_rows(const Polytope& poly);

struct AssembleOptions {
  /// Emit two inequalities for zero-width box dims instead of one equality.
  bool split_degenerate = false;
};

/// u-lower rows, u-upper rows, state limits, RLT rows (in that order).
ConstraintBlock assemble_base_constraints(const QuadraticSystem& sys, const Polytope& poly,
                                          const UncertaintyBox& box,
                                          const AssembleOptions& options = {});

/// Free-variable program over `block.dim` columns carrying the block rows.
lp::LinearProgram to_program(const ConstraintBlock& block, std::size_t n);

}  // namespace qmargin
