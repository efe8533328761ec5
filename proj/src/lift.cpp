#include "qmargin/lift.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace qmargin {

std::size_t lift_dim(std::size_t n) { return n + n * (n + 1) / 2; }

std::size_t LiftedIndex::X(std::size_t q, std::size_t r) const {
  if (q > r) std::swap(q, r);
  if (r >= n_) throw std::out_of_range("LiftedIndex::X: index out of range");
  return n_ + q * n_ - q * (q - 1) / 2 + (r - q);
}

std::string LiftedIndex::name(std::size_t column) const {
  if (column < n_) return "x" + std::to_string(column + 1);
  std::size_t off = column - n_;
  for (std::size_t q = 0; q < n_; ++q) {
    const std::size_t len = n_ - q;
    if (off < len) return "X" + std::to_string(q + 1) + "_" + std::to_string(q + off + 1);
    off -= len;
  }
  throw std::out_of_range("LiftedIndex::name: column out of range");
}

Vector lifted_point(const Vector& x) {
  const auto n = static_cast<std::size_t>(x.size());
  const LiftedIndex idx(n);
  Vector out(static_cast<Eigen::Index>(idx.dim()));
  out.head(x.size()) = x;
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t r = q; r < n; ++r)
      out(static_cast<Eigen::Index>(idx.X(q, r))) =
          x(static_cast<Eigen::Index>(q)) * x(static_cast<Eigen::Index>(r));
  return out;
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kStateLimit: return "state-limit";
    case Provenance::kRlt: return "rlt";
    case Provenance::kULower: return "u-lower";
    case Provenance::kUUpper: return "u-upper";
    case Provenance::kFacet: return "facet";
    case Provenance::kDummy: return "dummy";
  }
  return "?";
}

void ConstraintBlock::append(lp::Row row, Provenance p, std::size_t weight) {
  rows.push_back(std::move(row));
  provenance.push_back(p);
  nominal_rows += weight;
}

void ConstraintBlock::append(const ConstraintBlock& other) {
  if (other.dim != dim) throw std::invalid_argument("ConstraintBlock::append: dimension mismatch");
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  nominal_rows += other.nominal_rows;
}

std::size_t ConstraintBlock::count(Provenance p) const {
  std::size_t c = 0;
  for (auto q : provenance) c += q == p ? 1 : 0;
  return c;
}

lp::SparseVector quadratic_row(const QuadraticSystem& sys, std::size_t i) {
  const std::size_t n = sys.dimension();
  if (i >= n) throw std::out_of_range("quadratic_row: index out of range");
  const LiftedIndex idx(n);
  const Matrix& q = sys.q(i);
  lp::SparseVector row;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = sys.l()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (v != 0.0) row.push_back({idx.x(j), v});
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const auto ea = static_cast<Eigen::Index>(a), eb = static_cast<Eigen::Index>(b);
      const double v = a == b ? q(ea, ea) : q(ea, eb) + q(eb, ea);
      if (v != 0.0) row.push_back({idx.X(a, b), v});
    }
  }
  return row;
}

namespace {

std::vector<lp::SparseVector> sparse_rows(const Matrix& a) {
  std::vector<lp::SparseVector> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) out[static_cast<std::size_t>(i)].push_back({static_cast<std::size_t>(j), a(i, j)});
  return out;
}

}  // namespace

ConstraintBlock state_rows(const Polytope& poly) {
  ConstraintBlock block;
  block.dim = lift_dim(poly.cols());
  auto rows = sparse_rows(poly.a);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    block.append({std::move(rows[i]), lp::Relation::kLessEqual, poly.b(static_cast<Eigen::Index>(i))},
                 Provenance::kStateLimit);
  }
  return block;
}

ConstraintBlock rlt_rows(const Polytope& poly) {
  const std::size_t n = poly.cols();
  const std::size_t m = poly.rows();
  const LiftedIndex idx(n);
  const auto rows = sparse_rows(poly.a);
  ConstraintBlock block;
  block.dim = idx.dim();
  block.rows.reserve(m * m);
  std::vector<double> dense(idx.dim(), 0.0);
  std::vector<std::size_t> touched;
  auto add = [&](std::size_t col, double v) {
    if (dense[col] == 0.0) touched.push_back(col);
    dense[col] += v;
  };
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t r = 0; r < m; ++r) {
      const double bq = poly.b(static_cast<Eigen::Index>(q));
      const double br = poly.b(static_cast<Eigen::Index>(r));
      // b_r (Ax)_q + b_q (Ax)_r - (A X A^T)_qr <= b_q b_r
      for (const auto& c : rows[q]) add(c.column, br * c.value);
      for (const auto& c : rows[r]) add(c.column, bq * c.value);
      for (const auto& s : rows[q])
        for (const auto& t : rows[r]) add(idx.X(s.column, t.column), -s.value * t.value);
      lp::SparseVector coeffs;
      coeffs.reserve(touched.size());
      for (std::size_t col : touched) {
        if (dense[col] != 0.0) coeffs.push_back({col, dense[col]});
        dense[col] = 0.0;
      }
      touched.clear();
      std::sort(coeffs.begin(), coeffs.end(),
                [](const lp::Coefficient& a, const lp::Coefficient& b) { return a.column < b.column; });
      block.append({std::move(coeffs), lp::Relation::kLessEqual, bq * br}, Provenance::kRlt);
    }
  }
  return block;
}

ConstraintBlock assemble_base_constraints(const QuadraticSystem& sys, const Polytope& poly,
                                          const UncertaintyBox& box,
                                          const AssembleOptions& options) {
  const std::size_t n = sys.dimension();
  if (poly.cols() != n || static_cast<std::size_t>(box.u_min.size()) != n ||
      static_cast<std::size_t>(box.u_max.size()) != n) {
    throw std::invalid_argument("assemble_base_constraints: dimension mismatch");
  }
  ConstraintBlock block;
  block.dim = lift_dim(n);
  std::vector<lp::SparseVector> qrows;
  for (std::size_t i = 0; i < n; ++i) qrows.push_back(quadratic_row(sys, i));

  auto degenerate = [&](std::size_t i) {
    return !options.split_degenerate &&
           box.u_min(static_cast<Eigen::Index>(i)) == box.u_max(static_cast<Eigen::Index>(i));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = box.u_min(static_cast<Eigen::Index>(i));
    if (degenerate(i)) block.append({qrows[i], lp::Relation::kEqual, lo}, Provenance::kULower, 2);
    else block.append({qrows[i], lp::Relation::kGreaterEqual, lo}, Provenance::kULower);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (degenerate(i)) continue;
    block.append({qrows[i], lp::Relation::kLessEqual, box.u_max(static_cast<Eigen::Index>(i))},
                 Provenance::kUUpper);
  }
  block.append(state_rows(poly));
  block.append(rlt_rows(poly));
  return block;
}

lp::LinearProgram to_program(const ConstraintBlock& block, std::size_t n) {
  const LiftedIndex idx(n);
  if (idx.dim() != block.dim) throw std::invalid_argument("to_program: dimension mismatch");
  lp::LinearProgram prog(block.dim);
  for (std::size_t j = 0; j < block.dim; ++j) prog.set_name(j, idx.name(j));
  for (const auto& row : block.rows) prog.add_row(row);
  return prog;
}

}  // namespace qmargin
