#include "qmargin/oracle.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qmargin/simplex.hpp"

namespace qmargin::oracle {

namespace {

constexpr long kMaxCell = 30000;  // cell indices must fit 16 bits after the offset

struct Grid {
  std::size_t n = 0;
  std::size_t res = 0;
  Vector lower, step;

  double coord(std::size_t j, std::size_t k) const {
    return lower(static_cast<Eigen::Index>(j)) + step(static_cast<Eigen::Index>(j)) * static_cast<double>(k);
  }
};

Grid make_grid(const QuadraticSystem& sys, const Polytope& poly, const OracleConfig& cfg) {
  const std::size_t n = sys.dimension();
  if (poly.a.cols() != static_cast<Eigen::Index>(n)) throw std::invalid_argument("oracle: dimension mismatch");
  Grid g;
  g.n = n;
  g.res = resolution_for(cfg, n);
  const auto ext = polytope_extent(poly, lp::SimplexBackend{});
  if (ext.status != ExtentStatus::kBounded) throw std::invalid_argument("oracle: polytope must be bounded and nonempty");
  g.lower = ext.lower;
  g.step = (ext.upper - ext.lower) / static_cast<double>(g.res - 1);
  return g;
}

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t limit) {
  std::size_t v = 1;
  for (std::size_t k = 0; k < exp; ++k) {
    if (v > limit / base) throw std::length_error("oracle sampling budget exceeded");
    v *= base;
  }
  return v;
}

double row_tol(const Polytope& poly, Eigen::Index i) { return 1e-9 * (1.0 + std::abs(poly.b(i))); }

// Image step of one grid move, per u dimension.
Vector image_step(const QuadraticSystem& sys, const Vector& x, const Vector& step) {
  return jacobian(sys, x).cwiseAbs() * step.cwiseAbs();
}

// --- boundary sampling ---

struct FacetSampler {
  const QuadraticSystem& sys;
  const Polytope& poly;
  const UncertaintyBox& box;
  const Grid& g;
  std::size_t per_facet;
  std::vector<std::size_t> dependent;  // solved coordinate per facet

  struct Sample {
    bool valid = false;
    double distance = 0.0;
    double step = 0.0;
  };

  Sample operator()(std::size_t t) const {
    const std::size_t i = t / per_facet;
    std::size_t rest = t % per_facet;
    const auto ii = static_cast<Eigen::Index>(i);
    const std::size_t d = dependent[i];
    Vector x(static_cast<Eigen::Index>(g.n));
    double lhs = 0.0;
    for (std::size_t j = 0; j < g.n; ++j) {
      if (j == d) continue;
      x(static_cast<Eigen::Index>(j)) = g.coord(j, rest % g.res);
      rest /= g.res;
      lhs += poly.a(ii, static_cast<Eigen::Index>(j)) * x(static_cast<Eigen::Index>(j));
    }
    const auto di = static_cast<Eigen::Index>(d);
    x(di) = (poly.b(ii) - lhs) / poly.a(ii, di);
    Sample s;
    const Vector ax = poly.a * x;
    for (Eigen::Index k = 0; k < ax.size(); ++k) {
      if (ax(k) > poly.b(k) + row_tol(poly, k)) return s;
    }
    s.valid = true;
    const Vector f = eval_f(sys, x);
    for (Eigen::Index k = 0; k < f.size(); ++k) {
      s.distance = std::max({s.distance, box.u_min(k) - f(k), f(k) - box.u_max(k)});
    }
    s.step = image_step(sys, x, g.step).maxCoeff();
    return s;
  }
};

// --- interior coverage ---

struct CoverageSampler {
  const QuadraticSystem& sys;
  const Polytope& poly;
  const Grid& g;

  bool point(std::size_t t, Vector& x) const {
    for (std::size_t j = 0; j < g.n; ++j) {
      x(static_cast<Eigen::Index>(j)) = g.coord(j, t % g.res);
      t /= g.res;
    }
    const Vector ax = poly.a * x;
    for (Eigen::Index k = 0; k < ax.size(); ++k) {
      if (ax(k) >= poly.b(k) - row_tol(poly, k)) return false;
    }
    return true;
  }
};

std::uint64_t pack(const std::vector<long>& cell) {
  std::uint64_t key = 0;
  for (long c : cell) key = (key << 16) | static_cast<std::uint64_t>(c + 32768);
  return key;
}

struct CellIndexer {
  const Vector& u_star;
  const Vector& weights;
  std::vector<std::size_t> active, pinned;
  Vector pin_tol;
  double h = 0.0;

  // False when the image is off the pinned dimensions or too far to matter.
  bool key(const Vector& f, std::uint64_t& out) const {
    for (std::size_t j : pinned) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (std::abs(f(jj) - u_star(jj)) > pin_tol(jj)) return false;
    }
    std::vector<long> cell(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto jj = static_cast<Eigen::Index>(active[a]);
      const double c = std::round((f(jj) - u_star(jj)) / (weights(jj) * h));
      if (std::abs(c) > static_cast<double>(kMaxCell)) return false;
      cell[a] = static_cast<long>(c);
    }
    out = pack(cell);
    return true;
  }
};

// Number of complete rings of cells around the origin, i.e. the largest R
// with every cell of max-index <= R - 1 present.
long complete_rings(const std::vector<std::uint64_t>& sorted, std::size_t k) {
  std::vector<long> cell(k);
  for (long r = 0; r <= kMaxCell; ++r) {
    // Walk the cube [-r, r]^k, visiting only its surface.
    std::fill(cell.begin(), cell.end(), -r);
    while (true) {
      long top = 0;
      for (long c : cell) top = std::max(top, std::abs(c));
      if (top == r && !std::binary_search(sorted.begin(), sorted.end(), pack(cell))) return r;
      std::size_t a = 0;
      while (a < k && cell[a] == r) cell[a++] = -r;
      if (a == k) break;
      ++cell[a];
    }
  }
  return kMaxCell + 1;
}

}  // namespace

std::size_t resolution_for(const OracleConfig& cfg, std::size_t n) {
  if (n == 0 || n > 4) throw std::invalid_argument("oracle supports 1 <= n <= 4");
  const std::size_t res = cfg.resolution ? cfg.resolution : n <= 2 ? 256 : n == 3 ? 64 : 24;
  if (res < 16) throw std::invalid_argument("oracle resolution must be at least 16");
  return res;
}

Estimate boundary_min_distance(const QuadraticSystem& sys, const Polytope& poly, const UncertaintyBox& box,
                               const OracleConfig& cfg) {
  const Grid g = make_grid(sys, poly, cfg);
  const std::size_t m = poly.rows();
  const std::size_t per_facet = checked_power(g.res, g.n - 1, cfg.budget);
  if (per_facet > cfg.budget / std::max<std::size_t>(m, 1)) throw std::length_error("oracle sampling budget exceeded");

  FacetSampler sampler{sys, poly, box, g, per_facet, {}};
  for (std::size_t i = 0; i < m; ++i) {
    Eigen::Index d = 0;
    poly.a.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff(&d);
    sampler.dependent.push_back(static_cast<std::size_t>(d));
  }

  const auto total = static_cast<std::ptrdiff_t>(per_facet * m);
  double best = std::numeric_limits<double>::infinity();
  double cell = 0.0;
  std::size_t count = 0;
  if (!cfg.parallel) {
    for (std::ptrdiff_t t = 0; t < total; ++t) {
      const auto s = sampler(static_cast<std::size_t>(t));
      if (!s.valid) continue;
      best = std::min(best, s.distance);
      cell = std::max(cell, s.step);
      ++count;
    }
  } else {
#pragma omp parallel for schedule(static) reduction(min : best) reduction(max : cell) reduction(+ : count)
    for (std::ptrdiff_t t = 0; t < total; ++t) {
      const auto s = sampler(static_cast<std::size_t>(t));
      if (!s.valid) continue;
      best = std::min(best, s.distance);
      cell = std::max(cell, s.step);
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("oracle: no facet sample lies on the polytope");
  return {best, cell, count};
}

Estimate inscribed_box_margin(const QuadraticSystem& sys, const Polytope& poly, const Vector& u_star,
                              const Vector& weights, const OracleConfig& cfg) {
  const Grid g = make_grid(sys, poly, cfg);
  if (u_star.size() != static_cast<Eigen::Index>(g.n) || weights.size() != u_star.size()) {
    throw std::invalid_argument("oracle: u_star and weights must have the system dimension");
  }
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("oracle: weights must be nonnegative");
  const auto total = static_cast<std::ptrdiff_t>(checked_power(g.res, g.n, cfg.budget));

  CellIndexer index{u_star, weights, {}, {}, Vector::Zero(u_star.size()), 0.0};
  for (std::size_t j = 0; j < g.n; ++j) {
    (weights(static_cast<Eigen::Index>(j)) > 0.0 ? index.active : index.pinned).push_back(j);
  }
  if (index.active.empty()) throw std::invalid_argument("oracle: no active dimension");
  const CoverageSampler sampler{sys, poly, g};

  // Pass 1: largest image step of one grid move, weighted per dimension.
  Vector step_max = Vector::Zero(u_star.size());
  std::vector<Vector> partial(static_cast<std::size_t>(cfg.parallel ? omp_get_max_threads() : 1),
                              Vector::Zero(u_star.size()));
#pragma omp parallel if (cfg.parallel)
  {
    Vector x(static_cast<Eigen::Index>(g.n));
    Vector& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < total; ++t) {
      if (sampler.point(static_cast<std::size_t>(t), x)) mine = mine.cwiseMax(image_step(sys, x, g.step));
    }
  }
  for (const auto& p : partial) step_max = step_max.cwiseMax(p);
  double s = 0.0;
  for (std::size_t j : index.active) {
    const auto jj = static_cast<Eigen::Index>(j);
    s = std::max(s, step_max(jj) / weights(jj));
  }
  if (!(s > 0.0)) throw std::runtime_error("oracle: no interior sample");
  // Any l-inf square of side 2s meets a point set whose grid moves are at most s.
  index.h = 2.0 * s;
  index.pin_tol = step_max;

  // Pass 2: hash the image cells.
  std::vector<std::uint64_t> keys;
  std::size_t count = 0;
  if (!cfg.parallel) {
    Vector x(static_cast<Eigen::Index>(g.n));
    for (std::ptrdiff_t t = 0; t < total; ++t) {
      if (!sampler.point(static_cast<std::size_t>(t), x)) continue;
      ++count;
      std::uint64_t key = 0;
      if (index.key(eval_f(sys, x), key)) keys.push_back(key);
    }
  } else {
    std::vector<std::vector<std::uint64_t>> local(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel reduction(+ : count)
    {
      Vector x(static_cast<Eigen::Index>(g.n));
      auto& mine = local[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
      for (std::ptrdiff_t t = 0; t < total; ++t) {
        if (!sampler.point(static_cast<std::size_t>(t), x)) continue;
        ++count;
        std::uint64_t key = 0;
        if (index.key(eval_f(sys, x), key)) mine.push_back(key);
      }
    }
    for (auto& l : local) keys.insert(keys.end(), l.begin(), l.end());
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  const long rings = complete_rings(keys, index.active.size());
  // Rings 0..rings-1 are full, so the box of half-width (rings - 0.5) cells is covered.
  const double value = rings == 0 ? 0.0 : (static_cast<double>(rings) - 0.5) * index.h;
  return {value, index.h, count};
}

const char* to_string(Consistency c) { return c == Consistency::kConsistent ? "consistent" : "inconsistent"; }

Consistency certify_reference(const QuadraticSystem& sys, const Polytope& poly, const lower::Certificate& cert,
                              const OracleConfig& cfg) {
  if (!cert.certified) return Consistency::kConsistent;
  const auto d = boundary_min_distance(sys, poly, box_at_radius(sys, cert.radius), cfg);
  return d.value > 0.0 ? Consistency::kConsistent : Consistency::kInconsistent;
}

}  // namespace qmargin::oracle
