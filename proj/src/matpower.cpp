#include "qmargin/matpower.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace qmargin::matpower {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

struct RawRow {
  std::vector<double> values;
  std::size_t line;
};

struct RawTable {
  std::vector<RawRow> rows;
  std::size_t line = 0;  // where the table starts
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    if (tok == "Inf" || tok == "inf") return INFINITY;
    if (tok == "-Inf" || tok == "-inf") return -INFINITY;
    throw ParseError(source, line, "malformed number '" + tok + "'");
  }
  return v;
}

void add_segment(const std::string& seg, RawTable& table, const std::string& source, std::size_t line) {
  std::string s = seg;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  RawRow row{{}, line};
  std::string tok;
  while (in >> tok) row.values.push_back(parse_number(tok, source, line));
  if (!row.values.empty()) table.rows.push_back(std::move(row));
}

void require_columns(const RawTable& t, std::size_t cols, const char* name, const std::string& source) {
  for (const auto& r : t.rows) {
    if (r.values.size() < cols) {
      throw ParseError(source, r.line,
                       std::string("mpc.") + name + " row has " + std::to_string(r.values.size()) +
                           " columns, expected at least " + std::to_string(cols));
    }
  }
}

int as_id(double v, const std::string& source, std::size_t line) {
  if (v != std::floor(v)) throw ParseError(source, line, "bus id must be an integer");
  return static_cast<int>(v);
}

}  // namespace

MatpowerCase parse_case(const std::string& text, const std::string& source) {
  std::map<std::string, RawTable> tables;
  std::optional<double> base;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  RawTable* open = nullptr;
  std::string open_name;
  bool in_cell = false;
  std::size_t cell_line = 0;
  MatpowerCase mpc;

  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('%'));
    if (in_cell) {
      if (line.find('}') != std::string::npos) in_cell = false;
      continue;
    }
    if (open) {
      const auto close = line.find(']');
      std::string body = close == std::string::npos ? line : line.substr(0, close);
      std::size_t start = 0;
      for (std::size_t p; (p = body.find(';', start)) != std::string::npos; start = p + 1) {
        add_segment(body.substr(start, p - start), *open, source, lineno);
      }
      add_segment(body.substr(start), *open, source, lineno);
      if (close != std::string::npos) open = nullptr;
      continue;
    }
    line = trim(line);
    if (line.rfind("function", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) mpc.name = trim(line.substr(eq + 1));
      continue;
    }
    if (line.rfind("mpc.", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string field = trim(line.substr(4, eq - 4));
    std::string rhs = trim(line.substr(eq + 1));
    if (!rhs.empty() && rhs.front() == '{') {
      if (rhs.find('}') == std::string::npos) {
        in_cell = true;
        cell_line = lineno;
      }
      continue;
    }
    if (!rhs.empty() && rhs.front() == '[') {
      if (tables.count(field)) throw ParseError(source, lineno, "duplicate table mpc." + field);
      RawTable& t = tables[field];
      t.line = lineno;
      open = &t;
      open_name = field;
      rhs = rhs.substr(1);
      const auto close = rhs.find(']');
      std::string body = close == std::string::npos ? rhs : rhs.substr(0, close);
      std::size_t start = 0;
      for (std::size_t p; (p = body.find(';', start)) != std::string::npos; start = p + 1) {
        add_segment(body.substr(start, p - start), t, source, lineno);
      }
      add_segment(body.substr(start), t, source, lineno);
      if (close != std::string::npos) open = nullptr;
      continue;
    }
    if (field == "baseMVA") {
      if (!rhs.empty() && rhs.back() == ';') rhs.pop_back();
      base = parse_number(trim(rhs), source, lineno);
    }
  }
  if (open) throw ParseError(source, tables[open_name].line, "unterminated matrix mpc." + open_name);
  if (in_cell) throw ParseError(source, cell_line, "unterminated cell array");
  if (!base) throw ParseError(source, lineno, "missing mpc.baseMVA");
  if (!(*base > 0.0)) throw ParseError(source, lineno, "mpc.baseMVA must be positive");
  mpc.base_mva = *base;

  if (!tables.count("bus")) throw ParseError(source, lineno, "missing table mpc.bus");
  const auto& bus = tables["bus"];
  if (bus.rows.empty()) throw ParseError(source, bus.line, "empty bus table");
  for (const char* name : {"gen", "branch"}) {
    if (!tables.count(name)) throw ParseError(source, lineno, std::string("missing table mpc.") + name);
  }
  require_columns(bus, 13, "bus", source);
  require_columns(tables["gen"], 10, "gen", source);
  require_columns(tables["branch"], 13, "branch", source);

  std::set<int> ids;
  for (const auto& r : bus.rows) {
    Bus b;
    b.id = as_id(r.values[0], source, r.line);
    const double type = r.values[1];
    if (type != 1 && type != 2 && type != 3 && type != 4) {
      throw ParseError(source, r.line, "unknown bus type " + std::to_string(type));
    }
    b.type = static_cast<BusType>(static_cast<int>(type));
    b.pd = r.values[2];
    b.qd = r.values[3];
    b.gs = r.values[4];
    b.bs = r.values[5];
    b.vm = r.values[7];
    b.va = r.values[8];
    b.line = r.line;
    if (!ids.insert(b.id).second) throw ParseError(source, r.line, "duplicate bus id " + std::to_string(b.id));
    mpc.buses.push_back(b);
  }
  for (const auto& r : tables["gen"].rows) {
    Gen g;
    g.bus = as_id(r.values[0], source, r.line);
    g.pg = r.values[1];
    g.qg = r.values[2];
    g.vg = r.values[5];
    g.in_service = r.values[7] > 0;
    g.line = r.line;
    if (!ids.count(g.bus)) throw ParseError(source, r.line, "generator at unknown bus " + std::to_string(g.bus));
    mpc.gens.push_back(g);
  }
  for (const auto& r : tables["branch"].rows) {
    Branch br;
    br.from = as_id(r.values[0], source, r.line);
    br.to = as_id(r.values[1], source, r.line);
    br.r = r.values[2];
    br.x = r.values[3];
    br.b = r.values[4];
    br.tap = r.values[8];
    br.shift = r.values[9];
    br.in_service = r.values[10] > 0;
    br.line = r.line;
    if (!ids.count(br.from) || !ids.count(br.to)) {
      throw ParseError(source, r.line, "branch references an unknown bus");
    }
    if (br.in_service && br.r == 0.0 && br.x == 0.0) {
      throw ParseError(source, r.line, "in-service branch has zero impedance");
    }
    mpc.branches.push_back(br);
  }
  const auto slacks = std::count_if(mpc.buses.begin(), mpc.buses.end(),
                                    [](const Bus& b) { return b.type == BusType::kSlack; });
  if (slacks != 1) {
    throw ParseError(source, bus.line, "expected exactly one slack bus, found " + std::to_string(slacks));
  }
  return mpc;
}

MatpowerCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto mpc = parse_case(ss.str(), path);
  if (mpc.name.empty()) {
    const auto slash = path.find_last_of('/');
    std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    mpc.name = stem.substr(0, stem.find('.'));
  }
  return mpc;
}

namespace {

std::map<int, std::size_t> bus_index(const MatpowerCase& mpc) {
  std::map<int, std::size_t> idx;
  for (std::size_t k = 0; k < mpc.buses.size(); ++k) idx[mpc.buses[k].id] = k;
  return idx;
}

}  // namespace

ComplexMatrix build_ybus(const MatpowerCase& mpc) {
  using C = std::complex<double>;
  const auto idx = bus_index(mpc);
  const auto nb = static_cast<Eigen::Index>(mpc.buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(nb, nb);
  for (const auto& br : mpc.branches) {
    if (!br.in_service) continue;
    if (br.r == 0.0 && br.x == 0.0) throw std::invalid_argument("in-service branch has zero impedance");
    const auto f = static_cast<Eigen::Index>(idx.at(br.from));
    const auto t = static_cast<Eigen::Index>(idx.at(br.to));
    const C ys = 1.0 / C(br.r, br.x);
    const C charging(0.0, br.b / 2.0);
    const C tap = (br.tap == 0.0 ? 1.0 : br.tap) * std::polar(1.0, br.shift * std::numbers::pi / 180.0);
    y(f, f) += (ys + charging) / std::norm(tap);
    y(t, t) += ys + charging;
    y(f, t) -= ys / std::conj(tap);
    y(t, f) -= ys / tap;
  }
  for (Eigen::Index k = 0; k < nb; ++k) {
    const auto& b = mpc.buses[static_cast<std::size_t>(k)];
    y(k, k) += C(b.gs, b.bs) / mpc.base_mva;
  }
  return y;
}

std::vector<std::size_t> default_mask(std::size_t n) {
  std::vector<std::size_t> m;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, n); ++i) m.push_back(i);
  return m;
}

Conversion to_quadratic_system(const MatpowerCase& mpc, std::vector<std::size_t> mask) {
  const auto idx = bus_index(mpc);
  const std::size_t nb = mpc.buses.size();
  Conversion conv;

  std::vector<double> pg(nb, 0.0), vg(nb);
  std::vector<bool> has_gen(nb, false);
  for (std::size_t k = 0; k < nb; ++k) vg[k] = mpc.buses[k].vm;
  for (const auto& g : mpc.gens) {
    if (!g.in_service) continue;
    const std::size_t k = idx.at(g.bus);
    pg[k] += g.pg;
    if (!has_gen[k]) vg[k] = g.vg;
    has_gen[k] = true;
  }

  for (std::size_t k = 0; k < nb; ++k) {
    switch (mpc.buses[k].type) {
      case BusType::kSlack: conv.slack = k; break;
      case BusType::kIsolated: throw std::invalid_argument("isolated buses are not supported");
      case BusType::kPV:
        conv.non_slack.push_back(k);
        (has_gen[k] ? conv.pv : conv.pq).push_back(k);
        break;
      case BusType::kPQ:
        conv.non_slack.push_back(k);
        conv.pq.push_back(k);
        break;
    }
  }
  const std::size_t ns = conv.non_slack.size();
  const std::size_t n = 2 * ns;
  if (ns + conv.pq.size() + conv.pv.size() != n) throw std::logic_error("power-flow system is not square");
  if (n == 0) throw std::invalid_argument("case has no non-slack buses");

  const Bus& slack = mpc.buses[conv.slack];
  conv.slack_voltage = std::polar(vg[conv.slack], slack.va * std::numbers::pi / 180.0);
  const double e0 = conv.slack_voltage.real(), f0 = conv.slack_voltage.imag();

  std::vector<std::size_t> pos(nb, nb);  // bus -> state position
  for (std::size_t p = 0; p < ns; ++p) pos[conv.non_slack[p]] = p;
  auto re = [&](std::size_t bus) { return static_cast<Eigen::Index>(pos[bus]); };
  auto im = [&](std::size_t bus) { return static_cast<Eigen::Index>(ns + pos[bus]); };

  const ComplexMatrix y = build_ybus(mpc);
  std::vector<Matrix> q;
  Matrix l = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Vector u(static_cast<Eigen::Index>(n));
  std::size_t row = 0;

  // Re/Im of V_i conj(sum_k Y_ik V_k) with V = e + jf, Y = G + jB.
  auto power_row = [&](std::size_t i, bool reactive) {
    Matrix qi = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const auto r = static_cast<Eigen::Index>(row);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto yik = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      const double g = yik.real(), b = yik.imag();
      if (g == 0.0 && b == 0.0) continue;
      if (k == conv.slack) {
        if (!reactive) {
          l(r, re(i)) += g * e0 - b * f0;
          l(r, im(i)) += g * f0 + b * e0;
        } else {
          l(r, re(i)) += -g * f0 - b * e0;
          l(r, im(i)) += g * e0 - b * f0;
        }
        continue;
      }
      if (!reactive) {
        qi(re(i), re(k)) += g;
        qi(im(i), im(k)) += g;
        qi(im(i), re(k)) += b;
        qi(re(i), im(k)) -= b;
      } else {
        qi(im(i), re(k)) += g;
        qi(re(i), im(k)) -= g;
        qi(re(i), re(k)) -= b;
        qi(im(i), im(k)) -= b;
      }
    }
    q.push_back(std::move(qi));
  };

  for (std::size_t i : conv.non_slack) {
    power_row(i, false);
    u(static_cast<Eigen::Index>(row)) = (pg[i] - mpc.buses[i].pd) / mpc.base_mva;
    conv.legend.push_back("P_bus" + std::to_string(mpc.buses[i].id));
    ++row;
  }
  for (std::size_t i : conv.pq) {
    power_row(i, true);
    u(static_cast<Eigen::Index>(row)) = -mpc.buses[i].qd / mpc.base_mva;
    conv.legend.push_back("Q_bus" + std::to_string(mpc.buses[i].id));
    ++row;
  }
  for (std::size_t i : conv.pv) {
    Matrix qi = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    qi(re(i), re(i)) = 1.0;
    qi(im(i), im(i)) = 1.0;
    q.push_back(std::move(qi));
    u(static_cast<Eigen::Index>(row)) = vg[i] * vg[i];
    conv.legend.push_back("V2_bus" + std::to_string(mpc.buses[i].id));
    ++row;
  }

  if (mask.empty()) mask = default_mask(n);
  Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i : mask) {
    if (i >= n) throw std::out_of_range("mask index " + std::to_string(i + 1) + " exceeds n = " + std::to_string(n));
    e(static_cast<Eigen::Index>(i)) = 1.0;
  }

  conv.flat_start = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < ns; ++p) {
    const std::size_t bus = conv.non_slack[p];
    const bool is_pv = std::find(conv.pv.begin(), conv.pv.end(), bus) != conv.pv.end();
    conv.flat_start(static_cast<Eigen::Index>(p)) = is_pv ? vg[bus] : 1.0;
  }
  for (std::size_t p = 0; p < ns; ++p) conv.state_names.push_back("ReV_bus" + std::to_string(mpc.buses[conv.non_slack[p]].id));
  for (std::size_t p = 0; p < ns; ++p) conv.state_names.push_back("ImV_bus" + std::to_string(mpc.buses[conv.non_slack[p]].id));

  conv.system = QuadraticSystem(std::move(q), std::move(l), std::move(u), std::move(e));
  return conv;
}

Polytope flow_polytope(const MatpowerCase& mpc, const Conversion& conv, double bound, const Vector* center) {
  if (!(bound > 0.0)) throw std::invalid_argument("flow bound B must be positive");
  const auto idx = bus_index(mpc);
  const std::size_t nb = mpc.buses.size();
  const std::size_t ns = conv.non_slack.size();
  const auto n = static_cast<Eigen::Index>(2 * ns);
  if (center && center->size() != n) throw std::invalid_argument("flow_polytope: center has wrong size");
  std::vector<std::ptrdiff_t> pos(nb, -1);
  for (std::size_t p = 0; p < ns; ++p) pos[conv.non_slack[p]] = static_cast<std::ptrdiff_t>(p);

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (const auto& br : mpc.branches) {
    if (!br.in_service) continue;
    const std::size_t f = idx.at(br.from), t = idx.at(br.to);
    for (int part = 0; part < 2; ++part) {
      const double fixed = part == 0 ? conv.slack_voltage.real() : conv.slack_voltage.imag();
      for (int dir = 0; dir < 2; ++dir) {
        const std::size_t plus = dir == 0 ? f : t, minus = dir == 0 ? t : f;
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        double constant = 0.0;  // slack contribution to the difference
        if (pos[plus] >= 0) a(pos[plus] + part * static_cast<Eigen::Index>(ns)) += 1.0;
        else constant += fixed;
        if (pos[minus] >= 0) a(pos[minus] + part * static_cast<Eigen::Index>(ns)) -= 1.0;
        else constant -= fixed;
        rows.push_back(a);
        rhs.push_back(center ? bound + a.dot(*center) : bound - constant);
      }
    }
  }
  Polytope poly;
  poly.a.resize(static_cast<Eigen::Index>(rows.size()), n);
  poly.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    poly.a.row(static_cast<Eigen::Index>(k)) = rows[k];
    poly.b(static_cast<Eigen::Index>(k)) = rhs[k];
  }
  return poly;
}

ConvertedCase convert_case(const MatpowerCase& mpc, double bound, std::vector<std::size_t> mask, Center center) {
  ConvertedCase out;
  out.conversion = to_quadratic_system(mpc, std::move(mask));
  const auto& conv = out.conversion;
  out.forecast = newton_solve(conv.system, conv.system.u_star(), conv.flat_start);
  const Vector* c = nullptr;
  if (center == Center::kForecast) {
    if (!out.forecast.converged) {
      throw std::runtime_error("forecast power flow did not converge from flat start: " + out.forecast.reason);
    }
    c = &out.forecast.solution;
  }
  out.file.name = mpc.name;
  out.file.system = conv.system;
  out.file.polytope = flow_polytope(mpc, conv, bound, c);
  out.file.x0 = conv.flat_start;
  out.file.legend = conv.legend;
  return out;
}

}  // namespace qmargin::matpower
