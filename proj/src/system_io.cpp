#include "qmargin/system_io.hpp"

#include <fstream>
#include <stdexcept>

namespace qmargin {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::runtime_error("system JSON: field '" + field + "': " + what);
}

const json& field(const json& j, const std::string& key) {
  if (!j.contains(key)) fail(key, "missing");
  return j.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

Vector vector_from(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

Matrix matrix_from(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array of rows");
  if (v.empty()) return Matrix(0, 0);
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string row = where + "[" + std::to_string(i) + "]";
    if (!v[i].is_array()) fail(row, "expected an array");
    if (v[i].size() != cols) fail(row, "ragged row");
    for (std::size_t k = 0; k < cols; ++k) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          number(v[i][k], row + "[" + std::to_string(k) + "]");
    }
  }
  return out;
}

}  // namespace

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

SystemFile system_from_json(const json& j) {
  if (!j.is_object()) fail("<root>", "expected an object");
  const json& version = field(j, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSystemSchemaVersion) {
    fail("schema_version", "unsupported (expected " + std::to_string(kSystemSchemaVersion) + ")");
  }
  const json& nfield = field(j, "n");
  if (!nfield.is_number_integer() || nfield.get<long>() <= 0) fail("n", "expected a positive integer");
  const auto n = static_cast<std::size_t>(nfield.get<long>());

  const json& qj = field(j, "Q");
  if (!qj.is_array()) fail("Q", "expected an array of matrices");
  if (qj.size() != n) fail("Q", "expected " + std::to_string(n) + " matrices");
  std::vector<Matrix> q;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = "Q[" + std::to_string(i) + "]";
    Matrix qi = matrix_from(qj[i], where);
    if (qi.rows() != static_cast<Eigen::Index>(n) || qi.cols() != static_cast<Eigen::Index>(n)) {
      fail(where, "expected " + std::to_string(n) + "x" + std::to_string(n));
    }
    q.push_back(std::move(qi));
  }
  Matrix l = matrix_from(field(j, "L"), "L");
  if (l.rows() != static_cast<Eigen::Index>(n) || l.cols() != static_cast<Eigen::Index>(n)) {
    fail("L", "expected " + std::to_string(n) + "x" + std::to_string(n));
  }
  Vector u = vector_from(field(j, "u_star"), "u_star");
  if (u.size() != static_cast<Eigen::Index>(n)) fail("u_star", "expected n entries");
  Vector e = vector_from(field(j, "e"), "e");
  if (e.size() != static_cast<Eigen::Index>(n)) fail("e", "expected n entries");

  SystemFile out;
  out.polytope.a = matrix_from(field(j, "A"), "A");
  out.polytope.b = vector_from(field(j, "b"), "b");
  if (out.polytope.a.rows() > 0 && out.polytope.a.cols() != static_cast<Eigen::Index>(n)) {
    fail("A", "expected n columns");
  }
  if (out.polytope.b.size() != out.polytope.a.rows()) fail("b", "expected one entry per row of A");

  out.system = QuadraticSystem(std::move(q), std::move(l), std::move(u), std::move(e));
  if (j.contains("name")) {
    if (!j["name"].is_string()) fail("name", "expected a string");
    out.name = j["name"].get<std::string>();
  }
  if (j.contains("x0") && !j["x0"].is_null()) {
    Vector x0 = vector_from(j["x0"], "x0");
    if (x0.size() != static_cast<Eigen::Index>(n)) fail("x0", "expected n entries");
    out.x0 = std::move(x0);
  }
  if (j.contains("legend")) {
    if (!j["legend"].is_array()) fail("legend", "expected an array of strings");
    for (const auto& s : j["legend"]) {
      if (!s.is_string()) fail("legend", "expected an array of strings");
      out.legend.push_back(s.get<std::string>());
    }
  }
  return out;
}

json system_to_json(const SystemFile& f) {
  json j;
  j["schema_version"] = kSystemSchemaVersion;
  if (!f.name.empty()) j["name"] = f.name;
  j["n"] = f.system.dimension();
  json q = json::array();
  for (const auto& qi : f.system.q()) q.push_back(to_json(qi));
  j["Q"] = std::move(q);
  j["L"] = to_json(f.system.l());
  j["u_star"] = to_json(f.system.u_star());
  j["e"] = to_json(f.system.e());
  j["A"] = to_json(f.polytope.a);
  j["b"] = to_json(f.polytope.b);
  if (f.x0) j["x0"] = to_json(*f.x0);
  if (!f.legend.empty()) j["legend"] = f.legend;
  return j;
}

SystemFile load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
  return system_from_json(j);
}

void save_system(const SystemFile& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << system_to_json(f).dump(2) << '\n';
}

}  // namespace qmargin
