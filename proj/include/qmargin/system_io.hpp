#pragma once

#include "json.hpp"
#include <optional>
#include <string>
#include <vector>

#include "qmargin/qsys.hpp"

namespace qmargin {

inline constexpr int kSystemSchemaVersion = 1;

/// A system plus its state polytope, as stored on disk.
struct SystemFile {
  std::string name;
  QuadraticSystem system;
  Polytope polytope;
  std::optional<Vector> x0;         // Newton start for the forecast solution
  std::vector<std::string> legend;  // label per u entry, optional
};

/// Throws std::runtime_error naming the offending field.
SystemFile system_from_json(const nlohmann::json& j);
nlohmann::json system_to_json(const SystemFile& f);

SystemFile load_system(const std::string& path);
void save_system(const SystemFile& f, const std::string& path);

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);

}  // namespace qmargin
