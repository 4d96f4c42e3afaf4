#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "origami/json_io.hpp"

namespace testsupport {

using origami::Json;

// Structural equality with numeric tolerance; key order ignored. Categorical
// values must match exactly, numerics within tol after inverse scaling.
inline bool records_close(const Json& a, const Json& b, double tol = 1e-9) {
  if (a.is_object() && b.is_object()) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k) || !records_close(v, b.at(k), tol)) return false;
    }
    return true;
  }
  if (a.is_array() && b.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!records_close(a[i], b[i], tol)) return false;
    }
    return true;
  }
  if (origami::is_json_number(a) && origami::is_json_number(b)) {
    return std::abs(a.get<double>() - b.get<double>()) <= tol;
  }
  return a == b;
}

// Scratch directory cleaned per test run.
inline std::filesystem::path tmpdir(const std::string& name) {
  std::filesystem::path p =
      std::filesystem::temp_directory_path() / ("origami_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
