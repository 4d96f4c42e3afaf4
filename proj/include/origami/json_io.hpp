#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "origami/errors.hpp"

namespace origami {

// Records keep their key order, so the ordered variant is used everywhere.
using Json = nlohmann::ordered_json;

inline bool is_json_number(const Json& v) {
  return v.is_number_integer() || v.is_number_unsigned() || v.is_number_float();
}

inline double number_as_double(const Json& v) { return v.get<double>(); }

// Canonical f64 bit pattern used as a number's identity: integers and
// equal-valued floats collapse, -0.0 collapses onto 0.0.
inline std::uint64_t canonical_number_bits(double d) {
  if (d == 0.0) d = 0.0;
  std::uint64_t bits = 0;
  std::memcpy(&bits, &d, sizeof bits);
  return bits;
}

inline bool is_integral_value(double d) {
  return std::isfinite(d) && d == std::floor(d);
}

// Stable identity string for a primitive value (tag + canonical payload).
inline std::string primitive_key(const Json& v) {
  if (v.is_null()) return "z";
  if (v.is_boolean()) return v.get<bool>() ? "b1" : "b0";
  if (is_json_number(v)) {
    char buf[2 + 16 + 1];
    std::snprintf(buf, sizeof buf, "n%016llx",
                  static_cast<unsigned long long>(
                      canonical_number_bits(number_as_double(v))));
    return buf;
  }
  return "s" + v.get<std::string>();
}

inline std::vector<Json> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Json> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json rec = Json::parse(line, nullptr, false);
    if (rec.is_discarded()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed JSON");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline void save_jsonl(const std::string& path, const std::vector<Json>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Json& rec : records) out << rec.dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline void save_json(const std::string& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw IoError(path + ": malformed JSON");
  return doc;
}

}  // namespace origami
