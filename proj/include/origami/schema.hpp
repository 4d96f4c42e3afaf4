#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "origami/errors.hpp"
#include "origami/grammar.hpp"
#include "origami/json_io.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

// ---------------------------------------------------------------------------
// Derived schema
// ---------------------------------------------------------------------------

enum class Kind : std::uint8_t {
  Null,
  Boolean,
  Integer,
  Number,
  String,
  Object,
  Array
};

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Null: return "null";
    case Kind::Boolean: return "boolean";
    case Kind::Integer: return "integer";
    case Kind::Number: return "number";
    case Kind::String: return "string";
    case Kind::Object: return "object";
    case Kind::Array: return "array";
  }
  return "?";
}

inline Kind value_kind(const Json& v) {
  if (v.is_null()) return Kind::Null;
  if (v.is_boolean()) return Kind::Boolean;
  if (v.is_number_float()) return Kind::Number;
  if (is_json_number(v)) return Kind::Integer;
  if (v.is_string()) return Kind::String;
  if (v.is_object()) return Kind::Object;
  return Kind::Array;
}

struct SchemaEntry {
  std::set<Kind> kinds;
  std::optional<std::vector<Json>> enum_values;  // first-occurrence order
  // object constraints
  std::vector<std::string> observed_keys;        // additionalProperties:false
  std::set<std::string> required_keys;
  // array constraints
  std::uint64_t min_items = 0;
  std::uint64_t max_items = 0;
  bool unique_items = false;
  // numeric constraints
  std::optional<double> minimum, maximum;
  // set by transform_schema_scaled
  bool scaled = false;

  bool has_kind(Kind k) const { return kinds.count(k) != 0; }
  bool integer_only() const {
    return has_kind(Kind::Integer) && !has_kind(Kind::Number);
  }
};

struct DerivedSchema {
  std::map<SchemaPath, SchemaEntry> entries;  // includes the root object at $
  std::uint64_t tau = 64;

  const SchemaEntry* find(const SchemaPath& p) const {
    auto it = entries.find(p);
    return it == entries.end() ? nullptr : &it->second;
  }
  const SchemaEntry& root() const { return entries.at(SchemaPath{}); }
};

namespace detail {

struct SchemaAcc {
  std::set<Kind> kinds;
  std::vector<Json> primitives;              // first occurrence order
  std::set<std::string> primitive_seen;
  std::vector<std::string> observed_keys;
  std::set<std::string> observed_key_set;
  std::optional<std::set<std::string>> required;  // intersection over instances
  std::uint64_t min_items = 0, max_items = 0;
  bool any_array = false;
  bool unique_items = true;
  std::optional<double> minimum, maximum;

  void add_primitive(const Json& v) {
    std::string id = primitive_key(v);
    if (primitive_seen.insert(id).second) primitives.push_back(v);
    if (is_json_number(v)) {
      double d = number_as_double(v);
      minimum = minimum ? std::min(*minimum, d) : d;
      maximum = maximum ? std::max(*maximum, d) : d;
    }
  }
};

inline void derive_walk(const Json& v, const SchemaPath& path,
                        std::map<SchemaPath, SchemaAcc>& accs) {
  SchemaAcc& acc = accs[path];
  acc.kinds.insert(value_kind(v));
  if (v.is_object()) {
    std::set<std::string> instance_keys;
    for (const auto& [k, child] : v.items()) {
      instance_keys.insert(k);
      if (acc.observed_key_set.insert(k).second) acc.observed_keys.push_back(k);
      derive_walk(child, path.child_key(k), accs);
    }
    if (!acc.required) {
      acc.required = instance_keys;
    } else {
      std::set<std::string> inter;
      std::set_intersection(acc.required->begin(), acc.required->end(),
                            instance_keys.begin(), instance_keys.end(),
                            std::inserter(inter, inter.begin()));
      acc.required = std::move(inter);
    }
  } else if (v.is_array()) {
    std::uint64_t len = v.size();
    if (!acc.any_array) {
      acc.min_items = acc.max_items = len;
      acc.any_array = true;
    } else {
      acc.min_items = std::min(acc.min_items, len);
      acc.max_items = std::max(acc.max_items, len);
    }
    std::set<std::string> elems;
    bool unique = true;
    SchemaPath elem_path = path.child_wild();
    for (const auto& child : v) {
      if (!elems.insert(child.dump()).second) unique = false;
      derive_walk(child, elem_path, accs);
    }
    if (!unique) acc.unique_items = false;
  } else {
    acc.add_primitive(v);
  }
}

}  // namespace detail

inline DerivedSchema derive_schema(const std::vector<Json>& corpus,
                                   std::uint64_t tau = 64) {
  if (corpus.empty()) throw Error("derive_schema: empty corpus");
  std::map<SchemaPath, detail::SchemaAcc> accs;
  for (const Json& rec : corpus) {
    if (!rec.is_object()) throw Error("derive_schema: record must be an object");
    detail::derive_walk(rec, SchemaPath{}, accs);
  }

  DerivedSchema schema;
  schema.tau = tau;
  for (auto& [path, acc] : accs) {
    SchemaEntry e;
    e.kinds = acc.kinds;
    if (!acc.primitives.empty() && acc.primitives.size() <= tau) {
      e.enum_values = std::move(acc.primitives);
    }
    e.observed_keys = std::move(acc.observed_keys);
    if (acc.required) e.required_keys = std::move(*acc.required);
    if (acc.any_array) {
      e.min_items = acc.min_items;
      e.max_items = acc.max_items;
      e.unique_items = acc.unique_items;
    }
    e.minimum = acc.minimum;
    e.maximum = acc.maximum;
    schema.entries.emplace(path, std::move(e));
  }
  return schema;
}

// Maps numeric constraints into standardized space for keys with a scaler;
// enum constraints on those keys are dropped.
inline DerivedSchema transform_schema_scaled(const DerivedSchema& schema,
                                             const NumericScalers& scalers) {
  DerivedSchema out = schema;
  for (const auto& [path, scaler] : scalers.by_path) {
    auto it = out.entries.find(path);
    if (it == out.entries.end()) {
      throw Error("transform_schema_scaled: scaler for unknown path " +
                  path.to_string());
    }
    SchemaEntry& e = it->second;
    e.scaled = true;
    e.enum_values.reset();
    if (e.minimum) e.minimum = scaler.scale(*e.minimum);
    if (e.maximum) e.maximum = scaler.scale(*e.maximum);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compiled mask table
// ---------------------------------------------------------------------------

// Row r > 0 holds the union of key-position and value-position constraints of
// one wildcarded path; the grammar mask, intersected at use, selects which of
// the two applies. Row 0 is all-ones and backs positions outside the schema.
struct SchemaMaskTable {
  std::int32_t vocab_size = 0;
  std::vector<std::uint8_t> rows;            // (P+1) x |V|, row-major
  std::map<SchemaPath, std::int32_t> row_of;

  std::int32_t row_count() const {
    return static_cast<std::int32_t>(rows.size()) / std::max(vocab_size, 1);
  }
  const std::uint8_t* row(std::int32_t r) const {
    return rows.data() + static_cast<std::size_t>(r) * vocab_size;
  }
  std::int32_t row_index(const SchemaPath& p) const {
    auto it = row_of.find(p);
    return it == row_of.end() ? 0 : it->second;
  }
};

inline SchemaMaskTable compile_mask_table(const DerivedSchema& schema,
                                          const VocabSpec& vocab) {
  SchemaMaskTable table;
  table.vocab_size = vocab.size();
  const std::size_t v = static_cast<std::size_t>(vocab.size());
  table.rows.assign(v, 1);  // row 0: all ones

  std::int32_t next_row = 1;
  for (const auto& [path, entry] : schema.entries) {
    table.row_of.emplace(path, next_row++);
  }
  table.rows.resize(static_cast<std::size_t>(next_row) * v, 0);

  for (const auto& [path, entry] : schema.entries) {
    std::uint8_t* row =
        table.rows.data() + static_cast<std::size_t>(table.row_of[path]) * v;
    // Closing delimiters are never restricted by path; count-dependent rules
    // (required keys, array bounds) are enforced by the sampler's tracker.
    row[kEnd] = 1;
    row[kObjEnd] = 1;
    row[kArrEnd] = 1;

    if (entry.has_kind(Kind::Object)) {
      row[kObjStart] = 1;
      for (const std::string& k : entry.observed_keys) {
        if (auto id = vocab.find_key(k)) row[*id] = 1;
      }
    }
    if (entry.has_kind(Kind::Array)) row[kArrStart] = 1;
    if (entry.scaled) row[kNum] = 1;

    if (entry.enum_values) {
      for (const Json& lit : *entry.enum_values) {
        if (auto id = vocab.find_value(lit)) row[*id] = 1;
      }
      continue;
    }
    // No enum: admit value tokens by kind; numeric tokens additionally pass
    // the observed bounds, and scaled paths route numerics through NUM only.
    for (TokenId id = vocab.value_base(); id < vocab.size(); ++id) {
      const Json& lit = vocab.value_literal(id);
      bool ok = false;
      switch (value_kind(lit)) {
        case Kind::Null:
          ok = entry.has_kind(Kind::Null);
          break;
        case Kind::Boolean:
          ok = entry.has_kind(Kind::Boolean);
          break;
        case Kind::String:
          ok = entry.has_kind(Kind::String);
          break;
        case Kind::Integer:
        case Kind::Number: {
          if (entry.scaled) break;
          double d = number_as_double(lit);
          bool kind_ok = is_integral_value(d)
                             ? (entry.has_kind(Kind::Integer) ||
                                entry.has_kind(Kind::Number))
                             : entry.has_kind(Kind::Number);
          ok = kind_ok && (!entry.minimum || d >= *entry.minimum) &&
               (!entry.maximum || d <= *entry.maximum);
          break;
        }
        default:
          break;
      }
      if (ok) row[id] = 1;
    }
  }
  return table;
}

// Row index used when deciding the token after position t. Derived from the
// stored path of the following token; END resolves through the root row, the
// position after the final token through row 0.
inline std::vector<std::int32_t> schema_rows_for_sequence(
    const TokenStream& stream, const SchemaMaskTable& table) {
  std::vector<std::int32_t> rows(stream.length(), 0);
  for (std::size_t t = 0; t + 1 < stream.length(); ++t) {
    rows[t] = table.row_index(wildcarded(stream.paths[t + 1]));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Post-processing of generated numerics
// ---------------------------------------------------------------------------

// Clip to bounds, snap to the nearest enum value, round integer-kind keys.
// Constraints must come from the original (pre-transform) schema.
inline Json postprocess_value(double value, const SchemaEntry& entry) {
  double x = value;
  if (entry.minimum) x = std::max(x, *entry.minimum);
  if (entry.maximum) x = std::min(x, *entry.maximum);

  if (entry.enum_values) {
    bool found = false;
    double best = 0.0;
    for (const Json& lit : *entry.enum_values) {
      if (!is_json_number(lit)) continue;
      double cand = number_as_double(lit);
      double d = std::abs(x - cand);
      double bd = std::abs(x - best);
      if (!found || d < bd || (d == bd && cand < best)) {
        best = cand;
        found = true;
      }
    }
    if (found) x = best;
  } else if (entry.integer_only()) {
    x = std::round(x);  // halves away from zero
  }

  if (entry.integer_only() && is_integral_value(x) &&
      std::abs(x) <= 9.007199254740992e15) {
    return Json(static_cast<std::int64_t>(x));
  }
  return Json(x);
}

// Applies postprocess_value to every numeric leaf, recursively.
inline Json postprocess_record(const Json& record, const DerivedSchema& original) {
  auto walk = [&](const Json& v, const SchemaPath& path, auto&& self) -> Json {
    if (v.is_object()) {
      Json out = Json::object();
      for (const auto& [k, child] : v.items()) {
        out[k] = self(child, path.child_key(k), self);
      }
      return out;
    }
    if (v.is_array()) {
      Json out = Json::array();
      SchemaPath elem = path.child_wild();
      for (const auto& child : v) out.push_back(self(child, elem, self));
      return out;
    }
    if (is_json_number(v)) {
      const SchemaEntry* e = original.find(path);
      if (e) return postprocess_value(number_as_double(v), *e);
    }
    return v;
  };
  return walk(record, SchemaPath{}, walk);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::string path;
  std::string code;    // additionalProperties, type, enum, minimum, ...
  std::string detail;
};

namespace detail {

inline void validate_walk(const Json& v, const SchemaPath& path,
                          const DerivedSchema& schema,
                          std::vector<Violation>& out) {
  const SchemaEntry* e = schema.find(path);
  if (!e) {
    out.push_back({path.to_string(), "additionalProperties", "unknown path"});
    return;
  }
  Kind k = value_kind(v);
  bool kind_ok = e->has_kind(k) ||
                 (k == Kind::Integer && e->has_kind(Kind::Number)) ||
                 (k == Kind::Number && is_integral_value(number_as_double(v)) &&
                  e->has_kind(Kind::Integer));
  if (!kind_ok) {
    out.push_back({path.to_string(), "type",
                   std::string(kind_name(k)) + " not allowed"});
  }
  if (v.is_object()) {
    std::set<std::string> present;
    for (const auto& [key, child] : v.items()) {
      present.insert(key);
      if (!std::count(e->observed_keys.begin(), e->observed_keys.end(), key)) {
        out.push_back({path.to_string(), "additionalProperties", key});
      } else {
        validate_walk(child, path.child_key(key), schema, out);
      }
    }
    for (const std::string& req : e->required_keys) {
      if (!present.count(req)) {
        out.push_back({path.to_string(), "required", req});
      }
    }
    return;
  }
  if (v.is_array()) {
    if (v.size() < e->min_items) {
      out.push_back({path.to_string(), "minItems", std::to_string(v.size())});
    }
    if (v.size() > e->max_items) {
      out.push_back({path.to_string(), "maxItems", std::to_string(v.size())});
    }
    if (e->unique_items) {
      std::set<std::string> seen;
      for (const auto& child : v) {
        if (!seen.insert(child.dump()).second) {
          out.push_back({path.to_string(), "uniqueItems", child.dump()});
          break;
        }
      }
    }
    SchemaPath elem = path.child_wild();
    for (const auto& child : v) validate_walk(child, elem, schema, out);
    return;
  }
  // Primitive checks.
  if (e->enum_values) {
    bool hit = false;
    for (const Json& lit : *e->enum_values) {
      if (lit == v) {
        hit = true;
        break;
      }
    }
    if (!hit) out.push_back({path.to_string(), "enum", v.dump()});
  }
  if (is_json_number(v)) {
    double d = number_as_double(v);
    if (e->minimum && d < *e->minimum) {
      out.push_back({path.to_string(), "minimum", v.dump()});
    }
    if (e->maximum && d > *e->maximum) {
      out.push_back({path.to_string(), "maximum", v.dump()});
    }
  }
}

}  // namespace detail

inline std::vector<Violation> validate(const Json& record,
                                       const DerivedSchema& schema) {
  std::vector<Violation> out;
  if (!record.is_object()) {
    out.push_back({"$", "type", "record must be an object"});
    return out;
  }
  detail::validate_walk(record, SchemaPath{}, schema, out);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (JSON Schema draft 2020-12 keyword subset)
// ---------------------------------------------------------------------------

namespace detail {

inline Json schema_entry_to_json(const DerivedSchema& schema,
                                 const SchemaPath& path) {
  const SchemaEntry& e = *schema.find(path);
  Json j = Json::object();
  if (e.kinds.size() == 1) {
    j["type"] = kind_name(*e.kinds.begin());
  } else {
    Json types = Json::array();
    for (Kind k : e.kinds) types.push_back(kind_name(k));
    j["type"] = types;
  }
  if (e.enum_values) j["enum"] = *e.enum_values;
  if (e.has_kind(Kind::Object)) {
    Json props = Json::object();
    for (const std::string& k : e.observed_keys) {
      props[k] = schema_entry_to_json(schema, path.child_key(k));
    }
    j["properties"] = std::move(props);
    if (!e.required_keys.empty()) {
      Json req = Json::array();
      for (const std::string& k : e.required_keys) req.push_back(k);
      j["required"] = std::move(req);
    }
    j["additionalProperties"] = false;
  }
  if (e.has_kind(Kind::Array)) {
    SchemaPath elem = path.child_wild();
    if (schema.find(elem)) {
      j["items"] = schema_entry_to_json(schema, elem);
    }
    j["minItems"] = e.min_items;
    j["maxItems"] = e.max_items;
    if (e.unique_items) j["uniqueItems"] = true;
  }
  if (e.minimum) j["minimum"] = *e.minimum;
  if (e.maximum) j["maximum"] = *e.maximum;
  if (e.scaled) j["x-origami-scaled"] = true;
  return j;
}

inline void schema_entry_from_json(const Json& j, const SchemaPath& path,
                                   DerivedSchema& schema) {
  SchemaEntry e;
  if (j.contains("type")) {
    auto add = [&](const std::string& name) {
      for (int k = 0; k <= static_cast<int>(Kind::Array); ++k) {
        if (name == kind_name(static_cast<Kind>(k))) {
          e.kinds.insert(static_cast<Kind>(k));
        }
      }
    };
    if (j["type"].is_string()) {
      add(j["type"].get<std::string>());
    } else {
      for (const auto& t : j["type"]) add(t.get<std::string>());
    }
  }
  if (j.contains("enum")) {
    e.enum_values = std::vector<Json>(j["enum"].begin(), j["enum"].end());
  }
  if (j.contains("properties")) {
    for (const auto& [k, child] : j["properties"].items()) {
      e.observed_keys.push_back(k);
      schema_entry_from_json(child, path.child_key(k), schema);
    }
  }
  if (j.contains("required")) {
    for (const auto& k : j["required"]) {
      e.required_keys.insert(k.get<std::string>());
    }
  }
  if (j.contains("items")) {
    schema_entry_from_json(j["items"], path.child_wild(), schema);
  }
  if (j.contains("minItems")) e.min_items = j["minItems"].get<std::uint64_t>();
  if (j.contains("maxItems")) e.max_items = j["maxItems"].get<std::uint64_t>();
  if (j.contains("uniqueItems")) e.unique_items = j["uniqueItems"].get<bool>();
  if (j.contains("minimum")) e.minimum = j["minimum"].get<double>();
  if (j.contains("maximum")) e.maximum = j["maximum"].get<double>();
  if (j.contains("x-origami-scaled")) e.scaled = j["x-origami-scaled"].get<bool>();
  schema.entries.emplace(path, std::move(e));
}

}  // namespace detail

inline Json schema_to_json(const DerivedSchema& schema) {
  Json j = detail::schema_entry_to_json(schema, SchemaPath{});
  j["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  j["x-origami-tau"] = schema.tau;
  return j;
}

inline DerivedSchema schema_from_json(const Json& j) {
  DerivedSchema schema;
  if (j.contains("x-origami-tau")) {
    schema.tau = j["x-origami-tau"].get<std::uint64_t>();
  }
  detail::schema_entry_from_json(j, SchemaPath{}, schema);
  return schema;
}

}  // namespace origami
