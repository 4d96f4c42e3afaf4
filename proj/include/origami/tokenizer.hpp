#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "origami/errors.hpp"
#include "origami/json_io.hpp"
#include "origami/rng.hpp"

namespace origami {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

using TokenId = std::int32_t;

// Structural token ids are fixed so artifacts stay stable across runs.
enum Structural : TokenId {
  kPad = 0,
  kStart = 1,
  kEnd = 2,
  kObjStart = 3,
  kObjEnd = 4,
  kArrStart = 5,
  kArrEnd = 6,
  kNum = 7,
};
constexpr TokenId kNumStructural = 8;

class VocabSpec {
 public:
  TokenId key_base() const { return kNumStructural; }
  TokenId value_base() const {
    return kNumStructural + static_cast<TokenId>(key_names_.size());
  }
  TokenId size() const {
    return value_base() + static_cast<TokenId>(value_literals_.size());
  }
  std::size_t key_count() const { return key_names_.size(); }
  std::size_t value_count() const { return value_literals_.size(); }

  bool is_structural(TokenId id) const { return id >= 0 && id < kNumStructural; }
  bool is_key(TokenId id) const { return id >= key_base() && id < value_base(); }
  bool is_value(TokenId id) const { return id >= value_base() && id < size(); }

  TokenId add_key(const std::string& name) {
    auto it = key_to_id_.find(name);
    if (it != key_to_id_.end()) return it->second;
    if (!value_literals_.empty()) {
      throw Error("vocabulary: all keys must be added before any value");
    }
    TokenId id = key_base() + static_cast<TokenId>(key_names_.size());
    key_names_.push_back(name);
    key_to_id_.emplace(name, id);
    return id;
  }

  TokenId add_value(const Json& literal) {
    std::string key = primitive_key(literal);
    auto it = value_to_id_.find(key);
    if (it != value_to_id_.end()) return it->second;
    // value_base shifts as keys are added, so store ordinal and offset later.
    TokenId ordinal = static_cast<TokenId>(value_literals_.size());
    value_literals_.push_back(literal);
    value_to_id_.emplace(std::move(key), ordinal);
    return value_base() + ordinal;
  }

  std::optional<TokenId> find_key(const std::string& name) const {
    auto it = key_to_id_.find(name);
    if (it == key_to_id_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<TokenId> find_value(const Json& literal) const {
    auto it = value_to_id_.find(primitive_key(literal));
    if (it == value_to_id_.end()) return std::nullopt;
    return value_base() + it->second;
  }

  const std::string& key_name(TokenId id) const {
    return key_names_.at(static_cast<std::size_t>(id - key_base()));
  }
  const Json& value_literal(TokenId id) const {
    return value_literals_.at(static_cast<std::size_t>(id - value_base()));
  }
  const std::vector<std::string>& key_names() const { return key_names_; }
  const std::vector<Json>& value_literals() const { return value_literals_; }

  static const char* structural_name(TokenId id) {
    static const char* names[kNumStructural] = {"PAD",       "START",   "END",
                                                "OBJ_START", "OBJ_END", "ARR_START",
                                                "ARR_END",   "NUM"};
    return names[id];
  }

  std::string token_name(TokenId id) const {
    if (is_structural(id)) return structural_name(id);
    if (is_key(id)) return "Key(" + key_name(id) + ")";
    if (is_value(id)) return "Val(" + value_literal(id).dump() + ")";
    return "<invalid:" + std::to_string(id) + ">";
  }

  Json to_json() const {
    Json j;
    j["format"] = "origami-vocab";
    j["version"] = 1;
    j["structural"] = Json::object();
    for (TokenId id = 0; id < kNumStructural; ++id) {
      j["structural"][structural_name(id)] = id;
    }
    j["keys"] = key_names_;
    j["values"] = value_literals_;
    return j;
  }

  static VocabSpec from_json(const Json& j) {
    if (!j.contains("format") || j["format"] != "origami-vocab") {
      throw IoError("not a vocabulary artifact");
    }
    if (j["version"] != 1) throw IoError("unsupported vocabulary version");
    VocabSpec v;
    for (const auto& name : j["keys"]) v.add_key(name.get<std::string>());
    for (const auto& lit : j["values"]) v.add_value(lit);
    return v;
  }

 private:
  std::vector<std::string> key_names_;
  std::unordered_map<std::string, TokenId> key_to_id_;
  std::vector<Json> value_literals_;
  std::unordered_map<std::string, TokenId> value_to_id_;  // ordinal, not id
};

// ---------------------------------------------------------------------------
// Key paths
// ---------------------------------------------------------------------------

struct PathElement {
  bool is_index = false;
  std::uint32_t index = 0;  // when is_index
  TokenId key_id = -1;      // vocab id of the key token, when resolved
  std::string key;          // when !is_index

  static PathElement Key(std::string name, TokenId id = -1) {
    PathElement e;
    e.key = std::move(name);
    e.key_id = id;
    return e;
  }
  static PathElement Index(std::uint32_t i) {
    PathElement e;
    e.is_index = true;
    e.index = i;
    return e;
  }
  bool operator==(const PathElement& o) const {
    if (is_index != o.is_index) return false;
    return is_index ? index == o.index : key == o.key;
  }
};

using KeyPath = std::vector<PathElement>;

inline std::string path_to_string(const KeyPath& p) {
  std::string s;
  for (const auto& e : p) {
    if (!s.empty()) s += '.';
    s += e.is_index ? std::to_string(e.index) : e.key;
  }
  return s;
}

// A key path with array indices replaced by a wildcard; identifies one
// schema/scaler slot. Ordered so std::map iteration is deterministic.
struct SchemaPath {
  struct Elem {
    bool wild = false;
    std::string key;
    friend bool operator<(const Elem& a, const Elem& b) {
      if (a.wild != b.wild) return a.wild < b.wild;
      return a.key < b.key;
    }
    friend bool operator==(const Elem& a, const Elem& b) {
      return a.wild == b.wild && a.key == b.key;
    }
  };
  std::vector<Elem> elems;

  bool empty() const { return elems.empty(); }
  std::size_t depth() const { return elems.size(); }
  SchemaPath child_key(const std::string& k) const {
    SchemaPath p = *this;
    p.elems.push_back({false, k});
    return p;
  }
  SchemaPath child_wild() const {
    SchemaPath p = *this;
    p.elems.push_back({true, ""});
    return p;
  }
  SchemaPath parent() const {
    SchemaPath p = *this;
    p.elems.pop_back();
    return p;
  }
  std::string to_string() const {
    if (elems.empty()) return "$";
    std::string s = "$";
    for (const auto& e : elems) {
      s += '.';
      s += e.wild ? "*" : e.key;
    }
    return s;
  }
  friend bool operator<(const SchemaPath& a, const SchemaPath& b) {
    return a.elems < b.elems;
  }
  friend bool operator==(const SchemaPath& a, const SchemaPath& b) {
    return a.elems == b.elems;
  }
};

inline SchemaPath wildcarded(const KeyPath& p) {
  SchemaPath sp;
  sp.elems.reserve(p.size());
  for (const auto& e : p) {
    if (e.is_index) {
      sp.elems.push_back({true, ""});
    } else {
      sp.elems.push_back({false, e.key});
    }
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Numeric scalers
// ---------------------------------------------------------------------------

struct ScalerEntry {
  double mean = 0.0;
  double stddev = 1.0;  // 1.0 for constant columns
  double min = 0.0;
  double max = 0.0;
  std::uint64_t count = 0;
  std::uint64_t distinct = 0;

  double scale(double x) const { return (x - mean) / stddev; }
  double unscale(double z) const { return z * stddev + mean; }
};

struct NumericScalers {
  std::map<SchemaPath, ScalerEntry> by_path;

  bool has(const SchemaPath& p) const { return by_path.count(p) != 0; }
  const ScalerEntry* find(const SchemaPath& p) const {
    auto it = by_path.find(p);
    return it == by_path.end() ? nullptr : &it->second;
  }

  Json to_json() const {
    Json j;
    j["format"] = "origami-scalers";
    j["version"] = 1;
    Json entries = Json::array();
    for (const auto& [path, s] : by_path) {
      Json e;
      e["path"] = Json::array();
      for (const auto& el : path.elems) {
        if (el.wild) {
          e["path"].push_back(Json{{"index", true}});
        } else {
          e["path"].push_back(Json{{"key", el.key}});
        }
      }
      e["mean"] = s.mean;
      e["std"] = s.stddev;
      e["min"] = s.min;
      e["max"] = s.max;
      e["count"] = s.count;
      e["distinct"] = s.distinct;
      entries.push_back(std::move(e));
    }
    j["entries"] = std::move(entries);
    return j;
  }

  static NumericScalers from_json(const Json& j) {
    if (!j.contains("format") || j["format"] != "origami-scalers") {
      throw IoError("not a scaler artifact");
    }
    NumericScalers out;
    for (const auto& e : j["entries"]) {
      SchemaPath p;
      for (const auto& el : e["path"]) {
        if (el.contains("index")) {
          p.elems.push_back({true, ""});
        } else {
          p.elems.push_back({false, el["key"].get<std::string>()});
        }
      }
      ScalerEntry s;
      s.mean = e["mean"].get<double>();
      s.stddev = e["std"].get<double>();
      s.min = e["min"].get<double>();
      s.max = e["max"].get<double>();
      s.count = e["count"].get<std::uint64_t>();
      s.distinct = e["distinct"].get<std::uint64_t>();
      out.by_path.emplace(std::move(p), s);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Token streams
// ---------------------------------------------------------------------------

struct TokenStream {
  std::vector<TokenId> tokens;
  std::vector<KeyPath> paths;                      // aligned with tokens
  std::vector<std::optional<double>> continuous;   // set iff token == NUM

  std::size_t length() const { return tokens.size(); }
};

struct TokenizerOptions {
  std::uint64_t tau = 64;        // distinct-value threshold
  std::uint32_t i_max = 256;     // array position capacity
};

namespace detail {

// Distinct numeric values per wildcarded path; decides scaled vs categorical.
inline void collect_numeric_distinct(
    const Json& value, const SchemaPath& path,
    std::map<SchemaPath, std::set<std::uint64_t>>& distinct) {
  if (value.is_object()) {
    for (const auto& [k, v] : value.items()) {
      collect_numeric_distinct(v, path.child_key(k), distinct);
    }
  } else if (value.is_array()) {
    SchemaPath elem = path.child_wild();
    for (const auto& v : value) collect_numeric_distinct(v, elem, distinct);
  } else if (is_json_number(value)) {
    double d = number_as_double(value);
    if (!std::isfinite(d)) {
      throw Error("non-finite number at " + path.to_string());
    }
    distinct[path].insert(canonical_number_bits(d));
  }
}

inline std::set<SchemaPath> scaled_paths(const std::vector<Json>& corpus,
                                         std::uint64_t tau) {
  std::map<SchemaPath, std::set<std::uint64_t>> distinct;
  for (const Json& rec : corpus) {
    collect_numeric_distinct(rec, SchemaPath{}, distinct);
  }
  std::set<SchemaPath> scaled;
  for (const auto& [path, values] : distinct) {
    if (values.size() > tau) scaled.insert(path);
  }
  return scaled;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vocabulary construction
// ---------------------------------------------------------------------------

inline VocabSpec build_vocab(const std::vector<Json>& corpus,
                             const TokenizerOptions& opts = {}) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  if (opts.tau < 1) throw Error("build_vocab: tau must be >= 1");

  std::set<SchemaPath> scaled = detail::scaled_paths(corpus, opts.tau);

  VocabSpec vocab;
  // Keys first (first occurrence over a full pass), then values, so id ranges
  // stay contiguous. Two walks keep assignment independent of nesting order.
  auto walk_keys = [&](const Json& v, auto&& self) -> void {
    if (v.is_object()) {
      for (const auto& [k, child] : v.items()) {
        vocab.add_key(k);
        self(child, self);
      }
    } else if (v.is_array()) {
      for (const auto& child : v) self(child, self);
    }
  };
  for (const Json& rec : corpus) walk_keys(rec, walk_keys);

  auto walk_values = [&](const Json& v, const SchemaPath& path,
                         auto&& self) -> void {
    if (v.is_object()) {
      for (const auto& [k, child] : v.items()) {
        self(child, path.child_key(k), self);
      }
    } else if (v.is_array()) {
      SchemaPath elem = path.child_wild();
      for (const auto& child : v) self(child, elem, self);
    } else if (is_json_number(v)) {
      if (!scaled.count(path)) vocab.add_value(v);
    } else {
      vocab.add_value(v);  // strings, booleans, null
    }
  };
  for (const Json& rec : corpus) walk_values(rec, SchemaPath{}, walk_values);
  return vocab;
}

inline NumericScalers fit_scalers(const std::vector<Json>& corpus,
                                  const TokenizerOptions& opts = {}) {
  if (corpus.empty()) throw Error("fit_scalers: empty corpus");
  std::set<SchemaPath> scaled = detail::scaled_paths(corpus, opts.tau);

  struct Acc {
    double mean = 0.0, m2 = 0.0, min = 0.0, max = 0.0;
    std::uint64_t n = 0;
    std::set<std::uint64_t> distinct;
    void add(double x) {
      if (n == 0) {
        min = max = x;
      } else {
        min = std::min(min, x);
        max = std::max(max, x);
      }
      ++n;
      double delta = x - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (x - mean);
      distinct.insert(canonical_number_bits(x));
    }
  };
  std::map<SchemaPath, Acc> accs;

  auto walk = [&](const Json& v, const SchemaPath& path, auto&& self) -> void {
    if (v.is_object()) {
      for (const auto& [k, child] : v.items()) {
        self(child, path.child_key(k), self);
      }
    } else if (v.is_array()) {
      SchemaPath elem = path.child_wild();
      for (const auto& child : v) self(child, elem, self);
    } else if (is_json_number(v) && scaled.count(path)) {
      accs[path].add(number_as_double(v));
    }
  };
  for (const Json& rec : corpus) walk(rec, SchemaPath{}, walk);

  NumericScalers out;
  for (const auto& [path, a] : accs) {
    ScalerEntry s;
    s.mean = a.mean;
    double var = a.n > 0 ? a.m2 / static_cast<double>(a.n) : 0.0;
    double sd = std::sqrt(var);
    s.stddev = sd > 0.0 ? sd : 1.0;  // constant column: x~ is identically 0
    s.min = a.min;
    s.max = a.max;
    s.count = a.n;
    s.distinct = a.distinct.size();
    out.by_path.emplace(path, s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoding / decoding
// ---------------------------------------------------------------------------

namespace detail {

struct Encoder {
  const VocabSpec& vocab;
  const NumericScalers& scalers;
  const TokenizerOptions& opts;
  TokenStream out;

  void emit(TokenId tok, const KeyPath& path,
            std::optional<double> cont = std::nullopt) {
    out.tokens.push_back(tok);
    out.paths.push_back(path);
    out.continuous.push_back(cont);
  }

  void value(const Json& v, const KeyPath& path, const SchemaPath& wpath) {
    if (v.is_object()) {
      emit(kObjStart, path);
      members(v, path, wpath);
      emit(kObjEnd, path);
    } else if (v.is_array()) {
      emit(kArrStart, path);
      std::uint32_t i = 0;
      SchemaPath elem_w = wpath.child_wild();
      for (const auto& child : v) {
        if (i >= opts.i_max) {
          throw Error("encode: array at " + path_to_string(path) +
                      " exceeds I_max=" + std::to_string(opts.i_max));
        }
        KeyPath elem_path = path;
        elem_path.push_back(PathElement::Index(i));
        value(child, elem_path, elem_w);
        ++i;
      }
      emit(kArrEnd, path);
    } else if (is_json_number(v) && scalers.has(wpath)) {
      double d = number_as_double(v);
      if (!std::isfinite(d)) {
        throw Error("encode: non-finite number at " + path_to_string(path));
      }
      emit(kNum, path, scalers.find(wpath)->scale(d));
    } else {
      auto id = vocab.find_value(v);
      if (!id) {
        throw VocabularyMiss("encode: unknown value " + v.dump() + " at " +
                             path_to_string(path));
      }
      emit(*id, path);
    }
  }

  void members(const Json& obj, const KeyPath& container,
               const SchemaPath& wcontainer) {
    for (const auto& [k, child] : obj.items()) {
      auto key_id = vocab.find_key(k);
      if (!key_id) {
        throw VocabularyMiss("encode: unknown key \"" + k + "\" at " +
                             path_to_string(container));
      }
      emit(*key_id, container);
      KeyPath child_path = container;
      child_path.push_back(PathElement::Key(k, *key_id));
      value(child, child_path, wcontainer.child_key(k));
    }
  }
};

}  // namespace detail

inline TokenStream encode(const Json& record, const VocabSpec& vocab,
                          const NumericScalers& scalers,
                          const TokenizerOptions& opts = {}) {
  if (!record.is_object()) throw Error("encode: record must be a JSON object");
  detail::Encoder enc{vocab, scalers, opts, {}};
  enc.emit(kStart, {});
  enc.members(record, {}, SchemaPath{});
  enc.emit(kEnd, {});
  return std::move(enc.out);
}

inline Json decode(const TokenStream& stream, const VocabSpec& vocab,
                   const NumericScalers& scalers) {
  std::size_t pos = 0;
  const std::size_t n = stream.length();
  auto next = [&]() -> TokenId {
    if (pos >= n) throw StructureError("decode: truncated stream", pos);
    return stream.tokens[pos];
  };

  // Parses the members of an object until the given closing token.
  auto parse_value = [&](const SchemaPath& wpath, auto&& self) -> Json {
    TokenId tok = next();
    if (tok == kObjStart) {
      ++pos;
      Json obj = Json::object();
      while (next() != kObjEnd) {
        TokenId key_tok = next();
        if (!vocab.is_key(key_tok)) {
          throw StructureError("decode: expected key token", pos);
        }
        ++pos;
        const std::string& k = vocab.key_name(key_tok);
        obj[k] = self(wpath.child_key(k), self);
      }
      ++pos;  // OBJ_END
      return obj;
    }
    if (tok == kArrStart) {
      ++pos;
      Json arr = Json::array();
      SchemaPath elem = wpath.child_wild();
      while (next() != kArrEnd) arr.push_back(self(elem, self));
      ++pos;  // ARR_END
      return arr;
    }
    if (tok == kNum) {
      const ScalerEntry* s = scalers.find(wpath);
      if (!s) {
        throw StructureError("decode: NUM at unscaled path " + wpath.to_string(),
                             pos);
      }
      if (!stream.continuous[pos].has_value()) {
        throw StructureError("decode: NUM without continuous value", pos);
      }
      double v = s->unscale(*stream.continuous[pos]);
      ++pos;
      return v;
    }
    if (vocab.is_value(tok)) {
      ++pos;
      return vocab.value_literal(tok);
    }
    throw StructureError("decode: unexpected token " + vocab.token_name(tok),
                         pos);
  };

  if (n < 2 || stream.tokens[0] != kStart) {
    throw StructureError("decode: stream must begin with START", 0);
  }
  ++pos;
  Json record = Json::object();
  while (next() != kEnd) {
    TokenId key_tok = next();
    if (!vocab.is_key(key_tok)) {
      throw StructureError("decode: expected key token at top level", pos);
    }
    ++pos;
    const std::string& k = vocab.key_name(key_tok);
    record[k] = parse_value(SchemaPath{}.child_key(k), parse_value);
  }
  ++pos;  // END
  if (pos != n) throw StructureError("decode: trailing tokens", pos);
  return record;
}

// ---------------------------------------------------------------------------
// Key-order shuffling
// ---------------------------------------------------------------------------

inline Json shuffle_keys(const Json& record, Rng& rng) {
  if (record.is_object()) {
    std::vector<const std::string*> keys;
    keys.reserve(record.size());
    for (const auto& item : record.items()) keys.push_back(&item.key());
    // Fisher-Yates over sibling keys; children shuffled recursively.
    for (std::size_t i = keys.size(); i > 1; --i) {
      std::size_t j = uniform_index(rng, i);
      std::swap(keys[i - 1], keys[j]);
    }
    Json out = Json::object();
    for (const std::string* k : keys) out[*k] = shuffle_keys(record.at(*k), rng);
    return out;
  }
  if (record.is_array()) {
    Json out = Json::array();
    for (const auto& child : record) out.push_back(shuffle_keys(child, rng));
    return out;
  }
  return record;
}

// Order-insensitive structural equality (used by shuffle invariants).
inline bool equal_unordered(const Json& a, const Json& b) {
  if (a.is_object() && b.is_object()) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k) || !equal_unordered(v, b.at(k))) return false;
    }
    return true;
  }
  if (a.is_array() && b.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!equal_unordered(a[i], b[i])) return false;
    }
    return true;
  }
  return a == b;
}

}  // namespace origami
