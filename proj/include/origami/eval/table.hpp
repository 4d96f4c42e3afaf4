#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "origami/errors.hpp"
#include "origami/json_io.hpp"

namespace origami::eval {

// ---------------------------------------------------------------------------
// Flat table: one column per leaf key path, dot-separated, numeric indices
// ---------------------------------------------------------------------------

struct Cell {
  enum class Kind : std::uint8_t { Missing, Null, Bool, Num, Str };
  Kind kind = Kind::Missing;
  bool b = false;
  double num = 0.0;
  std::string str;

  bool missing() const { return kind == Kind::Missing; }
};

struct FlatTable {
  std::vector<std::string> columns;  // first-occurrence order
  std::unordered_map<std::string, std::size_t> col_index;
  std::vector<std::vector<Cell>> cells;  // [column][row]
  std::size_t n_rows = 0;

  // array structure: per array path, per row, the observed length
  std::vector<std::string> array_paths;
  std::unordered_map<std::string, std::size_t> array_index;
  std::vector<std::vector<std::optional<std::uint32_t>>> array_lengths;

  std::size_t ensure_column(const std::string& name) {
    auto it = col_index.find(name);
    if (it != col_index.end()) return it->second;
    std::size_t idx = columns.size();
    columns.push_back(name);
    col_index.emplace(name, idx);
    cells.emplace_back(n_rows, Cell{});  // backfill as missing
    return idx;
  }

  std::size_t ensure_array(const std::string& path) {
    auto it = array_index.find(path);
    if (it != array_index.end()) return it->second;
    std::size_t idx = array_paths.size();
    array_paths.push_back(path);
    array_index.emplace(path, idx);
    array_lengths.emplace_back(n_rows, std::nullopt);
    return idx;
  }
};

namespace detail {

inline void flatten_value(const Json& v, const std::string& path,
                          FlatTable& table, std::size_t row) {
  if (v.is_object()) {
    for (const auto& [k, child] : v.items()) {
      flatten_value(child, path.empty() ? k : path + "." + k, table, row);
    }
    return;
  }
  if (v.is_array()) {
    std::size_t a = table.ensure_array(path);
    table.array_lengths[a][row] = static_cast<std::uint32_t>(v.size());
    std::uint32_t i = 0;
    for (const auto& child : v) {
      flatten_value(child, path + "." + std::to_string(i), table, row);
      ++i;
    }
    return;
  }
  Cell cell;
  if (v.is_null()) {
    cell.kind = Cell::Kind::Null;
  } else if (v.is_boolean()) {
    cell.kind = Cell::Kind::Bool;
    cell.b = v.get<bool>();
  } else if (is_json_number(v)) {
    cell.kind = Cell::Kind::Num;
    cell.num = number_as_double(v);
  } else {
    cell.kind = Cell::Kind::Str;
    cell.str = v.get<std::string>();
  }
  std::size_t c = table.ensure_column(path);
  table.cells[c][row] = std::move(cell);
}

}  // namespace detail

inline FlatTable flatten(const std::vector<Json>& corpus) {
  FlatTable table;
  for (const Json& rec : corpus) {
    for (auto& col : table.cells) col.emplace_back();
    for (auto& arr : table.array_lengths) arr.emplace_back(std::nullopt);
    std::size_t row = table.n_rows++;
    detail::flatten_value(rec, "", table, row);
  }
  return table;
}

// Reindexes `t` onto the union column schema (`cols`, `arrays`), filling
// structurally missing entries.
inline FlatTable align_to(const FlatTable& t, const std::vector<std::string>& cols,
                          const std::vector<std::string>& arrays) {
  FlatTable out;
  out.n_rows = t.n_rows;
  for (const std::string& c : cols) {
    std::size_t idx = out.columns.size();
    out.columns.push_back(c);
    out.col_index.emplace(c, idx);
    auto it = t.col_index.find(c);
    if (it != t.col_index.end()) {
      out.cells.push_back(t.cells[it->second]);
    } else {
      out.cells.emplace_back(t.n_rows, Cell{});
    }
  }
  for (const std::string& a : arrays) {
    std::size_t idx = out.array_paths.size();
    out.array_paths.push_back(a);
    out.array_index.emplace(a, idx);
    auto it = t.array_index.find(a);
    if (it != t.array_index.end()) {
      out.array_lengths.push_back(t.array_lengths[it->second]);
    } else {
      out.array_lengths.emplace_back(t.n_rows, std::nullopt);
    }
  }
  return out;
}

// Union schema over several tables: first table's order, then new columns in
// order of appearance.
inline void union_schema(const std::vector<const FlatTable*>& tables,
                         std::vector<std::string>& cols,
                         std::vector<std::string>& arrays) {
  std::set<std::string> seen_cols, seen_arrays;
  for (const FlatTable* t : tables) {
    for (const std::string& c : t->columns) {
      if (seen_cols.insert(c).second) cols.push_back(c);
    }
    for (const std::string& a : t->array_paths) {
      if (seen_arrays.insert(a).second) arrays.push_back(a);
    }
  }
}

// ---------------------------------------------------------------------------
// Typed table: presence/type expansion of heterogeneous columns
// ---------------------------------------------------------------------------

enum class SeparationMode { Training, Evaluation };

struct TypedColumn {
  enum class Role : std::uint8_t { Passthrough, Dtype, Num, Cat, Bool, ALen };
  std::string name;
  std::string source;  // flat column, or array path for ALen
  Role role = Role::Passthrough;
  bool numeric = false;

  std::vector<std::uint8_t> defined;  // per row
  std::vector<double> num;            // valid where defined and numeric
  std::vector<std::string> cat;       // valid where defined and categorical

  std::size_t defined_count() const {
    std::size_t n = 0;
    for (auto d : defined) n += d;
    return n;
  }
};

struct TypedTable {
  std::size_t n_rows = 0;
  std::vector<TypedColumn> cols;

  const TypedColumn* find(const std::string& name) const {
    for (const auto& c : cols) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

inline const char* dtype_name(Cell::Kind k) {
  switch (k) {
    case Cell::Kind::Missing: return "missing";
    case Cell::Kind::Null: return "null";
    case Cell::Kind::Bool: return "bool";
    case Cell::Kind::Num: return "num";
    case Cell::Kind::Str: return "cat";
  }
  return "?";
}

// Per-column kind/missingness summary, computable over several tables at once
// so real and synthetic corpora expand into identical typed schemas.
struct TypeSchema {
  struct ColumnInfo {
    std::set<Cell::Kind> kinds;
    bool any_missing = false;
  };
  std::unordered_map<std::string, ColumnInfo> by_column;
};

inline TypeSchema infer_type_schema(const std::vector<const FlatTable*>& tables) {
  TypeSchema schema;
  for (const FlatTable* t : tables) {
    for (std::size_t c = 0; c < t->columns.size(); ++c) {
      TypeSchema::ColumnInfo& info = schema.by_column[t->columns[c]];
      for (const Cell& cell : t->cells[c]) {
        if (cell.missing()) {
          info.any_missing = true;
        } else {
          info.kinds.insert(cell.kind);
        }
      }
    }
  }
  return schema;
}

// Expands heterogeneous or partially present columns into a dtype indicator
// plus per-kind value columns. Training mode leaves homogeneous fully-present
// columns untouched; evaluation mode expands everything and adds array-length
// columns. A shared TypeSchema keeps two tables' expansions aligned.
inline TypedTable type_separate(const FlatTable& flat, SeparationMode mode,
                                const TypeSchema* shared = nullptr) {
  TypedTable out;
  out.n_rows = flat.n_rows;

  for (std::size_t c = 0; c < flat.columns.size(); ++c) {
    const auto& cells = flat.cells[c];
    bool any_missing = false;
    std::set<Cell::Kind> kinds;
    if (shared != nullptr) {
      auto it = shared->by_column.find(flat.columns[c]);
      if (it != shared->by_column.end()) {
        any_missing = it->second.any_missing;
        kinds = it->second.kinds;
      }
    } else {
      for (const Cell& cell : cells) {
        if (cell.missing()) {
          any_missing = true;
        } else {
          kinds.insert(cell.kind);
        }
      }
    }
    bool homogeneous =
        !any_missing && kinds.size() == 1 && !kinds.count(Cell::Kind::Null);

    if (mode == SeparationMode::Training && homogeneous) {
      TypedColumn col;
      col.name = flat.columns[c];
      col.source = flat.columns[c];
      col.role = TypedColumn::Role::Passthrough;
      col.numeric = kinds.count(Cell::Kind::Num) != 0;
      col.defined.assign(out.n_rows, 1);
      if (col.numeric) {
        col.num.resize(out.n_rows);
        for (std::size_t r = 0; r < out.n_rows; ++r) col.num[r] = cells[r].num;
      } else {
        col.cat.resize(out.n_rows);
        for (std::size_t r = 0; r < out.n_rows; ++r) {
          col.cat[r] = cells[r].kind == Cell::Kind::Bool
                           ? (cells[r].b ? "true" : "false")
                           : cells[r].str;
        }
      }
      out.cols.push_back(std::move(col));
      continue;
    }

    TypedColumn dtype;
    dtype.name = flat.columns[c] + ".dtype";
    dtype.source = flat.columns[c];
    dtype.role = TypedColumn::Role::Dtype;
    dtype.defined.assign(out.n_rows, 1);
    dtype.cat.resize(out.n_rows);
    for (std::size_t r = 0; r < out.n_rows; ++r) {
      dtype.cat[r] = dtype_name(cells[r].kind);
    }
    out.cols.push_back(std::move(dtype));

    if (kinds.count(Cell::Kind::Num)) {
      TypedColumn num;
      num.name = flat.columns[c] + ".num";
      num.source = flat.columns[c];
      num.role = TypedColumn::Role::Num;
      num.numeric = true;
      num.defined.assign(out.n_rows, 0);
      num.num.assign(out.n_rows, 0.0);
      for (std::size_t r = 0; r < out.n_rows; ++r) {
        if (cells[r].kind == Cell::Kind::Num) {
          num.defined[r] = 1;
          num.num[r] = cells[r].num;
        }
      }
      out.cols.push_back(std::move(num));
    }
    if (kinds.count(Cell::Kind::Str)) {
      TypedColumn cat;
      cat.name = flat.columns[c] + ".cat";
      cat.source = flat.columns[c];
      cat.role = TypedColumn::Role::Cat;
      cat.defined.assign(out.n_rows, 0);
      cat.cat.assign(out.n_rows, "");
      for (std::size_t r = 0; r < out.n_rows; ++r) {
        if (cells[r].kind == Cell::Kind::Str) {
          cat.defined[r] = 1;
          cat.cat[r] = cells[r].str;
        }
      }
      out.cols.push_back(std::move(cat));
    }
    if (kinds.count(Cell::Kind::Bool)) {
      TypedColumn bcol;
      bcol.name = flat.columns[c] + ".bool";
      bcol.source = flat.columns[c];
      bcol.role = TypedColumn::Role::Bool;
      bcol.defined.assign(out.n_rows, 0);
      bcol.cat.assign(out.n_rows, "");
      for (std::size_t r = 0; r < out.n_rows; ++r) {
        if (cells[r].kind == Cell::Kind::Bool) {
          bcol.defined[r] = 1;
          bcol.cat[r] = cells[r].b ? "true" : "false";
        }
      }
      out.cols.push_back(std::move(bcol));
    }
  }

  if (mode == SeparationMode::Evaluation) {
    for (std::size_t a = 0; a < flat.array_paths.size(); ++a) {
      TypedColumn alen;
      alen.name = flat.array_paths[a] + ".alen";
      alen.source = flat.array_paths[a];
      alen.role = TypedColumn::Role::ALen;
      alen.numeric = true;
      alen.defined.assign(out.n_rows, 0);
      alen.num.assign(out.n_rows, 0.0);
      for (std::size_t r = 0; r < out.n_rows; ++r) {
        if (flat.array_lengths[a][r].has_value()) {
          alen.defined[r] = 1;
          alen.num[r] = static_cast<double>(*flat.array_lengths[a][r]);
        }
      }
      out.cols.push_back(std::move(alen));
    }
  }
  return out;
}

}  // namespace origami::eval
