#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "origami/errors.hpp"
#include "origami/eval/gbdt.hpp"
#include "origami/eval/table.hpp"
#include "origami/json_io.hpp"
#include "origami/rng.hpp"

namespace origami::eval {

// ---------------------------------------------------------------------------
// Similarity primitives
// ---------------------------------------------------------------------------

// 1 - total variation distance between two discrete distributions.
inline double tv_complement(const std::map<std::string, double>& p,
                            const std::map<std::string, double>& q) {
  std::set<std::string> keys;
  for (const auto& [k, _] : p) keys.insert(k);
  for (const auto& [k, _] : q) keys.insert(k);
  double tv = 0;
  for (const std::string& k : keys) {
    double pv = p.count(k) ? p.at(k) : 0.0;
    double qv = q.count(k) ? q.at(k) : 0.0;
    tv += std::abs(pv - qv);
  }
  return 1.0 - 0.5 * tv;
}

// 1 - two-sample Kolmogorov-Smirnov statistic.
inline double ks_complement(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return 1.0 - d;
}

// Wasserstein-1 between two empirical distributions via CDF integration.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw Error("wasserstein1: empty sample");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> grid;
  grid.reserve(a.size() + b.size());
  grid.insert(grid.end(), a.begin(), a.end());
  grid.insert(grid.end(), b.begin(), b.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double total = 0;
  std::size_t i = 0, j = 0;
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    while (i < a.size() && a[i] <= grid[g]) ++i;
    while (j < b.size() && b[j] <= grid[g]) ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    total += std::abs(fa - fb) * (grid[g + 1] - grid[g]);
  }
  return total;
}

namespace detail {

inline std::map<std::string, double> normalized_counts(
    const std::vector<std::string>& values) {
  std::map<std::string, double> out;
  for (const auto& v : values) out[v] += 1.0;
  for (auto& [_, c] : out) c /= static_cast<double>(values.size());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Column shapes (presence / type / value decomposition)
// ---------------------------------------------------------------------------

struct ColumnShape {
  std::string source;
  double presence = 1.0;
  double type = 1.0;
  double value = 1.0;
  double score = 1.0;
  bool sparse_value_flag = false;  // a value factor defaulted on tiny support
};

struct ShapesResult {
  double mean = 1.0;
  std::vector<ColumnShape> columns;
};

// Both tables must come from the same joint type separation so that sources
// and expansion match.
inline ShapesResult column_shapes(const TypedTable& real,
                                  const TypedTable& synth) {
  if (real.n_rows == 0 || synth.n_rows == 0) {
    throw Error("column_shapes: empty table");
  }
  // group columns by source
  std::vector<std::string> sources;
  std::map<std::string, std::vector<const TypedColumn*>> real_by, synth_by;
  for (const auto& c : real.cols) {
    if (!real_by.count(c.source)) sources.push_back(c.source);
    real_by[c.source].push_back(&c);
  }
  for (const auto& c : synth.cols) synth_by[c.source].push_back(&c);

  ShapesResult result;
  double sum = 0;
  for (const std::string& src : sources) {
    const auto& rcols = real_by[src];
    const auto& scols = synth_by[src];
    ColumnShape shape;
    shape.source = src;

    auto find_role = [](const std::vector<const TypedColumn*>& cols,
                        TypedColumn::Role role) -> const TypedColumn* {
      for (const TypedColumn* c : cols) {
        if (c->role == role) return c;
      }
      return nullptr;
    };

    const TypedColumn* r_dtype = find_role(rcols, TypedColumn::Role::Dtype);
    const TypedColumn* s_dtype = find_role(scols, TypedColumn::Role::Dtype);
    const TypedColumn* r_alen = find_role(rcols, TypedColumn::Role::ALen);
    const TypedColumn* s_alen = find_role(scols, TypedColumn::Role::ALen);
    const TypedColumn* r_pass = find_role(rcols, TypedColumn::Role::Passthrough);
    const TypedColumn* s_pass = find_role(scols, TypedColumn::Role::Passthrough);

    if (r_alen && s_alen) {
      // array-length source: presence from array presence, value from lengths
      double pr = r_alen->defined_count() / double(real.n_rows);
      double ps = s_alen->defined_count() / double(synth.n_rows);
      shape.presence =
          tv_complement({{"present", pr}, {"missing", 1 - pr}},
                        {{"present", ps}, {"missing", 1 - ps}});
      std::vector<double> rv, sv;
      for (std::size_t i = 0; i < real.n_rows; ++i) {
        if (r_alen->defined[i]) rv.push_back(r_alen->num[i]);
      }
      for (std::size_t i = 0; i < synth.n_rows; ++i) {
        if (s_alen->defined[i]) sv.push_back(s_alen->num[i]);
      }
      if (rv.size() >= 2 && sv.size() >= 2) {
        shape.value = ks_complement(rv, sv);
      } else {
        shape.sparse_value_flag = true;
      }
    } else if (r_pass && s_pass) {
      // homogeneous fully-present column (training-mode tables)
      if (r_pass->numeric) {
        if (r_pass->num.size() >= 2 && s_pass->num.size() >= 2) {
          shape.value = ks_complement(r_pass->num, s_pass->num);
        } else {
          shape.sparse_value_flag = true;
        }
      } else {
        shape.value = tv_complement(detail::normalized_counts(r_pass->cat),
                                    detail::normalized_counts(s_pass->cat));
      }
    } else if (r_dtype && s_dtype) {
      // presence factor
      auto presence_dist = [](const TypedColumn& d) {
        double missing = 0;
        for (const auto& v : d.cat) missing += v == "missing" ? 1.0 : 0.0;
        missing /= d.cat.size();
        return std::map<std::string, double>{{"missing", missing},
                                             {"present", 1.0 - missing}};
      };
      auto rp = presence_dist(*r_dtype);
      auto sp = presence_dist(*s_dtype);
      shape.presence = tv_complement(rp, sp);

      // type factor conditioned on presence
      auto type_dist = [](const TypedColumn& d) {
        std::map<std::string, double> out;
        double present = 0;
        for (const auto& v : d.cat) {
          if (v == "missing") continue;
          out[v] += 1.0;
          present += 1.0;
        }
        for (auto& [_, c] : out) c /= std::max(present, 1.0);
        return std::make_pair(out, present);
      };
      auto [rt, rpresent] = type_dist(*r_dtype);
      auto [st, spresent] = type_dist(*s_dtype);
      if (rpresent > 0 && spresent > 0) {
        shape.type = tv_complement(rt, st);
      }

      // value factor: weighted across kinds carrying values
      double wsum = 0, acc = 0;
      bool flagged = false;
      for (TypedColumn::Role role :
           {TypedColumn::Role::Num, TypedColumn::Role::Cat,
            TypedColumn::Role::Bool}) {
        const TypedColumn* rc = find_role(rcols, role);
        const TypedColumn* sc = find_role(scols, role);
        if (!rc || !sc) continue;
        double r_rate = rpresent > 0 ? rc->defined_count() / rpresent : 0.0;
        double s_rate = spresent > 0 ? sc->defined_count() / spresent : 0.0;
        double w = 0.5 * (r_rate + s_rate);
        if (w <= 0) continue;
        double sim = 1.0;
        if (role == TypedColumn::Role::Num) {
          std::vector<double> rv, sv;
          for (std::size_t i = 0; i < real.n_rows; ++i) {
            if (rc->defined[i]) rv.push_back(rc->num[i]);
          }
          for (std::size_t i = 0; i < synth.n_rows; ++i) {
            if (sc->defined[i]) sv.push_back(sc->num[i]);
          }
          if (rv.size() >= 2 && sv.size() >= 2) {
            sim = ks_complement(rv, sv);
          } else {
            flagged = true;
          }
        } else {
          std::vector<std::string> rv, sv;
          for (std::size_t i = 0; i < real.n_rows; ++i) {
            if (rc->defined[i]) rv.push_back(rc->cat[i]);
          }
          for (std::size_t i = 0; i < synth.n_rows; ++i) {
            if (sc->defined[i]) sv.push_back(sc->cat[i]);
          }
          if (!rv.empty() && !sv.empty()) {
            sim = tv_complement(detail::normalized_counts(rv),
                                detail::normalized_counts(sv));
          } else {
            flagged = true;
          }
        }
        wsum += w;
        acc += w * sim;
      }
      if (wsum > 0) shape.value = acc / wsum;
      shape.sparse_value_flag = flagged;
    }

    shape.score = shape.presence * shape.type * shape.value;
    result.columns.push_back(shape);
    sum += shape.score;
  }
  result.mean = result.columns.empty()
                    ? 1.0
                    : sum / static_cast<double>(result.columns.size());
  return result;
}

// ---------------------------------------------------------------------------
// Column pair trends
// ---------------------------------------------------------------------------

namespace detail {

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;  // constant column: no trend signal
  return sxy / std::sqrt(sxx * syy);
}

// Equal-width bin index over [lo, hi] with 10 bins.
inline int bin10(double v, double lo, double hi) {
  if (hi <= lo) return 0;
  int b = static_cast<int>((v - lo) / (hi - lo) * 10.0);
  return std::min(9, std::max(0, b));
}

struct PairAccess {
  const TypedColumn* col;
  double lo = 0, hi = 0;  // union range for binning

  std::string key(std::size_t row) const {
    if (col->numeric) return std::to_string(bin10(col->num[row], lo, hi));
    return col->cat[row];
  }
};

}  // namespace detail

struct TrendsResult {
  double mean = 1.0;
  std::size_t pairs_scored = 0;
  std::size_t pairs_skipped = 0;
};

inline TrendsResult pair_trends(const TypedTable& real, const TypedTable& synth) {
  TrendsResult result;
  const std::size_t nc = real.cols.size();
  if (nc != synth.cols.size()) {
    throw Error("pair_trends: mismatched table schemas");
  }
  if (nc < 2) return result;

  // union numeric ranges per column for mixed-pair binning
  std::vector<double> lo(nc, 0), hi(nc, 0);
  for (std::size_t c = 0; c < nc; ++c) {
    if (!real.cols[c].numeric) continue;
    double l = std::numeric_limits<double>::infinity();
    double h = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < real.n_rows; ++r) {
      if (real.cols[c].defined[r]) {
        l = std::min(l, real.cols[c].num[r]);
        h = std::max(h, real.cols[c].num[r]);
      }
    }
    for (std::size_t r = 0; r < synth.n_rows; ++r) {
      if (synth.cols[c].defined[r]) {
        l = std::min(l, synth.cols[c].num[r]);
        h = std::max(h, synth.cols[c].num[r]);
      }
    }
    lo[c] = l;
    hi[c] = h;
  }

  double wsum = 0;
  double acc = 0;
  for (std::size_t a = 0; a < nc; ++a) {
    for (std::size_t b = a + 1; b < nc; ++b) {
      const TypedColumn& ra = real.cols[a];
      const TypedColumn& rb = real.cols[b];
      const TypedColumn& sa = synth.cols[a];
      const TypedColumn& sb = synth.cols[b];

      auto co_rows = [](const TypedColumn& x, const TypedColumn& y,
                        std::size_t n) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < n; ++r) {
          if (x.defined[r] && y.defined[r]) rows.push_back(r);
        }
        return rows;
      };
      std::vector<std::size_t> r_rows = co_rows(ra, rb, real.n_rows);
      std::vector<std::size_t> s_rows = co_rows(sa, sb, synth.n_rows);
      double co_r = r_rows.size() / double(real.n_rows);
      double co_s = s_rows.size() / double(synth.n_rows);
      double w = std::max(co_r, co_s);
      if (w <= 0) {
        ++result.pairs_skipped;
        continue;
      }

      double score;
      if (ra.numeric && rb.numeric) {
        if (r_rows.size() < 3 || s_rows.size() < 3) {
          ++result.pairs_skipped;
          continue;  // correlation undefined on tiny support: weight zero
        }
        auto gather = [](const TypedColumn& c,
                         const std::vector<std::size_t>& rows) {
          std::vector<double> v;
          v.reserve(rows.size());
          for (std::size_t r : rows) v.push_back(c.num[r]);
          return v;
        };
        double r_corr = detail::pearson(gather(ra, r_rows), gather(rb, r_rows));
        double s_corr = detail::pearson(gather(sa, s_rows), gather(sb, s_rows));
        score = 1.0 - std::abs(r_corr - s_corr) / 2.0;
      } else {
        // joint distribution over (discretized) pairs
        detail::PairAccess pa{&ra, lo[a], hi[a]};
        detail::PairAccess pb{&rb, lo[b], hi[b]};
        detail::PairAccess qa{&sa, lo[a], hi[a]};
        detail::PairAccess qb{&sb, lo[b], hi[b]};
        std::map<std::string, double> rj, sj;
        for (std::size_t r : r_rows) {
          rj[pa.key(r) + "\x1f" + pb.key(r)] += 1.0 / r_rows.size();
        }
        for (std::size_t r : s_rows) {
          sj[qa.key(r) + "\x1f" + qb.key(r)] += 1.0 / s_rows.size();
        }
        if (r_rows.empty() || s_rows.empty()) {
          ++result.pairs_skipped;
          continue;
        }
        score = tv_complement(rj, sj);
      }
      wsum += w;
      acc += w * score;
      ++result.pairs_scored;
    }
  }
  result.mean = wsum > 0 ? acc / wsum : 1.0;
  return result;
}

// ---------------------------------------------------------------------------
// Array length distributions
// ---------------------------------------------------------------------------

struct ArrayLengthReport {
  double w1_with_absent = 0.0;   // absent arrays count as length 0
  double w1_present_only = 0.0;  // absent arrays skipped
};

inline ArrayLengthReport array_length_wasserstein(const FlatTable& real,
                                                  const FlatTable& synth,
                                                  const std::string& path) {
  auto it_r = real.array_index.find(path);
  auto it_s = synth.array_index.find(path);
  if (it_r == real.array_index.end() && it_s == synth.array_index.end()) {
    throw Error("array_length_wasserstein: unknown array path " + path);
  }
  auto lengths = [&](const FlatTable& t,
                     std::unordered_map<std::string, std::size_t>::const_iterator it,
                     bool include_absent) {
    std::vector<double> out;
    if (it == t.array_index.end()) {
      if (include_absent) out.assign(t.n_rows, 0.0);
      return out;
    }
    for (const auto& len : t.array_lengths[it->second]) {
      if (len.has_value()) {
        out.push_back(static_cast<double>(*len));
      } else if (include_absent) {
        out.push_back(0.0);
      }
    }
    return out;
  };
  ArrayLengthReport rep;
  rep.w1_with_absent =
      wasserstein1(lengths(real, it_r, true), lengths(synth, it_s, true));
  std::vector<double> rp = lengths(real, it_r, false);
  std::vector<double> sp = lengths(synth, it_s, false);
  rep.w1_present_only =
      (rp.empty() || sp.empty()) ? 0.0 : wasserstein1(rp, sp);
  return rep;
}

// Convenience overload on raw corpora.
inline ArrayLengthReport array_length_wasserstein(
    const std::vector<Json>& real, const std::vector<Json>& synth,
    const std::string& path) {
  return array_length_wasserstein(flatten(real), flatten(synth), path);
}

// ---------------------------------------------------------------------------
// Feature encoding for classifiers
// ---------------------------------------------------------------------------

namespace detail {

// Category dictionaries shared across tables so ids line up.
struct FeatureSpace {
  std::vector<std::map<std::string, std::int32_t>> cat_ids;  // per column
};

inline FeatureSpace feature_space(const std::vector<const TypedTable*>& tables) {
  FeatureSpace space;
  const std::size_t nc = tables.front()->cols.size();
  space.cat_ids.resize(nc);
  for (const TypedTable* t : tables) {
    if (t->cols.size() != nc) throw Error("feature_space: schema mismatch");
    for (std::size_t c = 0; c < nc; ++c) {
      if (t->cols[c].numeric) continue;
      for (std::size_t r = 0; r < t->n_rows; ++r) {
        if (!t->cols[c].defined[r]) continue;
        auto& ids = space.cat_ids[c];
        ids.emplace(t->cols[c].cat[r], static_cast<std::int32_t>(ids.size()));
      }
    }
  }
  return space;
}

inline DataView encode_features(const TypedTable& t, const FeatureSpace& space,
                                const std::vector<std::size_t>& rows,
                                const std::set<std::string>& exclude_sources) {
  DataView view;
  view.rows = rows.size();
  for (std::size_t c = 0; c < t.cols.size(); ++c) {
    const TypedColumn& col = t.cols[c];
    if (exclude_sources.count(col.source)) continue;
    DataView::Feature f;
    f.categorical = !col.numeric;
    if (col.numeric) {
      f.num.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        f.num[i] = col.defined[rows[i]]
                       ? col.num[rows[i]]
                       : std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      f.cat.resize(rows.size());
      const auto& ids = space.cat_ids[c];
      f.n_categories = static_cast<std::int32_t>(ids.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!col.defined[rows[i]]) {
          f.cat[i] = -1;
          continue;
        }
        auto it = ids.find(col.cat[rows[i]]);
        f.cat[i] = it == ids.end() ? -1 : it->second;
      }
    }
    view.features.push_back(std::move(f));
  }
  return view;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Label extraction from a flat column: canonical string per cell.
inline std::optional<std::string> label_of(const Cell& cell) {
  switch (cell.kind) {
    case Cell::Kind::Missing: return std::nullopt;
    case Cell::Kind::Null: return std::string("null");
    case Cell::Kind::Bool: return std::string(cell.b ? "true" : "false");
    case Cell::Kind::Num: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", cell.num);
      return std::string(buf);
    }
    case Cell::Kind::Str: return cell.str;
  }
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Utility: Train-Synthetic-Test-Real versus Train-Real-Test-Real
// ---------------------------------------------------------------------------

struct UtilityResult {
  double score = 0.0;
  double tstr_f1 = 0.0;
  double trtr_f1 = 0.0;
};

inline UtilityResult utility_tstr(const std::vector<Json>& synth_train,
                                  const std::vector<Json>& real_train,
                                  const std::vector<Json>& real_test,
                                  const std::string& target,
                                  std::uint64_t seed = 0) {
  if (synth_train.empty() || real_train.empty() || real_test.empty()) {
    throw Error("utility_tstr: empty corpus");
  }
  FlatTable fs = flatten(synth_train);
  FlatTable fr = flatten(real_train);
  FlatTable ft = flatten(real_test);
  std::vector<std::string> cols, arrays;
  union_schema({&fr, &fs, &ft}, cols, arrays);
  if (std::find(cols.begin(), cols.end(), target) == cols.end()) {
    throw Error("utility_tstr: target column \"" + target + "\" not found");
  }
  fs = align_to(fs, cols, arrays);
  fr = align_to(fr, cols, arrays);
  ft = align_to(ft, cols, arrays);

  TypeSchema hint = infer_type_schema({&fr, &fs, &ft});
  TypedTable ts = type_separate(fs, SeparationMode::Training, &hint);
  TypedTable tr = type_separate(fr, SeparationMode::Training, &hint);
  TypedTable tt = type_separate(ft, SeparationMode::Training, &hint);

  // labels: union class list, first occurrence over real train, synth, test
  std::map<std::string, int> class_ids;
  auto labels_of = [&](const FlatTable& t, bool assign) {
    std::vector<int> labels(t.n_rows, -1);
    const auto& cells = t.cells[t.col_index.at(target)];
    for (std::size_t r = 0; r < t.n_rows; ++r) {
      auto lab = detail::label_of(cells[r]);
      if (!lab) continue;
      auto it = class_ids.find(*lab);
      if (it == class_ids.end()) {
        if (!assign) continue;
        it = class_ids.emplace(*lab, static_cast<int>(class_ids.size())).first;
      }
      labels[r] = it->second;
    }
    return labels;
  };
  std::vector<int> yr = labels_of(fr, true);
  std::vector<int> ys = labels_of(fs, true);
  std::vector<int> yt = labels_of(ft, true);
  if (class_ids.size() < 2) {
    throw Error("utility_tstr: target \"" + target + "\" has a single class");
  }
  const int n_classes = static_cast<int>(class_ids.size());

  auto keep_labeled = [](const std::vector<int>& y) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] >= 0) rows.push_back(i);
    }
    return rows;
  };
  std::vector<std::size_t> rs = keep_labeled(ys);
  std::vector<std::size_t> rr = keep_labeled(yr);
  std::vector<std::size_t> rt = keep_labeled(yt);
  if (rs.empty() || rr.empty() || rt.empty()) {
    throw Error("utility_tstr: no labeled rows for target");
  }

  detail::FeatureSpace space = detail::feature_space({&tr, &ts, &tt});
  std::set<std::string> exclude = {target};
  DataView xs = detail::encode_features(ts, space, rs, exclude);
  DataView xr = detail::encode_features(tr, space, rr, exclude);
  DataView xt = detail::encode_features(tt, space, rt, exclude);
  auto select = [](const std::vector<int>& y,
                   const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(y[r]);
    return out;
  };

  GbdtConfig cfg;
  cfg.n_estimators = 100;
  cfg.max_depth = 6;
  cfg.seed = seed;

  GbdtClassifier tstr(cfg, n_classes);
  tstr.fit(xs, select(ys, rs));
  GbdtClassifier trtr(cfg, n_classes);
  trtr.fit(xr, select(yr, rr));

  std::vector<int> truth = select(yt, rt);
  UtilityResult out;
  out.tstr_f1 = weighted_f1(tstr.predict(xt), truth, n_classes);
  out.trtr_f1 = weighted_f1(trtr.predict(xt), truth, n_classes);
  out.score = out.trtr_f1 > 0 ? std::min(out.tstr_f1 / out.trtr_f1, 1.0) : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Detection: classifier two-sample test
// ---------------------------------------------------------------------------

struct DetectionResult {
  double score = 1.0;
  double auc = 0.5;  // raw, unclamped mean over folds
};

inline DetectionResult detection_c2st(const std::vector<Json>& real,
                                      const std::vector<Json>& synth,
                                      std::uint64_t seed = 0) {
  if (real.empty() || synth.empty()) throw Error("detection_c2st: empty corpus");
  // equal sampling: downsample the larger side, deterministically
  auto sample = [&](const std::vector<Json>& corpus, std::size_t m,
                    std::uint64_t salt) {
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng({seed, salt});
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
    std::vector<Json> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(corpus[idx[i]]);
    return out;
  };
  const std::size_t m = std::min(real.size(), synth.size());
  std::vector<Json> r = real.size() == m ? real : sample(real, m, 0x7265ULL);
  std::vector<Json> s = synth.size() == m ? synth : sample(synth, m, 0x7379ULL);

  FlatTable fr = flatten(r);
  FlatTable fs = flatten(s);
  std::vector<std::string> cols, arrays;
  union_schema({&fr, &fs}, cols, arrays);
  fr = align_to(fr, cols, arrays);
  fs = align_to(fs, cols, arrays);
  TypeSchema hint = infer_type_schema({&fr, &fs});
  TypedTable tr = type_separate(fr, SeparationMode::Evaluation, &hint);
  TypedTable ts = type_separate(fs, SeparationMode::Evaluation, &hint);

  // stack rows: real label 0, synth label 1
  detail::FeatureSpace space = detail::feature_space({&tr, &ts});
  DataView xr = detail::encode_features(tr, space, detail::all_rows(m), {});
  DataView xs = detail::encode_features(ts, space, detail::all_rows(m), {});
  DataView all;
  all.rows = 2 * m;
  for (std::size_t f = 0; f < xr.features.size(); ++f) {
    DataView::Feature merged = xr.features[f];
    if (merged.categorical) {
      merged.cat.insert(merged.cat.end(), xs.features[f].cat.begin(),
                        xs.features[f].cat.end());
      merged.n_categories =
          std::max(merged.n_categories, xs.features[f].n_categories);
    } else {
      merged.num.insert(merged.num.end(), xs.features[f].num.begin(),
                        xs.features[f].num.end());
    }
    all.features.push_back(std::move(merged));
  }
  std::vector<int> labels(2 * m, 0);
  for (std::size_t i = m; i < 2 * m; ++i) labels[i] = 1;

  const int n_folds = 3;
  std::vector<int> fold = stratified_folds(labels, n_folds, seed);
  GbdtConfig cfg;
  cfg.n_estimators = 10;
  cfg.max_depth = 3;
  cfg.seed = seed;

  double clamped_sum = 0, raw_sum = 0;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (fold[i] == f ? test_rows : train_rows).push_back(i);
    }
    auto subset = [&](const std::vector<std::size_t>& rows) {
      DataView v;
      v.rows = rows.size();
      for (const auto& feat : all.features) {
        DataView::Feature nf;
        nf.categorical = feat.categorical;
        nf.n_categories = feat.n_categories;
        if (feat.categorical) {
          nf.cat.reserve(rows.size());
          for (std::size_t r : rows) nf.cat.push_back(feat.cat[r]);
        } else {
          nf.num.reserve(rows.size());
          for (std::size_t r : rows) nf.num.push_back(feat.num[r]);
        }
        v.features.push_back(std::move(nf));
      }
      return v;
    };
    std::vector<int> y_train, y_test;
    for (std::size_t r : train_rows) y_train.push_back(labels[r]);
    for (std::size_t r : test_rows) y_test.push_back(labels[r]);

    GbdtClassifier clf(cfg, 2);
    clf.fit(subset(train_rows), y_train);
    std::vector<double> probs = clf.predict_proba(subset(test_rows));
    std::vector<double> pos_scores(test_rows.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      pos_scores[i] = probs[i * 2 + 1];
    }
    double auc = roc_auc(pos_scores, y_test);
    raw_sum += auc;
    clamped_sum += std::max(0.5, auc) * 2.0 - 1.0;
  }
  DetectionResult out;
  out.auc = raw_sum / n_folds;
  out.score = 1.0 - clamped_sum / n_folds;
  return out;
}

// ---------------------------------------------------------------------------
// Privacy: distance to closest record
// ---------------------------------------------------------------------------

struct PrivacyResult {
  double dcr_percent = 50.0;
  double score = 1.0;
  std::uint64_t exact_matches_train = 0;
  std::uint64_t exact_matches_test = 0;
};

inline double privacy_score_from_dcr(double dcr_percent) {
  return 1.0 - 2.0 * std::max(dcr_percent / 100.0 - 0.5, 0.0);
}

inline PrivacyResult privacy_dcr(const std::vector<Json>& synth,
                                 const std::vector<Json>& train_half,
                                 const std::vector<Json>& test_half) {
  if (synth.size() != train_half.size() || synth.size() != test_half.size()) {
    throw Error("privacy_dcr: synth, train and test sets must be equal size");
  }
  if (synth.empty()) throw Error("privacy_dcr: empty sets");

  FlatTable fx = flatten(synth);
  FlatTable fa = flatten(train_half);
  FlatTable fb = flatten(test_half);
  std::vector<std::string> cols, arrays;
  union_schema({&fa, &fb, &fx}, cols, arrays);
  fx = align_to(fx, cols, arrays);
  fa = align_to(fa, cols, arrays);
  fb = align_to(fb, cols, arrays);
  TypeSchema hint = infer_type_schema({&fa, &fb, &fx});
  TypedTable tx = type_separate(fx, SeparationMode::Evaluation, &hint);
  TypedTable ta = type_separate(fa, SeparationMode::Evaluation, &hint);
  TypedTable tb = type_separate(fb, SeparationMode::Evaluation, &hint);

  // one-hot categoricals, range-normalized numerics over the union
  detail::FeatureSpace space = detail::feature_space({&ta, &tb, &tx});
  const std::size_t nc = tx.cols.size();
  std::vector<double> lo(nc, 0), hi(nc, 0);
  for (std::size_t c = 0; c < nc; ++c) {
    if (!tx.cols[c].numeric) continue;
    double l = std::numeric_limits<double>::infinity();
    double h = -std::numeric_limits<double>::infinity();
    for (const TypedTable* t : {&ta, &tb, &tx}) {
      for (std::size_t r = 0; r < t->n_rows; ++r) {
        if (t->cols[c].defined[r]) {
          l = std::min(l, t->cols[c].num[r]);
          h = std::max(h, t->cols[c].num[r]);
        }
      }
    }
    lo[c] = l;
    hi[c] = h;
  }

  // dense embedding per row
  std::size_t dims = 0;
  std::vector<std::size_t> offset(nc, 0);
  for (std::size_t c = 0; c < nc; ++c) {
    offset[c] = dims;
    dims += tx.cols[c].numeric ? 1 : space.cat_ids[c].size() + 1;  // +1 missing
  }
  auto embed = [&](const TypedTable& t) {
    std::vector<double> out(t.n_rows * dims, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const TypedColumn& col = t.cols[c];
      for (std::size_t r = 0; r < t.n_rows; ++r) {
        double* row = out.data() + r * dims;
        if (col.numeric) {
          double v = 0.0;
          if (col.defined[r] && hi[c] > lo[c]) {
            v = (col.num[r] - lo[c]) / (hi[c] - lo[c]);
          } else if (col.defined[r]) {
            v = 0.5;  // constant column
          }
          row[offset[c]] = v;
        } else {
          std::size_t slot = space.cat_ids[c].size();  // missing slot
          if (col.defined[r]) {
            auto it = space.cat_ids[c].find(col.cat[r]);
            if (it != space.cat_ids[c].end()) {
              slot = static_cast<std::size_t>(it->second);
            }
          }
          row[offset[c] + slot] = 1.0;
        }
      }
    }
    return out;
  };
  std::vector<double> ex = embed(tx);
  std::vector<double> ea = embed(ta);
  std::vector<double> eb = embed(tb);

  const std::size_t n = synth.size();
  auto nearest_sq = [&](const double* row, const std::vector<double>& ref) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n; ++r) {
      const double* other = ref.data() + r * dims;
      double acc = 0;
      for (std::size_t d = 0; d < dims; ++d) {
        double diff = row[d] - other[d];
        acc += diff * diff;
        if (acc >= best) break;
      }
      best = std::min(best, acc);
    }
    return best;
  };

  std::size_t closer_to_train = 0;
  std::uint64_t exact_train = 0, exact_test = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = ex.data() + i * dims;
    double da = nearest_sq(row, ea);
    double db = nearest_sq(row, eb);
    if (da < db) ++closer_to_train;
    if (da == 0.0) ++exact_train;
    if (db == 0.0) ++exact_test;
  }

  PrivacyResult out;
  out.dcr_percent = 100.0 * static_cast<double>(closer_to_train) /
                    static_cast<double>(n);
  out.score = privacy_score_from_dcr(out.dcr_percent);
  out.exact_matches_train = exact_train;
  out.exact_matches_test = exact_test;
  return out;
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

struct MetricReport {
  double fidelity_overall = 0.0;
  double fidelity_shapes = 0.0;
  double fidelity_trends = 0.0;
  UtilityResult utility;
  DetectionResult detection;
  std::optional<PrivacyResult> privacy;
  Json per_column = Json::object();
  Json arrays = Json::object();
  Json classifier = Json::object();

  Json to_json() const {
    Json j;
    j["fidelity"] = Json{{"overall", fidelity_overall},
                         {"shapes", fidelity_shapes},
                         {"trends", fidelity_trends}};
    j["utility"] = Json{{"score", utility.score},
                        {"tstr_f1", utility.tstr_f1},
                        {"trtr_f1", utility.trtr_f1}};
    j["detection"] =
        Json{{"score", detection.score}, {"auc", detection.auc}};
    if (privacy) {
      j["privacy"] = Json{{"score", privacy->score},
                          {"dcr", privacy->dcr_percent},
                          {"exact_matches", privacy->exact_matches_train},
                          {"exact_matches_test", privacy->exact_matches_test}};
    } else {
      j["privacy"] = nullptr;
    }
    j["columns"] = per_column;
    j["arrays"] = arrays;
    j["classifier"] = classifier;
    return j;
  }
};

struct EvaluateOptions {
  std::string target;          // utility target column (flat path)
  std::uint64_t seed = 0;
  bool with_utility = true;
  bool with_detection = true;
  bool with_privacy = true;    // split-based; cmd_privacy does the full protocol
};

inline MetricReport evaluate(const std::vector<Json>& real,
                             const std::vector<Json>& synth,
                             const EvaluateOptions& opts) {
  if (real.empty() || synth.empty()) throw Error("evaluate: empty corpus");
  MetricReport report;

  FlatTable fr = flatten(real);
  FlatTable fs = flatten(synth);
  std::vector<std::string> cols, arrays;
  union_schema({&fr, &fs}, cols, arrays);
  FlatTable ar = align_to(fr, cols, arrays);
  FlatTable as = align_to(fs, cols, arrays);
  TypeSchema hint = infer_type_schema({&ar, &as});
  TypedTable tr = type_separate(ar, SeparationMode::Evaluation, &hint);
  TypedTable ts = type_separate(as, SeparationMode::Evaluation, &hint);

  ShapesResult shapes = column_shapes(tr, ts);
  TrendsResult trends = pair_trends(tr, ts);
  report.fidelity_shapes = shapes.mean;
  report.fidelity_trends = trends.mean;
  report.fidelity_overall = 0.5 * (shapes.mean + trends.mean);
  for (const ColumnShape& c : shapes.columns) {
    report.per_column[c.source] = Json{{"score", c.score},
                                       {"presence", c.presence},
                                       {"type", c.type},
                                       {"value", c.value},
                                       {"sparse_flag", c.sparse_value_flag}};
  }
  for (const std::string& path : arrays) {
    ArrayLengthReport alr = array_length_wasserstein(ar, as, path);
    report.arrays[path] = Json{{"w1", alr.w1_with_absent},
                               {"w1_present_only", alr.w1_present_only}};
  }

  if (opts.with_utility && !opts.target.empty()) {
    // 80/20 split of real for TRTR baseline and shared test set
    std::vector<std::size_t> idx(real.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng({opts.seed, 0x75746cULL});
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
    std::size_t cut = std::max<std::size_t>(1, real.size() / 5);
    std::vector<Json> test, train;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < cut ? test : train).push_back(real[idx[i]]);
    }
    report.utility = utility_tstr(synth, train, test, opts.target, opts.seed);
  }
  if (opts.with_detection) {
    report.detection = detection_c2st(real, synth, opts.seed);
  }
  if (opts.with_privacy && real.size() >= 4) {
    // split real 50/50, downsample synth to match
    std::vector<std::size_t> idx(real.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng({opts.seed, 0x707276ULL});
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
    std::size_t half = std::min({real.size() / 2, synth.size()});
    std::vector<Json> a, b, s;
    for (std::size_t i = 0; i < half; ++i) a.push_back(real[idx[i]]);
    for (std::size_t i = half; i < 2 * half; ++i) b.push_back(real[idx[i]]);
    for (std::size_t i = 0; i < half; ++i) s.push_back(synth[i]);
    report.privacy = privacy_dcr(s, a, b);
  }

  report.classifier = Json{{"library", "built-in gradient boosted trees"},
                           {"utility", Json{{"n_estimators", 100},
                                            {"max_depth", 6},
                                            {"learning_rate", 0.3},
                                            {"reg_lambda", 1.0}}},
                           {"detection", Json{{"n_estimators", 10},
                                              {"max_depth", 3},
                                              {"learning_rate", 0.3},
                                              {"reg_lambda", 1.0},
                                              {"folds", 3}}}};
  return report;
}

}  // namespace origami::eval
