#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "origami/errors.hpp"
#include "origami/rng.hpp"

namespace origami::eval {

// Column-major feature matrix for tree training. Numeric features use NaN
// for missing; categorical features use -1.
struct DataView {
  struct Feature {
    bool categorical = false;
    std::vector<double> num;       // when numeric
    std::vector<std::int32_t> cat; // when categorical
    std::int32_t n_categories = 0;
  };
  std::vector<Feature> features;
  std::size_t rows = 0;
};

struct GbdtConfig {
  int n_estimators = 100;
  int max_depth = 6;
  double learning_rate = 0.3;
  double reg_lambda = 1.0;
  double min_child_weight = 1.0;
  double min_split_gain = 0.0;
  std::uint64_t seed = 0;
};

// Gradient-boosted decision trees with second-order (XGBoost-style) split
// gains, learned default directions for missing numerics and sorted-category
// subset splits for categoricals. Multiclass uses one tree per class per
// round under a softmax objective.
class GbdtClassifier {
 public:
  struct Node {
    bool leaf = true;
    double value = 0.0;         // leaf weight (already scaled by lr)
    int feature = -1;
    double threshold = 0.0;     // numeric: go left iff x < threshold
    bool default_left = false;  // missing direction
    std::vector<std::uint8_t> left_categories;  // categorical membership
    int left = -1, right = -1;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  GbdtClassifier(GbdtConfig cfg, int n_classes)
      : cfg_(cfg), n_classes_(n_classes) {
    if (n_classes < 2) throw Error("gbdt: need at least two classes");
  }

  void fit(const DataView& data, const std::vector<int>& labels) {
    if (data.rows != labels.size()) throw Error("gbdt: label size mismatch");
    const std::size_t n = data.rows;
    const int k = n_classes_ == 2 ? 1 : n_classes_;
    trees_.assign(cfg_.n_estimators, std::vector<Tree>(k));

    std::vector<double> margins(n * k, 0.0);
    std::vector<double> grad(n), hess(n);

    for (int round = 0; round < cfg_.n_estimators; ++round) {
      for (int cls = 0; cls < k; ++cls) {
        // gradients under logistic / softmax
        if (k == 1) {
          for (std::size_t i = 0; i < n; ++i) {
            double p = 1.0 / (1.0 + std::exp(-margins[i]));
            double y = labels[i] ? 1.0 : 0.0;
            grad[i] = p - y;
            hess[i] = std::max(p * (1.0 - p), 1e-16);
          }
        } else {
          for (std::size_t i = 0; i < n; ++i) {
            double mx = margins[i * k];
            for (int c = 1; c < k; ++c) mx = std::max(mx, margins[i * k + c]);
            double denom = 0;
            for (int c = 0; c < k; ++c) {
              denom += std::exp(margins[i * k + c] - mx);
            }
            double p = std::exp(margins[i * k + cls] - mx) / denom;
            double y = labels[i] == cls ? 1.0 : 0.0;
            grad[i] = p - y;
            hess[i] = std::max(p * (1.0 - p), 1e-16);
          }
        }
        Tree& tree = trees_[round][cls];
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        build_node(tree, data, grad, hess, all, 0);
        for (std::size_t i = 0; i < n; ++i) {
          margins[i * k + cls] += predict_tree(tree, data, i);
        }
      }
    }
  }

  // Class probabilities, row-major rows x n_classes.
  std::vector<double> predict_proba(const DataView& data) const {
    const std::size_t n = data.rows;
    const int k = n_classes_ == 2 ? 1 : n_classes_;
    std::vector<double> margins(n * k, 0.0);
    for (const auto& round : trees_) {
      for (int cls = 0; cls < k; ++cls) {
        for (std::size_t i = 0; i < n; ++i) {
          margins[i * k + cls] += predict_tree(round[cls], data, i);
        }
      }
    }
    std::vector<double> probs(n * n_classes_);
    if (k == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        double p = 1.0 / (1.0 + std::exp(-margins[i]));
        probs[i * 2] = 1.0 - p;
        probs[i * 2 + 1] = p;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double mx = margins[i * k];
        for (int c = 1; c < k; ++c) mx = std::max(mx, margins[i * k + c]);
        double denom = 0;
        for (int c = 0; c < k; ++c) denom += std::exp(margins[i * k + c] - mx);
        for (int c = 0; c < k; ++c) {
          probs[i * n_classes_ + c] = std::exp(margins[i * k + c] - mx) / denom;
        }
      }
    }
    return probs;
  }

  std::vector<int> predict(const DataView& data) const {
    std::vector<double> probs = predict_proba(data);
    std::vector<int> out(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) {
      int best = 0;
      for (int c = 1; c < n_classes_; ++c) {
        if (probs[i * n_classes_ + c] > probs[i * n_classes_ + best]) best = c;
      }
      out[i] = best;
    }
    return out;
  }

  int n_classes() const { return n_classes_; }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    bool default_left = false;
    std::vector<std::uint8_t> left_categories;
    bool valid = false;
  };

  double leaf_value(double g, double h) const {
    return -g / (h + cfg_.reg_lambda) * cfg_.learning_rate;
  }

  double score(double g, double h) const {
    return g * g / (h + cfg_.reg_lambda);
  }

  void build_node(Tree& tree, const DataView& data,
                  const std::vector<double>& grad,
                  const std::vector<double>& hess,
                  const std::vector<std::uint32_t>& rows, int depth) {
    double gsum = 0, hsum = 0;
    for (std::uint32_t r : rows) {
      gsum += grad[r];
      hsum += hess[r];
    }
    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node_id].value = leaf_value(gsum, hsum);
    if (depth >= cfg_.max_depth || rows.size() < 2) return;

    Split best = find_split(data, grad, hess, rows, gsum, hsum);
    if (!best.valid) return;

    std::vector<std::uint32_t> left_rows, right_rows;
    partition(data, rows, best, left_rows, right_rows);
    if (left_rows.empty() || right_rows.empty()) return;

    tree.nodes[node_id].leaf = false;
    tree.nodes[node_id].feature = best.feature;
    tree.nodes[node_id].threshold = best.threshold;
    tree.nodes[node_id].default_left = best.default_left;
    tree.nodes[node_id].left_categories = best.left_categories;

    int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes[node_id].left = left_id;
    build_node(tree, data, grad, hess, left_rows, depth + 1);
    int right_id = static_cast<int>(tree.nodes.size());
    tree.nodes[node_id].right = right_id;
    build_node(tree, data, grad, hess, right_rows, depth + 1);
  }

  Split find_split(const DataView& data, const std::vector<double>& grad,
                   const std::vector<double>& hess,
                   const std::vector<std::uint32_t>& rows, double gsum,
                   double hsum) const {
    Split best;
    const double parent_score = score(gsum, hsum);

    for (int f = 0; f < static_cast<int>(data.features.size()); ++f) {
      const auto& feat = data.features[f];
      if (!feat.categorical) {
        // gather defined points
        std::vector<std::pair<double, std::uint32_t>> pts;
        double gmiss = 0, hmiss = 0;
        for (std::uint32_t r : rows) {
          double v = feat.num[r];
          if (std::isnan(v)) {
            gmiss += grad[r];
            hmiss += hess[r];
          } else {
            pts.emplace_back(v, r);
          }
        }
        if (pts.size() < 2) continue;
        std::sort(pts.begin(), pts.end());
        double gl = 0, hl = 0;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
          gl += grad[pts[i].second];
          hl += hess[pts[i].second];
          if (pts[i].first == pts[i + 1].first) continue;
          double threshold = pts[i].first / 2.0 + pts[i + 1].first / 2.0;
          // try missing on either side
          for (int miss_left = 0; miss_left < 2; ++miss_left) {
            double l_g = gl + (miss_left ? gmiss : 0.0);
            double l_h = hl + (miss_left ? hmiss : 0.0);
            double r_g = gsum - l_g;
            double r_h = hsum - l_h;
            if (l_h < cfg_.min_child_weight || r_h < cfg_.min_child_weight) {
              continue;
            }
            double gain =
                0.5 * (score(l_g, l_h) + score(r_g, r_h) - parent_score) -
                cfg_.min_split_gain;
            if (gain > best.gain + 1e-12) {
              best.valid = true;
              best.gain = gain;
              best.feature = f;
              best.threshold = threshold;
              best.default_left = miss_left;
              best.left_categories.clear();
            }
          }
        }
      } else {
        // per-category stats; missing (-1) is its own bucket at index n
        const int nc = feat.n_categories;
        std::vector<double> gc(nc + 1, 0.0), hc(nc + 1, 0.0);
        std::vector<std::uint32_t> counts(nc + 1, 0);
        for (std::uint32_t r : rows) {
          int c = feat.cat[r];
          int slot = c < 0 ? nc : c;
          gc[slot] += grad[r];
          hc[slot] += hess[r];
          counts[slot]++;
        }
        std::vector<int> present;
        for (int c = 0; c <= nc; ++c) {
          if (counts[c] > 0) present.push_back(c);
        }
        if (present.size() < 2) continue;
        // sorted by gradient-to-hessian ratio, scan prefixes
        std::sort(present.begin(), present.end(), [&](int a, int b) {
          double ra = gc[a] / (hc[a] + 1e-12);
          double rb = gc[b] / (hc[b] + 1e-12);
          if (ra != rb) return ra < rb;
          return a < b;
        });
        double gl = 0, hl = 0;
        for (std::size_t i = 0; i + 1 < present.size(); ++i) {
          gl += gc[present[i]];
          hl += hc[present[i]];
          double r_g = gsum - gl;
          double r_h = hsum - hl;
          if (hl < cfg_.min_child_weight || r_h < cfg_.min_child_weight) {
            continue;
          }
          double gain = 0.5 * (score(gl, hl) + score(r_g, r_h) - parent_score) -
                        cfg_.min_split_gain;
          if (gain > best.gain + 1e-12) {
            best.valid = true;
            best.gain = gain;
            best.feature = f;
            best.threshold = 0.0;
            best.default_left = false;
            best.left_categories.assign(nc + 1, 0);
            for (std::size_t j = 0; j <= i; ++j) {
              best.left_categories[present[j]] = 1;
            }
          }
        }
      }
    }
    return best;
  }

  void partition(const DataView& data, const std::vector<std::uint32_t>& rows,
                 const Split& split, std::vector<std::uint32_t>& left,
                 std::vector<std::uint32_t>& right) const {
    const auto& feat = data.features[split.feature];
    for (std::uint32_t r : rows) {
      bool go_left;
      if (!feat.categorical) {
        double v = feat.num[r];
        go_left = std::isnan(v) ? split.default_left : v < split.threshold;
      } else {
        int c = feat.cat[r];
        int slot = c < 0 ? static_cast<int>(split.left_categories.size()) - 1 : c;
        go_left = slot < static_cast<int>(split.left_categories.size()) &&
                  split.left_categories[slot];
      }
      (go_left ? left : right).push_back(r);
    }
  }

  double predict_tree(const Tree& tree, const DataView& data,
                      std::size_t row) const {
    int at = 0;
    while (!tree.nodes[at].leaf) {
      const Node& n = tree.nodes[at];
      const auto& feat = data.features[n.feature];
      bool go_left;
      if (!feat.categorical) {
        double v = feat.num[row];
        go_left = std::isnan(v) ? n.default_left : v < n.threshold;
      } else {
        int c = feat.cat[row];
        int slot =
            c < 0 ? static_cast<int>(n.left_categories.size()) - 1 : c;
        go_left = slot < static_cast<int>(n.left_categories.size()) &&
                  n.left_categories[slot];
      }
      at = go_left ? n.left : n.right;
    }
    return tree.nodes[at].value;
  }

  GbdtConfig cfg_;
  int n_classes_;
  std::vector<std::vector<Tree>> trees_;  // [round][class]
};

// ---------------------------------------------------------------------------
// Metrics over classifier outputs
// ---------------------------------------------------------------------------

// ROC AUC from positive-class scores; ties share average rank.
inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::vector<double> ranks(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r]) {
      pos_rank_sum += ranks[r];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) return 0.5;
  return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) /
         (static_cast<double>(n_pos) * n_neg);
}

// Weighted F1 across classes (weights = true-class support).
inline double weighted_f1(const std::vector<int>& predicted,
                          const std::vector<int>& truth, int n_classes) {
  std::vector<double> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0),
      support(n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    support[truth[i]] += 1;
    if (predicted[i] == truth[i]) {
      tp[truth[i]] += 1;
    } else {
      fp[predicted[i]] += 1;
      fn[truth[i]] += 1;
    }
  }
  double total = static_cast<double>(truth.size());
  double f1 = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (support[c] == 0) continue;
    double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    double recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    double cf1 = precision + recall > 0
                     ? 2 * precision * recall / (precision + recall)
                     : 0.0;
    f1 += cf1 * support[c] / total;
  }
  return f1;
}

// Deterministic stratified folds: per-class seeded shuffle, dealt round-robin.
inline std::vector<int> stratified_folds(const std::vector<int>& labels,
                                         int n_folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  std::set<int> classes(labels.begin(), labels.end());
  for (int cls : classes) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) rows.push_back(i);
    }
    Rng rng = make_rng({seed, 0xf01dULL, static_cast<std::uint64_t>(cls)});
    for (std::size_t i = rows.size(); i > 1; --i) {
      std::swap(rows[i - 1], rows[uniform_index(rng, i)]);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      fold[rows[i]] = static_cast<int>(i % n_folds);
    }
  }
  return fold;
}

}  // namespace origami::eval
