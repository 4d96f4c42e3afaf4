#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "origami/eval/gbdt.hpp"
#include "origami/rng.hpp"

using namespace origami;
using namespace origami::eval;

namespace {

DataView numeric_view(const std::vector<std::vector<double>>& cols) {
  DataView v;
  v.rows = cols[0].size();
  for (const auto& col : cols) {
    DataView::Feature f;
    f.categorical = false;
    f.num = col;
    v.features.push_back(std::move(f));
  }
  return v;
}

}  // namespace

TEST_CASE("learns a numeric threshold", "[gbdt]") {
  Rng rng = make_rng(5);
  std::vector<double> x;
  std::vector<int> y;
  for (int i = 0; i < 400; ++i) {
    double v = uniform_double(rng) * 10.0;
    x.push_back(v);
    y.push_back(v > 3.7 ? 1 : 0);
  }
  DataView data = numeric_view({x});
  GbdtConfig cfg;
  cfg.n_estimators = 20;
  cfg.max_depth = 3;
  GbdtClassifier clf(cfg, 2);
  clf.fit(data, y);
  std::vector<int> pred = clf.predict(data);
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  REQUIRE(correct > 390);
}

TEST_CASE("learns a categorical partition with missing values", "[gbdt]") {
  Rng rng = make_rng(6);
  DataView::Feature f;
  f.categorical = true;
  f.n_categories = 4;
  std::vector<int> y;
  for (int i = 0; i < 600; ++i) {
    double r = uniform_double(rng);
    if (r < 0.15) {
      f.cat.push_back(-1);  // missing behaves like its own category
      y.push_back(1);
    } else {
      int c = static_cast<int>(uniform_index(rng, 4));
      f.cat.push_back(c);
      y.push_back(c == 1 || c == 3 ? 1 : 0);
    }
  }
  DataView data;
  data.rows = f.cat.size();
  data.features.push_back(std::move(f));

  GbdtConfig cfg;
  cfg.n_estimators = 10;
  cfg.max_depth = 3;
  GbdtClassifier clf(cfg, 2);
  clf.fit(data, y);
  std::vector<int> pred = clf.predict(data);
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  REQUIRE(correct == static_cast<int>(y.size()));
}

TEST_CASE("missing numerics get a learned default direction", "[gbdt]") {
  // y = 1 iff x missing; only the default direction can separate
  std::vector<double> x;
  std::vector<int> y;
  Rng rng = make_rng(7);
  for (int i = 0; i < 300; ++i) {
    if (i % 3 == 0) {
      x.push_back(std::numeric_limits<double>::quiet_NaN());
      y.push_back(1);
    } else {
      x.push_back(uniform_double(rng));
      y.push_back(0);
    }
  }
  DataView data = numeric_view({x});
  GbdtConfig cfg;
  cfg.n_estimators = 10;
  cfg.max_depth = 2;
  GbdtClassifier clf(cfg, 2);
  clf.fit(data, y);
  std::vector<int> pred = clf.predict(data);
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  REQUIRE(correct == static_cast<int>(y.size()));
}

TEST_CASE("multiclass softmax objective", "[gbdt]") {
  Rng rng = make_rng(8);
  std::vector<double> x0, x1;
  std::vector<int> y;
  for (int i = 0; i < 600; ++i) {
    double a = uniform_double(rng), b = uniform_double(rng);
    x0.push_back(a);
    x1.push_back(b);
    y.push_back(a < 0.33 ? 0 : (b < 0.5 ? 1 : 2));
  }
  DataView data = numeric_view({x0, x1});
  GbdtConfig cfg;
  cfg.n_estimators = 30;
  cfg.max_depth = 3;
  GbdtClassifier clf(cfg, 3);
  clf.fit(data, y);
  std::vector<int> pred = clf.predict(data);
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  REQUIRE(correct > 560);

  std::vector<double> probs = clf.predict_proba(data);
  for (std::size_t i = 0; i < 10; ++i) {
    double sum = probs[i * 3] + probs[i * 3 + 1] + probs[i * 3 + 2];
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("training is deterministic", "[gbdt]") {
  Rng rng = make_rng(9);
  std::vector<double> x;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(normal_double(rng));
    y.push_back(uniform_double(rng) < 0.4 ? 1 : 0);
  }
  DataView data = numeric_view({x});
  GbdtConfig cfg;
  cfg.n_estimators = 12;
  cfg.max_depth = 4;
  GbdtClassifier a(cfg, 2), b(cfg, 2);
  a.fit(data, y);
  b.fit(data, y);
  std::vector<double> pa = a.predict_proba(data);
  std::vector<double> pb = b.predict_proba(data);
  REQUIRE(pa == pb);
}

TEST_CASE("identical features for both labels give a constant model",
          "[gbdt]") {
  // every split has zero gain, so predictions stay at the base rate and the
  // AUC sits at exactly one half (each x value occurs equally with y=0, y=1)
  std::vector<double> x;
  std::vector<int> y;
  for (int i = 0; i < 100; ++i) {
    x.push_back(static_cast<double>(i % 5));
    y.push_back(i % 2);
  }
  DataView data = numeric_view({x});
  GbdtConfig cfg;
  cfg.n_estimators = 10;
  cfg.max_depth = 3;
  GbdtClassifier clf(cfg, 2);
  clf.fit(data, y);
  std::vector<double> probs = clf.predict_proba(data);
  std::vector<double> scores(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) scores[i] = probs[i * 2 + 1];
  REQUIRE(roc_auc(scores, y) == Catch::Approx(0.5));
}

TEST_CASE("roc auc on hand-checked rankings", "[gbdt]") {
  REQUIRE(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  REQUIRE(roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  REQUIRE(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  REQUIRE(roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == Catch::Approx(0.75));
}

TEST_CASE("weighted f1 on hand-checked predictions", "[gbdt]") {
  REQUIRE(weighted_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 1.0);
  // class 0: P=2/3 R=1 F1=0.8 w=1/2; class 1: P=1 R=1/2 F1=2/3 w=1/2
  REQUIRE(weighted_f1({0, 0, 0, 1}, {0, 0, 1, 1}, 2) ==
          Catch::Approx(0.5 * 0.8 + 0.5 * 2.0 / 3.0));
}

TEST_CASE("stratified folds balance classes", "[gbdt]") {
  std::vector<int> labels;
  for (int i = 0; i < 90; ++i) labels.push_back(i < 60 ? 0 : 1);
  std::vector<int> fold = stratified_folds(labels, 3, 77);
  int per_fold_pos[3] = {0, 0, 0};
  int per_fold_total[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    per_fold_total[fold[i]]++;
    per_fold_pos[fold[i]] += labels[i];
  }
  for (int f = 0; f < 3; ++f) {
    REQUIRE(per_fold_total[f] == 30);
    REQUIRE(per_fold_pos[f] == 10);
  }
}
