#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "origami/eval/metrics.hpp"
#include "origami/eval/table.hpp"
#include "origami/fixtures.hpp"

using namespace origami;
using namespace origami::eval;

TEST_CASE("flattening the movie corpus", "[eval]") {
  auto corpus = fixtures::movies_corpus();
  FlatTable t = flatten(corpus);

  REQUIRE(t.n_rows == 2);
  std::vector<std::string> expect = {"title",    "genres.0",    "genres.1",
                                     "genres.2", "awards.wins",
                                     "awards.nominations"};
  REQUIRE(t.columns == expect);

  // second record misses genres.2 structurally
  const Cell& missing = t.cells[t.col_index.at("genres.2")][1];
  REQUIRE(missing.kind == Cell::Kind::Missing);
  // awards.wins is polymorphic: integer then string
  REQUIRE(t.cells[t.col_index.at("awards.wins")][0].kind == Cell::Kind::Num);
  REQUIRE(t.cells[t.col_index.at("awards.wins")][1].kind == Cell::Kind::Str);
  // array lengths recorded
  REQUIRE(t.array_paths == std::vector<std::string>{"genres"});
  REQUIRE(*t.array_lengths[0][0] == 3);
  REQUIRE(*t.array_lengths[0][1] == 2);
}

TEST_CASE("flat records pass through unchanged", "[eval]") {
  std::vector<Json> corpus = {Json{{"a", 1}}};
  FlatTable t = flatten(corpus);
  REQUIRE(t.columns == std::vector<std::string>{"a"});
  REQUIRE(t.array_paths.empty());
}

TEST_CASE("missing and explicit null stay distinct", "[eval]") {
  std::vector<Json> corpus = {Json::parse(R"({"a": null})"),
                              Json::parse(R"({})")};
  FlatTable t = flatten(corpus);
  REQUIRE(t.cells[0][0].kind == Cell::Kind::Null);
  REQUIRE(t.cells[0][1].kind == Cell::Kind::Missing);

  TypedTable typed = type_separate(t, SeparationMode::Evaluation);
  const TypedColumn* dtype = typed.find("a.dtype");
  REQUIRE(dtype != nullptr);
  REQUIRE(dtype->cat[0] == "null");
  REQUIRE(dtype->cat[1] == "missing");
}

TEST_CASE("type separation expands polymorphic columns", "[eval]") {
  auto corpus = fixtures::movies_corpus();
  FlatTable flat = flatten(corpus);

  TypedTable training = type_separate(flat, SeparationMode::Training);
  // homogeneous fully-present columns pass through unchanged
  REQUIRE(training.find("title") != nullptr);
  REQUIRE(training.find("title.dtype") == nullptr);
  REQUIRE(training.find("genres.0") != nullptr);
  // awards.wins expands into dtype + num + cat
  REQUIRE(training.find("awards.wins.dtype") != nullptr);
  REQUIRE(training.find("awards.wins.num") != nullptr);
  REQUIRE(training.find("awards.wins.cat") != nullptr);
  const TypedColumn* dtype = training.find("awards.wins.dtype");
  REQUIRE(dtype->cat[0] == "num");
  REQUIRE(dtype->cat[1] == "cat");
  const TypedColumn* num = training.find("awards.wins.num");
  REQUIRE(num->defined[0] == 1);
  REQUIRE(num->defined[1] == 0);
  REQUIRE(num->num[0] == 3.0);

  TypedTable evaluation = type_separate(flat, SeparationMode::Evaluation);
  // evaluation mode expands everything and adds array lengths
  REQUIRE(evaluation.find("title.dtype") != nullptr);
  const TypedColumn* alen = evaluation.find("genres.alen");
  REQUIRE(alen != nullptr);
  REQUIRE(alen->num[0] == 3.0);
  REQUIRE(alen->num[1] == 2.0);
}

TEST_CASE("similarity primitives", "[eval]") {
  REQUIRE(tv_complement({{"a", 0.5}, {"b", 0.5}}, {{"a", 0.5}, {"b", 0.5}}) ==
          1.0);
  REQUIRE(tv_complement({{"a", 1.0}}, {{"b", 1.0}}) == 0.0);
  REQUIRE(tv_complement({{"a", 1.0}}, {{"a", 0.5}, {"b", 0.5}}) ==
          Catch::Approx(0.5));

  REQUIRE(ks_complement({1, 2, 3}, {1, 2, 3}) == 1.0);
  REQUIRE(ks_complement({0, 0, 0}, {5, 5, 5}) == 0.0);

  REQUIRE(wasserstein1({1, 2, 3}, {1, 2, 3}) == 0.0);
  REQUIRE(wasserstein1({2, 2, 2}, {5, 5, 5}) == Catch::Approx(3.0));
  REQUIRE(wasserstein1({1, 2, 3}, {2, 3, 4}) == Catch::Approx(1.0));
}

TEST_CASE("column shapes against itself are exactly one", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(400, 41);
  FlatTable f = flatten(corpus);
  TypeSchema hint = infer_type_schema({&f, &f});
  TypedTable t = type_separate(f, SeparationMode::Evaluation, &hint);
  ShapesResult shapes = column_shapes(t, t);
  REQUIRE(shapes.mean == Catch::Approx(1.0).margin(1e-12));
  for (const auto& c : shapes.columns) {
    REQUIRE(c.score == Catch::Approx(1.0).margin(1e-12));
  }

  TrendsResult trends = pair_trends(t, t);
  REQUIRE(trends.mean == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("presence factor catches always-present synthetic columns",
          "[eval]") {
  // real: key present half the time; synth: always present, same values
  std::vector<Json> real, synth;
  for (int i = 0; i < 200; ++i) {
    if (i % 2 == 0) {
      real.push_back(Json{{"k", "v"}, {"pad", i % 7}});
    } else {
      real.push_back(Json{{"pad", i % 7}});
    }
    synth.push_back(Json{{"k", "v"}, {"pad", i % 7}});
  }
  FlatTable fr = flatten(real);
  FlatTable fs = flatten(synth);
  std::vector<std::string> cols, arrays;
  union_schema({&fr, &fs}, cols, arrays);
  fr = align_to(fr, cols, arrays);
  fs = align_to(fs, cols, arrays);
  TypeSchema hint = infer_type_schema({&fr, &fs});
  TypedTable tr = type_separate(fr, SeparationMode::Evaluation, &hint);
  TypedTable ts = type_separate(fs, SeparationMode::Evaluation, &hint);

  ShapesResult shapes = column_shapes(tr, ts);
  const ColumnShape* k = nullptr;
  for (const auto& c : shapes.columns) {
    if (c.source == "k") k = &c;
  }
  REQUIRE(k != nullptr);
  REQUIRE(k->presence == Catch::Approx(0.5));
  REQUIRE(k->value == Catch::Approx(1.0));
  REQUIRE(k->type == Catch::Approx(1.0));
  REQUIRE(k->score == Catch::Approx(0.5));
}

TEST_CASE("disjoint categorical supports score zero value fidelity",
          "[eval]") {
  std::vector<Json> real, synth;
  for (int i = 0; i < 50; ++i) {
    real.push_back(Json{{"c", "left"}});
    synth.push_back(Json{{"c", "right"}});
  }
  FlatTable fr = flatten(real);
  FlatTable fs = flatten(synth);
  TypeSchema hint = infer_type_schema({&fr, &fs});
  TypedTable tr = type_separate(fr, SeparationMode::Evaluation, &hint);
  TypedTable ts = type_separate(fs, SeparationMode::Evaluation, &hint);
  ShapesResult shapes = column_shapes(tr, ts);
  REQUIRE(shapes.columns.size() == 1);
  REQUIRE(shapes.columns[0].value == 0.0);
}

TEST_CASE("pair trends at correlation extremes", "[eval]") {
  // real: y = x (r = 1); synth: y = -x (r = -1) -> pair score 0
  std::vector<Json> real, synth;
  Rng rng = make_rng(4);
  for (int i = 0; i < 100; ++i) {
    double x = normal_double(rng);
    real.push_back(Json{{"x", x}, {"y", x}});
    synth.push_back(Json{{"x", x}, {"y", -x}});
  }
  FlatTable fr = flatten(real);
  FlatTable fs = flatten(synth);
  TypeSchema hint = infer_type_schema({&fr, &fs});
  TypedTable tr = type_separate(fr, SeparationMode::Evaluation, &hint);
  TypedTable ts = type_separate(fs, SeparationMode::Evaluation, &hint);
  // restrict to the two numeric value columns
  TypedTable tr2, ts2;
  tr2.n_rows = tr.n_rows;
  ts2.n_rows = ts.n_rows;
  for (const auto& c : tr.cols) {
    if (c.role == TypedColumn::Role::Num) tr2.cols.push_back(c);
  }
  for (const auto& c : ts.cols) {
    if (c.role == TypedColumn::Role::Num) ts2.cols.push_back(c);
  }
  TrendsResult trends = pair_trends(tr2, ts2);
  REQUIRE(trends.mean == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("never co-present pairs are excluded", "[eval]") {
  std::vector<Json> corpus;
  for (int i = 0; i < 60; ++i) {
    if (i % 2 == 0) {
      corpus.push_back(Json{{"a", i % 5}});
    } else {
      corpus.push_back(Json{{"b", i % 3}});
    }
  }
  FlatTable f = flatten(corpus);
  TypeSchema hint = infer_type_schema({&f});
  TypedTable t = type_separate(f, SeparationMode::Evaluation, &hint);
  // keep only the two value columns, which are never co-present
  TypedTable just;
  just.n_rows = t.n_rows;
  for (const auto& c : t.cols) {
    if (c.role == TypedColumn::Role::Num) just.cols.push_back(c);
  }
  REQUIRE(just.cols.size() == 2);
  TrendsResult trends = pair_trends(just, just);
  REQUIRE(trends.pairs_scored == 0);
  REQUIRE(trends.pairs_skipped == 1);
  REQUIRE(trends.mean == 1.0);  // no weight anywhere
}

TEST_CASE("array length distances on the movie fixture", "[eval]") {
  auto corpus = fixtures::movies_corpus();
  ArrayLengthReport rep = array_length_wasserstein(corpus, corpus, "genres");
  REQUIRE(rep.w1_with_absent == 0.0);
  REQUIRE(rep.w1_present_only == 0.0);
  REQUIRE_THROWS_AS(array_length_wasserstein(corpus, corpus, "nope"), Error);
}

TEST_CASE("utility equals one when synthetic equals real", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(600, 55);
  std::vector<Json> train(corpus.begin(), corpus.begin() + 400);
  std::vector<Json> test(corpus.begin() + 400, corpus.end());
  UtilityResult u = utility_tstr(train, train, test, "income", 7);
  REQUIRE(u.tstr_f1 == u.trtr_f1);  // identical training data, same seed
  REQUIRE(u.score >= 0.99);
}

TEST_CASE("label destruction hurts utility", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(900, 56);
  std::vector<Json> train(corpus.begin(), corpus.begin() + 600);
  std::vector<Json> test(corpus.begin() + 600, corpus.end());
  // shuffle the target column across records
  std::vector<Json> broken = train;
  Rng rng = make_rng(2);
  for (std::size_t i = broken.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(broken[i - 1]["income"], broken[j]["income"]);
  }
  UtilityResult u = utility_tstr(broken, train, test, "income", 7);
  REQUIRE(u.score < 0.9);
}

TEST_CASE("utility rejects single-class targets", "[eval]") {
  std::vector<Json> corpus;
  for (int i = 0; i < 50; ++i) {
    corpus.push_back(Json{{"x", i % 7}, {"y", "only"}});
  }
  REQUIRE_THROWS_AS(utility_tstr(corpus, corpus, corpus, "y", 0), Error);
}

TEST_CASE("detection cannot separate identical corpora", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(600, 57);
  DetectionResult d = detection_c2st(corpus, corpus, 3);
  // literal duplicates make folds anti-generalize (each test row's twin sits
  // in training with the opposite label), pushing raw AUC below one half;
  // the clamp treats that as chance
  REQUIRE(d.auc <= 0.5 + 1e-9);
  REQUIRE(d.score == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("detection separates disjoint distributions", "[eval]") {
  std::vector<Json> real, synth;
  for (int i = 0; i < 300; ++i) {
    real.push_back(Json{{"v", 0.0 + i % 10}});
    synth.push_back(Json{{"v", 100.0 + i % 10}});
  }
  DetectionResult d = detection_c2st(real, synth, 3);
  REQUIRE(d.score == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(d.auc == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("detection on disjoint real halves stays near chance", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(4000, 58);
  std::vector<Json> a(corpus.begin(), corpus.begin() + 2000);
  std::vector<Json> b(corpus.begin() + 2000, corpus.end());
  DetectionResult d = detection_c2st(a, b, 11);
  REQUIRE(d.score >= 0.95);
}

TEST_CASE("privacy formula spot values", "[eval]") {
  REQUIRE(privacy_score_from_dcr(50.0) == 1.0);
  REQUIRE(privacy_score_from_dcr(100.0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(privacy_score_from_dcr(58.471) == Catch::Approx(0.831).margin(0.001));
  REQUIRE(privacy_score_from_dcr(30.0) == 1.0);  // below half is not penalized
}

TEST_CASE("privacy flags a memorized synthetic set", "[eval]") {
  auto corpus = fixtures::adultlike_corpus(300, 59);
  std::vector<Json> train(corpus.begin(), corpus.begin() + 100);
  std::vector<Json> test(corpus.begin() + 100, corpus.begin() + 200);
  PrivacyResult p = privacy_dcr(train, train, test);
  REQUIRE(p.dcr_percent >= 99.0);
  REQUIRE(p.score <= 0.02);
  REQUIRE(p.exact_matches_train == train.size());

  std::vector<Json> fresh(corpus.begin() + 200, corpus.begin() + 300);
  PrivacyResult q = privacy_dcr(fresh, train, test);
  REQUIRE(q.dcr_percent < 80.0);
  REQUIRE(q.exact_matches_train <= 2);

  REQUIRE_THROWS_AS(privacy_dcr(train, train, corpus), Error);
}

TEST_CASE("full evaluation of a corpus against itself", "[eval][slow]") {
  auto corpus = fixtures::adultlike_corpus(800, 60);
  EvaluateOptions opts;
  opts.target = "income";
  opts.seed = 13;
  MetricReport rep = evaluate(corpus, corpus, opts);
  REQUIRE(rep.fidelity_shapes == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(rep.fidelity_trends == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(rep.detection.score >= 0.95);
  REQUIRE(rep.utility.score == Catch::Approx(1.0).margin(1e-9));
  Json j = rep.to_json();
  REQUIRE(j["fidelity"]["overall"].get<double>() >= 0.999);
}
