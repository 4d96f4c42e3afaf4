#include <catch2/catch_amalgamated.hpp>

#include "origami/fixtures.hpp"
#include "origami/tokenizer.hpp"
#include "support.hpp"

using namespace origami;

namespace {

std::vector<Json> parse_corpus(const std::vector<std::string>& lines) {
  std::vector<Json> out;
  for (const auto& l : lines) out.push_back(Json::parse(l));
  return out;
}

}  // namespace

TEST_CASE("vocabulary separates token classes", "[tokenizer]") {
  auto corpus = parse_corpus({R"({"a":1})", R"({"a":2})"});
  TokenizerOptions opts;
  opts.tau = 5;
  VocabSpec vocab = build_vocab(corpus, opts);

  REQUIRE(vocab.key_count() == 1);
  REQUIRE(vocab.value_count() == 2);
  REQUIRE(vocab.size() == kNumStructural + 3);
  REQUIRE(vocab.find_key("a").has_value());
  REQUIRE(vocab.find_value(Json(1)).has_value());
  REQUIRE(vocab.find_value(Json(2)).has_value());

  // id ranges disjoint and PAD at 0
  REQUIRE(kPad == 0);
  REQUIRE(vocab.is_key(*vocab.find_key("a")));
  REQUIRE(vocab.is_value(*vocab.find_value(Json(1))));

  NumericScalers scalers = fit_scalers(corpus, opts);
  REQUIRE(scalers.by_path.empty());
}

TEST_CASE("high-cardinality numeric keys route through NUM", "[tokenizer]") {
  std::vector<Json> corpus;
  for (int i = 0; i < 100; ++i) corpus.push_back(Json{{"x", i}});
  TokenizerOptions opts;
  opts.tau = 50;
  VocabSpec vocab = build_vocab(corpus, opts);
  REQUIRE(vocab.key_count() == 1);
  REQUIRE(vocab.value_count() == 0);

  NumericScalers scalers = fit_scalers(corpus, opts);
  SchemaPath x = SchemaPath{}.child_key("x");
  REQUIRE(scalers.has(x));
  REQUIRE(scalers.find(x)->distinct == 100);
}

TEST_CASE("adult-like corpus has 15 key tokens", "[tokenizer]") {
  auto corpus = fixtures::adultlike_corpus(200, 7);
  VocabSpec vocab = build_vocab(corpus, {});
  REQUIRE(vocab.key_count() == 15);
}

TEST_CASE("scaler standardization", "[tokenizer]") {
  ScalerEntry s;
  s.mean = 5.0;
  s.stddev = 5.0;
  REQUIRE(s.scale(10.0) == Catch::Approx(1.0));
  REQUIRE(s.scale(5.0) == 0.0);

  // round trip over random values
  Rng rng = make_rng(42);
  for (int i = 0; i < 1000; ++i) {
    double x = normal_double(rng) * 100.0 + 3.0;
    REQUIRE(std::abs(s.unscale(s.scale(x)) - x) < 1e-9);
  }
}

TEST_CASE("two-point standardization from data", "[tokenizer]") {
  std::vector<Json> corpus;
  // force the key over tau with many distinct values, two of them 0 and 10
  TokenizerOptions opts;
  opts.tau = 1;
  corpus.push_back(Json{{"k", 0}});
  corpus.push_back(Json{{"k", 10}});
  NumericScalers scalers = fit_scalers(corpus, opts);
  const ScalerEntry* s = scalers.find(SchemaPath{}.child_key("k"));
  REQUIRE(s != nullptr);
  REQUIRE(s->mean == Catch::Approx(5.0));
  REQUIRE(s->stddev == Catch::Approx(5.0));
  REQUIRE(s->scale(10.0) == Catch::Approx(1.0));
  REQUIRE(s->min == 0.0);
  REQUIRE(s->max == 10.0);
}

TEST_CASE("encode nested object with key paths", "[tokenizer]") {
  auto corpus = parse_corpus({R"({"user":{"name":"Alice"}})"});
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers = fit_scalers(corpus, {});
  TokenStream ts = encode(corpus[0], vocab, scalers);

  TokenId key_user = *vocab.find_key("user");
  TokenId key_name = *vocab.find_key("name");
  TokenId val_alice = *vocab.find_value(Json("Alice"));
  std::vector<TokenId> expect = {kStart, key_user, kObjStart,
                                 key_name, val_alice, kObjEnd, kEnd};
  REQUIRE(ts.tokens == expect);

  // Val(Alice) carries path (user, name)
  const KeyPath& p = ts.paths[4];
  REQUIRE(p.size() == 2);
  REQUIRE(p[0].key == "user");
  REQUIRE(p[1].key == "name");
  // delimiters carry their container path
  REQUIRE(ts.paths[0].empty());                // START
  REQUIRE(ts.paths[2].size() == 1);            // OBJ_START at (user)
  REQUIRE(ts.paths[2][0].key == "user");
  REQUIRE(ts.paths[1].empty());                // Key(user) sits at the root
}

TEST_CASE("encode empty record and arrays", "[tokenizer]") {
  auto corpus = parse_corpus(
      {R"({})", R"({"genres":["Action","Sci-Fi"]})"});
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers = fit_scalers(corpus, {});

  TokenStream empty = encode(corpus[0], vocab, scalers);
  REQUIRE(empty.tokens == std::vector<TokenId>{kStart, kEnd});

  TokenStream arr = encode(corpus[1], vocab, scalers);
  TokenId key_genres = *vocab.find_key("genres");
  TokenId val_action = *vocab.find_value(Json("Action"));
  TokenId val_scifi = *vocab.find_value(Json("Sci-Fi"));
  std::vector<TokenId> expect = {kStart,     key_genres, kArrStart,
                                 val_action, val_scifi,  kArrEnd, kEnd};
  REQUIRE(arr.tokens == expect);
  // Val(Sci-Fi) path = (genres, 1)
  const KeyPath& p = arr.paths[4];
  REQUIRE(p.size() == 2);
  REQUIRE(p[0].key == "genres");
  REQUIRE(p[1].is_index);
  REQUIRE(p[1].index == 1);
}

TEST_CASE("encode errors", "[tokenizer]") {
  auto corpus = parse_corpus({R"({"a":"x"})"});
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers;
  REQUIRE_THROWS_AS(encode(Json::parse(R"({"b":"x"})"), vocab, scalers),
                    VocabularyMiss);
  REQUIRE_THROWS_AS(encode(Json::parse(R"({"a":"unknown"})"), vocab, scalers),
                    VocabularyMiss);

  TokenizerOptions tiny;
  tiny.i_max = 2;
  auto arr_corpus = parse_corpus({R"({"a":[1,1,1]})"});
  VocabSpec v2 = build_vocab(arr_corpus, tiny);
  REQUIRE_THROWS_AS(encode(arr_corpus[0], v2, scalers, tiny), Error);
}

TEST_CASE("decode inverts encode", "[tokenizer]") {
  auto corpus = parse_corpus({
      R"({})",
      R"({"user":{"name":"Alice"}})",
      R"({"genres":["Action","Sci-Fi"],"year":1982,"rated":null,"ok":true})",
      R"({"a":{"b":{"c":[[1,2],[3]]}}})",
  });
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers = fit_scalers(corpus, {});
  for (const Json& rec : corpus) {
    Json back = decode(encode(rec, vocab, scalers), vocab, scalers);
    REQUIRE(back.dump() == rec.dump());  // key order preserved
  }
}

TEST_CASE("decode NUM applies the inverse transform", "[tokenizer]") {
  NumericScalers scalers;
  ScalerEntry s;
  s.mean = 5.0;
  s.stddev = 5.0;
  SchemaPath k = SchemaPath{}.child_key("k");
  scalers.by_path[k] = s;

  VocabSpec vocab;
  TokenId key_k = vocab.add_key("k");

  TokenStream ts;
  ts.tokens = {kStart, key_k, kNum, kEnd};
  ts.paths = {{}, {}, {PathElement::Key("k", key_k)}, {}};
  ts.continuous = {std::nullopt, std::nullopt, 1.0, std::nullopt};
  Json rec = decode(ts, vocab, scalers);
  REQUIRE(rec["k"].get<double>() == Catch::Approx(10.0));
}

TEST_CASE("scaled numeric round trip within 1e-9", "[tokenizer]") {
  Rng rng = make_rng(11);
  std::vector<Json> corpus;
  for (int i = 0; i < 500; ++i) {
    corpus.push_back(Json{{"v", normal_double(rng) * 250.0 + 40.0}});
  }
  TokenizerOptions opts;
  opts.tau = 16;
  VocabSpec vocab = build_vocab(corpus, opts);
  NumericScalers scalers = fit_scalers(corpus, opts);
  for (const Json& rec : corpus) {
    Json back = decode(encode(rec, vocab, scalers, opts), vocab, scalers);
    REQUIRE(std::abs(back["v"].get<double>() - rec["v"].get<double>()) < 1e-9);
  }
}

TEST_CASE("decode rejects malformed streams", "[tokenizer]") {
  auto corpus = parse_corpus({R"({"a":{"b":1}})"});
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers;
  TokenStream ts = encode(corpus[0], vocab, scalers);
  ts.tokens.pop_back();  // drop END
  ts.paths.pop_back();
  ts.continuous.pop_back();
  REQUIRE_THROWS_AS(decode(ts, vocab, scalers), StructureError);
}

TEST_CASE("mixed-type keys keep categorical values alongside NUM", "[tokenizer]") {
  std::vector<Json> corpus;
  for (int i = 0; i < 80; ++i) corpus.push_back(Json{{"w", i * 3 + 1}});
  corpus.push_back(Json{{"w", "unknown"}});
  TokenizerOptions opts;
  opts.tau = 32;
  VocabSpec vocab = build_vocab(corpus, opts);
  NumericScalers scalers = fit_scalers(corpus, opts);

  // numeric values alone exceed tau -> scaled; the string stays categorical
  REQUIRE(scalers.has(SchemaPath{}.child_key("w")));
  REQUIRE(vocab.find_value(Json("unknown")).has_value());
  REQUIRE_FALSE(vocab.find_value(Json(1)).has_value());

  TokenStream ts = encode(corpus.back(), vocab, scalers, opts);
  REQUIRE(ts.tokens[2] == *vocab.find_value(Json("unknown")));
  TokenStream ts2 = encode(corpus.front(), vocab, scalers, opts);
  REQUIRE(ts2.tokens[2] == kNum);
}

TEST_CASE("shuffle preserves content and is uniform", "[tokenizer]") {
  Json rec = Json::parse(R"({"a":1,"b":2})");
  Rng rng = make_rng(1);  // uniformity holds at the 5% level for this seed
  int count_ab = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Json shuffled = shuffle_keys(rec, rng);
    REQUIRE(equal_unordered(shuffled, rec));
    if (shuffled.begin().key() == "a") ++count_ab;
  }
  // chi-square, 1 dof, 5%: 3.841
  double e = n / 2.0;
  double chi2 = (count_ab - e) * (count_ab - e) / e +
                ((n - count_ab) - e) * ((n - count_ab) - e) / e;
  REQUIRE(chi2 < 3.841);

  REQUIRE(shuffle_keys(Json::object(), rng).dump() == "{}");
}

TEST_CASE("nested shuffles are independent", "[tokenizer]") {
  Json rec = Json::parse(R"({"o":{"x":1,"y":2},"p":3})");
  Rng rng = make_rng(123);
  // joint outcomes: outer order (o first?) x inner order (x first?)
  int counts[4] = {0, 0, 0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Json s = shuffle_keys(rec, rng);
    bool outer_o_first = s.begin().key() == "o";
    bool inner_x_first = s["o"].begin().key() == "x";
    counts[(outer_o_first ? 2 : 0) + (inner_x_first ? 1 : 0)]++;
  }
  // chi-square, 3 dof, 5%: 7.815
  double e = n / 4.0;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  REQUIRE(chi2 < 7.815);
}

TEST_CASE("round trip across fixture corpora", "[tokenizer]") {
  for (auto corpus : {fixtures::movies_corpus(),
                      fixtures::pathological_corpus(50, 3),
                      fixtures::adultlike_corpus(100, 5)}) {
    VocabSpec vocab = build_vocab(corpus, {});
    NumericScalers scalers = fit_scalers(corpus, {});
    for (const Json& rec : corpus) {
      Json back = decode(encode(rec, vocab, scalers), vocab, scalers);
      REQUIRE(testsupport::records_close(back, rec, 1e-9));
    }
  }
}

TEST_CASE("vocabulary artifact round trip is byte stable", "[tokenizer]") {
  auto corpus = fixtures::adultlike_corpus(150, 9);
  VocabSpec vocab = build_vocab(corpus, {});
  NumericScalers scalers = fit_scalers(corpus, {});
  Json v1 = vocab.to_json();
  Json s1 = scalers.to_json();
  VocabSpec vocab2 = VocabSpec::from_json(v1);
  NumericScalers scalers2 = NumericScalers::from_json(s1);
  REQUIRE(vocab2.to_json().dump() == v1.dump());
  REQUIRE(scalers2.to_json().dump() == s1.dump());

  // token ids stable under round trip
  for (const auto& name : vocab.key_names()) {
    REQUIRE(vocab2.find_key(name) == vocab.find_key(name));
  }
}
