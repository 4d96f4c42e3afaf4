#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <fstream>

#include "origami/checkpoint.hpp"
#include "origami/fixtures.hpp"
#include "origami/sampler.hpp"
#include "support.hpp"

using namespace origami;

namespace {

Checkpoint untrained_checkpoint(const std::vector<Json>& corpus,
                                std::uint64_t seed, int k = 2) {
  Checkpoint c;
  TokenizerOptions opts;
  opts.tau = 16;
  opts.i_max = 16;
  c.vocab = build_vocab(corpus, opts);
  c.scalers = fit_scalers(corpus, opts);
  c.schema_original = derive_schema(corpus, opts.tau);
  c.schema_scaled = transform_schema_scaled(c.schema_original, c.scalers);
  c.config.d_model = 16;
  c.config.n_layers = 2;
  c.config.n_heads = 2;
  c.config.d_ff = 32;
  c.config.n_components = k;
  c.config.i_max = opts.i_max;
  c.config.vocab_size = c.vocab.size();
  c.config.max_seq_len = 128;
  c.config.dropout = 0.0;
  c.params = init_params<float>(c.config, seed);
  std::size_t longest = 0;
  for (const Json& r : corpus) {
    longest = std::max(longest, encode(r, c.vocab, c.scalers, opts).length());
  }
  c.max_train_stream_len = longest;
  return c;
}

}  // namespace

TEST_CASE("count tracker enforces required keys", "[sampler]") {
  auto corpus = fixtures::movies_corpus();
  VocabSpec vocab = build_vocab(corpus, {});
  DerivedSchema schema = derive_schema(corpus, 64);
  SchemaMaskTable table = compile_mask_table(schema, vocab);

  PDAState pda = advance(init_state(), kStart, vocab);
  CountTracker tracker;
  tracker.schema = &schema;
  tracker.open_object(SchemaPath{});

  Mask m = next_mask(pda, vocab, table, tracker, SchemaPath{});
  REQUIRE(m[kEnd] == 0);  // title, genres, awards all outstanding
  REQUIRE(m[*vocab.find_key("title")] == 1);

  tracker.key_emitted(*vocab.find_key("title"), "title");
  tracker.key_emitted(*vocab.find_key("genres"), "genres");
  tracker.key_emitted(*vocab.find_key("awards"), "awards");
  Mask m2 = next_mask(pda, vocab, table, tracker, SchemaPath{});
  REQUIRE(m2[kEnd] == 1);
  // a key emitted once is disabled for the rest of the object
  REQUIRE(m2[*vocab.find_key("title")] == 0);
}

TEST_CASE("count tracker enforces array bounds and uniqueness", "[sampler]") {
  auto corpus = fixtures::movies_corpus();
  VocabSpec vocab = build_vocab(corpus, {});
  DerivedSchema schema = derive_schema(corpus, 64);
  SchemaMaskTable table = compile_mask_table(schema, vocab);

  SchemaPath genres = SchemaPath{}.child_key("genres");
  PDAState pda = advance(init_state(), kStart, vocab);
  pda = advance(pda, *vocab.find_key("genres"), vocab);
  pda = advance(pda, kArrStart, vocab);

  CountTracker tracker;
  tracker.schema = &schema;
  tracker.open_object(SchemaPath{});
  tracker.key_emitted(*vocab.find_key("genres"), "genres");
  tracker.open_array(genres);

  // below minItems (2): ARR_END disabled
  Mask m0 = next_mask(pda, vocab, table, tracker, genres.child_wild());
  REQUIRE(m0[kArrEnd] == 0);
  REQUIRE(m0[*vocab.find_value(Json("Action"))] == 1);

  REQUIRE(tracker.element_completed(Json("Action")));
  Mask m1 = next_mask(pda, vocab, table, tracker, genres.child_wild());
  // duplicate element disabled under uniqueItems
  REQUIRE(m1[*vocab.find_value(Json("Action"))] == 0);
  REQUIRE(m1[*vocab.find_value(Json("Sci-Fi"))] == 1);

  REQUIRE(tracker.element_completed(Json("Adventure")));
  Mask m2 = next_mask(pda, vocab, table, tracker, genres.child_wild());
  REQUIRE(m2[kArrEnd] == 1);  // at minItems now

  REQUIRE(tracker.element_completed(Json("Sci-Fi")));
  // at maxItems (3): only ARR_END among continuations
  Mask m3 = next_mask(pda, vocab, table, tracker, genres.child_wild());
  REQUIRE(m3[kArrEnd] == 1);
  for (TokenId t = vocab.value_base(); t < vocab.size(); ++t) {
    REQUIRE(m3[t] == 0);
  }
  REQUIRE(m3[kObjStart] == 0);

  // duplicate container elements are rejected on completion
  REQUIRE_FALSE(tracker.element_completed(Json("Sci-Fi")));
}

TEST_CASE("deadlocked masks raise", "[sampler]") {
  auto corpus = fixtures::movies_corpus();
  VocabSpec vocab = build_vocab(corpus, {});
  DerivedSchema schema = derive_schema(corpus, 64);
  SchemaMaskTable table = compile_mask_table(schema, vocab);
  PDAState pda = advance(init_state(), kStart, vocab);
  CountTracker tracker;
  tracker.schema = &schema;
  tracker.open_object(SchemaPath{});
  // all keys emitted but required marked outstanding: nothing is enabled
  tracker.key_emitted(*vocab.find_key("title"), "not-title");
  tracker.key_emitted(*vocab.find_key("genres"), "not-genres");
  tracker.key_emitted(*vocab.find_key("awards"), "not-awards");
  REQUIRE_THROWS_AS(next_mask(pda, vocab, table, tracker, SchemaPath{}),
                    GenerationDeadlock);
}

TEST_CASE("sample_token degenerate cases", "[sampler]") {
  Vec<float> logits(4);
  logits << 0.1f, 2.0f, -1.0f, 0.5f;
  Rng rng = make_rng(7);

  Mask one(4, 0);
  one[2] = 1;
  for (int i = 0; i < 20; ++i) {
    REQUIRE(sample_token<float>(logits, one, 1.0, rng) == 2);
  }

  Mask all(4, 1);
  for (int i = 0; i < 20; ++i) {
    REQUIRE(sample_token<float>(logits, all, 1e-6, rng) == 1);  // argmax
  }

  REQUIRE_THROWS_AS(sample_token<float>(logits, all, 0.0, rng), Error);
}

TEST_CASE("sample_token matches the masked softmax empirically", "[sampler]") {
  Vec<float> logits(5);
  logits << 1.0f, 0.0f, 2.0f, -1.0f, 0.7f;
  Mask mask(5, 1);
  mask[3] = 0;  // disabled entry draws no samples

  double denom = 0;
  std::vector<double> expect(5, 0.0);
  for (int i = 0; i < 5; ++i) {
    if (!mask[i]) continue;
    expect[i] = std::exp(double(logits(i)) - 2.0);
    denom += expect[i];
  }
  for (auto& e : expect) e /= denom;

  Rng rng = make_rng(123);
  const int n = 100000;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < n; ++i) {
    counts[sample_token<float>(logits, mask, 1.0, rng)]++;
  }
  REQUIRE(counts[3] == 0);
  for (int i = 0; i < 5; ++i) {
    REQUIRE(std::abs(double(counts[i]) / n - expect[i]) < 0.01);
  }
}

TEST_CASE("sample_numeric concentrates, averages and clips", "[sampler]") {
  Rng rng = make_rng(31);

  MoGOutput tight;
  tight.weights = {1.0};
  tight.means = {0.42};
  tight.log_vars = {-30.0};  // sigma ~ 3e-7
  for (int i = 0; i < 100; ++i) {
    REQUIRE(std::abs(sample_numeric(tight, rng, std::nullopt, std::nullopt) -
                     0.42) < 1e-6);
  }

  MoGOutput wide;
  wide.weights = {1.0};
  wide.means = {0.3};
  wide.log_vars = {2.0 * std::log(0.1)};  // sigma = 0.1
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sum += sample_numeric(wide, rng, std::nullopt, std::nullopt);
  }
  REQUIRE(std::abs(sum / n - 0.3) < 0.002);

  for (int i = 0; i < 1000; ++i) {
    double x = sample_numeric(wide, rng, 0.25, 0.35);
    REQUIRE(x >= 0.25);
    REQUIRE(x <= 0.35);
  }
}

TEST_CASE("generation from an untrained model is schema valid", "[sampler]") {
  auto corpus = fixtures::movies_corpus();
  Checkpoint ckpt = untrained_checkpoint(corpus, 77);
  SchemaMaskTable table = compile_mask_table(ckpt.schema_scaled, ckpt.vocab);

  GenerationSettings settings;
  settings.count = 200;
  settings.seed = 5;
  settings.workers = 2;
  GenerationStats stats;
  std::vector<Json> records = generate(ckpt, table, settings, &stats);

  REQUIRE(records.size() == 200);
  for (const Json& rec : records) {
    CAPTURE(rec.dump());
    REQUIRE(validate(rec, ckpt.schema_original).empty());
    // integer-kind keys come out on the integer grid
    if (rec.contains("awards") && rec["awards"].contains("nominations")) {
      REQUIRE(rec["awards"]["nominations"].is_number_integer());
    }
  }
}

TEST_CASE("generation is deterministic per seed and worker independent",
          "[sampler]") {
  auto corpus = fixtures::adultlike_corpus(300, 3);
  Checkpoint ckpt = untrained_checkpoint(corpus, 11, 3);
  SchemaMaskTable table = compile_mask_table(ckpt.schema_scaled, ckpt.vocab);

  GenerationSettings settings;
  settings.count = 40;
  settings.seed = 99;
  settings.workers = 1;
  std::vector<Json> a = generate(ckpt, table, settings);
  settings.workers = 2;
  std::vector<Json> b = generate(ckpt, table, settings);
  settings.seed = 100;
  std::vector<Json> c = generate(ckpt, table, settings);

  auto dump = [](const std::vector<Json>& v) {
    std::string s;
    for (const auto& r : v) s += r.dump() + "\n";
    return s;
  };
  REQUIRE(dump(a) == dump(b));
  REQUIRE(dump(a) != dump(c));
}

TEST_CASE("checkpoint round trip preserves generation", "[sampler]") {
  auto corpus = fixtures::movies_corpus();
  Checkpoint ckpt = untrained_checkpoint(corpus, 13);
  auto dir = testsupport::tmpdir("ckpt");
  save_checkpoint((dir / "model.ckpt").string(), ckpt);
  Checkpoint loaded = load_checkpoint((dir / "model.ckpt").string());

  REQUIRE(loaded.config.to_json().dump() == ckpt.config.to_json().dump());
  REQUIRE(loaded.vocab.to_json().dump() == ckpt.vocab.to_json().dump());
  REQUIRE(schema_to_json(loaded.schema_original).dump() ==
          schema_to_json(ckpt.schema_original).dump());

  SchemaMaskTable t1 = compile_mask_table(ckpt.schema_scaled, ckpt.vocab);
  SchemaMaskTable t2 = compile_mask_table(loaded.schema_scaled, loaded.vocab);
  GenerationSettings settings;
  settings.count = 20;
  settings.seed = 42;
  std::vector<Json> a = generate(ckpt, t1, settings);
  std::vector<Json> b = generate(loaded, t2, settings);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].dump() == b[i].dump());
  }
}

TEST_CASE("corrupt checkpoints are rejected", "[sampler]") {
  auto dir = testsupport::tmpdir("ckpt_bad");
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << "not a checkpoint at all";
  }
  REQUIRE_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), IoError);
}
