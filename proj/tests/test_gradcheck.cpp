#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "origami/fixtures.hpp"
#include "origami/model.hpp"

using namespace origami;

namespace {

struct GradSetup {
  std::vector<TokenStream> streams;
  ModelConfig cfg;
  VocabSpec vocab;
  SchemaMaskTable table;
  PreparedBatch batch;
};

// 2-layer d=8 K=2 model over a fixed 4-record batch with grammar and schema
// masks active, exactly the configuration the gradient check pins down.
GradSetup make_grad_setup() {
  GradSetup g;
  std::vector<Json> corpus = fixtures::movies_corpus();
  // more records with a scaled numeric path so the MoG head engages
  std::vector<Json> extra;
  for (int i = 0; i < 40; ++i) {
    extra.push_back(Json{{"score", 0.37 * i - 3.0},
                         {"tags", Json::parse(R"(["a","b"])")}});
  }
  std::vector<Json> all = corpus;
  all.insert(all.end(), extra.begin(), extra.end());

  TokenizerOptions opts;
  opts.tau = 16;
  opts.i_max = 8;
  g.vocab = build_vocab(all, opts);
  NumericScalers scalers = fit_scalers(all, opts);
  DerivedSchema schema =
      transform_schema_scaled(derive_schema(all, opts.tau), scalers);
  g.table = compile_mask_table(schema, g.vocab);

  g.cfg.d_model = 8;
  g.cfg.n_layers = 2;
  g.cfg.n_heads = 2;
  g.cfg.d_ff = 16;
  g.cfg.n_components = 2;
  g.cfg.i_max = opts.i_max;
  g.cfg.vocab_size = g.vocab.size();
  g.cfg.max_seq_len = 64;
  g.cfg.dropout = 0.0;

  g.streams.push_back(encode(corpus[0], g.vocab, scalers, opts));
  g.streams.push_back(encode(corpus[1], g.vocab, scalers, opts));
  g.streams.push_back(encode(extra[3], g.vocab, scalers, opts));
  g.streams.push_back(encode(extra[17], g.vocab, scalers, opts));
  std::vector<const TokenStream*> ptrs;
  for (auto& ts : g.streams) ptrs.push_back(&ts);
  g.batch = prepare_batch(ptrs, g.cfg, g.vocab, &g.table);
  return g;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences",
          "[gradcheck]") {
  GradSetup g = make_grad_setup();
  auto params = init_params<double>(g.cfg, 21);

  auto grads = params.zeros_like();
  LossBreakdown base =
      total_loss_and_grad<double>(g.batch, g.cfg, params, &grads);
  REQUIRE(base.n_num_targets > 0);  // MoG head engaged
  REQUIRE(std::isfinite(base.total));

  const double h = 1e-6;
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::string worst_name;

  std::vector<std::pair<std::string, Mat<double>*>> gslots;
  grads.for_each([&](const std::string& name, Mat<double>& m) {
    gslots.emplace_back(name, &m);
  });
  std::size_t slot = 0;
  params.for_each([&](const std::string& name, Mat<double>& p) {
    Mat<double>& analytic = *gslots[slot++].second;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      double saved = p.data()[i];
      p.data()[i] = saved + h;
      double up =
          total_loss_and_grad<double>(g.batch, g.cfg, params, nullptr).total;
      p.data()[i] = saved - h;
      double down =
          total_loss_and_grad<double>(g.batch, g.cfg, params, nullptr).total;
      p.data()[i] = saved;

      double numeric = (up - down) / (2.0 * h);
      double a = analytic.data()[i];
      double err = std::abs(a - numeric);
      double rel = err / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++checked;
      if (err > 1e-7 && rel > 1e-4) {
        ++failed;
        if (rel > worst) {
          worst = rel;
          worst_name = name;
        }
      }
    }
  });

  INFO("checked " << checked << " parameters; worst offender " << worst_name
                  << " rel err " << worst);
  REQUIRE(checked > 1000);
  REQUIRE(failed == 0);
}

TEST_CASE("gradients flow through the sequential position table",
          "[gradcheck]") {
  GradSetup g = make_grad_setup();
  g.cfg.kvpe = false;
  auto params = init_params<double>(g.cfg, 22);
  auto grads = params.zeros_like();
  LossBreakdown base =
      total_loss_and_grad<double>(g.batch, g.cfg, params, &grads);
  REQUIRE(std::isfinite(base.total));

  const double h = 1e-6;
  std::size_t failures = 0;
  for (Eigen::Index i = 0; i < 40; ++i) {
    Eigen::Index idx = (i * 37) % params.pos_emb.size();
    double saved = params.pos_emb.data()[idx];
    params.pos_emb.data()[idx] = saved + h;
    double up =
        total_loss_and_grad<double>(g.batch, g.cfg, params, nullptr).total;
    params.pos_emb.data()[idx] = saved - h;
    double down =
        total_loss_and_grad<double>(g.batch, g.cfg, params, nullptr).total;
    params.pos_emb.data()[idx] = saved;
    double numeric = (up - down) / (2.0 * h);
    double a = grads.pos_emb.data()[idx];
    double err = std::abs(a - numeric);
    if (err > 1e-7 &&
        err / std::max({std::abs(a), std::abs(numeric), 1e-8}) > 1e-4) {
      ++failures;
    }
  }
  REQUIRE(failures == 0);
}
