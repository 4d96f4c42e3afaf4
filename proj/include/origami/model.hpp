#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "origami/errors.hpp"
#include "origami/grammar.hpp"
#include "origami/json_io.hpp"
#include "origami/rng.hpp"
#include "origami/schema.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  int d_model = 64;
  int n_layers = 8;
  int n_heads = 4;
  int d_ff = 512;
  int n_components = 5;     // MoG mixture size K
  int i_max = 256;          // array-position embedding capacity
  int vocab_size = 0;
  int max_seq_len = 512;
  double dropout = 0.1;
  bool kvpe = true;         // false: learned sequential position embeddings

  void check() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model must be a positive multiple of n_heads");
    }
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (n_components < 1) throw ConfigError("n_components must be >= 1");
    if (vocab_size <= kNumStructural) throw ConfigError("vocab_size too small");
    if (max_seq_len < 2) throw ConfigError("max_seq_len too small");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout out of range");
  }

  int head_dim() const { return d_model / n_heads; }

  Json to_json() const {
    return Json{{"d_model", d_model},
                {"n_layers", n_layers},
                {"n_heads", n_heads},
                {"d_ff", d_ff},
                {"n_components", n_components},
                {"i_max", i_max},
                {"vocab_size", vocab_size},
                {"max_seq_len", max_seq_len},
                {"dropout", dropout},
                {"kvpe", kvpe}};
  }
  static ModelConfig from_json(const Json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.n_components = j.at("n_components").get<int>();
    c.i_max = j.at("i_max").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.kvpe = j.at("kvpe").get<bool>();
    c.check();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class S>
struct ModelParamsT {
  struct Layer {
    Mat<S> ln1_g, ln1_b;   // 1 x d
    Mat<S> w_qkv, b_qkv;   // d x 3d, 1 x 3d
    Mat<S> w_o, b_o;       // d x d, 1 x d
    Mat<S> ln2_g, ln2_b;   // 1 x d
    Mat<S> w_ff1, b_ff1;   // d x d_ff, 1 x d_ff
    Mat<S> w_ff2, b_ff2;   // d_ff x d, 1 x d
  };

  Mat<S> tok_emb;          // |V| x d
  Mat<S> idx_emb;          // (i_max+1) x d
  Mat<S> pos_emb;          // max_seq_len x d (sequential mode only)
  Mat<S> v_num;            // 1 x d
  std::vector<Layer> layers;
  Mat<S> lnf_g, lnf_b;     // 1 x d
  Mat<S> w_d, b_d;         // d x |V|, 1 x |V|
  Mat<S> w_c, b_c;         // d x 3K, 1 x 3K

  template <class Fn>
  void for_each(Fn&& fn) {
    fn("tok_emb", tok_emb);
    fn("idx_emb", idx_emb);
    if (pos_emb.size() > 0) fn("pos_emb", pos_emb);
    fn("v_num", v_num);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      fn(p + "ln1_g", layers[l].ln1_g);
      fn(p + "ln1_b", layers[l].ln1_b);
      fn(p + "w_qkv", layers[l].w_qkv);
      fn(p + "b_qkv", layers[l].b_qkv);
      fn(p + "w_o", layers[l].w_o);
      fn(p + "b_o", layers[l].b_o);
      fn(p + "ln2_g", layers[l].ln2_g);
      fn(p + "ln2_b", layers[l].ln2_b);
      fn(p + "w_ff1", layers[l].w_ff1);
      fn(p + "b_ff1", layers[l].b_ff1);
      fn(p + "w_ff2", layers[l].w_ff2);
      fn(p + "b_ff2", layers[l].b_ff2);
    }
    fn("lnf_g", lnf_g);
    fn("lnf_b", lnf_b);
    fn("w_d", w_d);
    fn("b_d", b_d);
    fn("w_c", w_c);
    fn("b_c", b_c);
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for_each([&](const std::string&, Mat<S>& m) { n += m.size(); });
    return n;
  }

  // Same shapes, all zeros; used for gradients and optimizer state.
  ModelParamsT<S> zeros_like() {
    ModelParamsT<S> z;
    z.layers.resize(layers.size());
    z.tok_emb.setZero(tok_emb.rows(), tok_emb.cols());
    z.idx_emb.setZero(idx_emb.rows(), idx_emb.cols());
    if (pos_emb.size() > 0) z.pos_emb.setZero(pos_emb.rows(), pos_emb.cols());
    z.v_num.setZero(v_num.rows(), v_num.cols());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& s = layers[l];
      Layer& d = z.layers[l];
      d.ln1_g.setZero(s.ln1_g.rows(), s.ln1_g.cols());
      d.ln1_b.setZero(s.ln1_b.rows(), s.ln1_b.cols());
      d.w_qkv.setZero(s.w_qkv.rows(), s.w_qkv.cols());
      d.b_qkv.setZero(s.b_qkv.rows(), s.b_qkv.cols());
      d.w_o.setZero(s.w_o.rows(), s.w_o.cols());
      d.b_o.setZero(s.b_o.rows(), s.b_o.cols());
      d.ln2_g.setZero(s.ln2_g.rows(), s.ln2_g.cols());
      d.ln2_b.setZero(s.ln2_b.rows(), s.ln2_b.cols());
      d.w_ff1.setZero(s.w_ff1.rows(), s.w_ff1.cols());
      d.b_ff1.setZero(s.b_ff1.rows(), s.b_ff1.cols());
      d.w_ff2.setZero(s.w_ff2.rows(), s.w_ff2.cols());
      d.b_ff2.setZero(s.b_ff2.rows(), s.b_ff2.cols());
    }
    z.lnf_g.setZero(lnf_g.rows(), lnf_g.cols());
    z.lnf_b.setZero(lnf_b.rows(), lnf_b.cols());
    z.w_d.setZero(w_d.rows(), w_d.cols());
    z.b_d.setZero(b_d.rows(), b_d.cols());
    z.w_c.setZero(w_c.rows(), w_c.cols());
    z.b_c.setZero(b_c.rows(), b_c.cols());
    return z;
  }

  void set_zero() {
    for_each([](const std::string&, Mat<S>& m) { m.setZero(); });
  }
};

template <class S>
ModelParamsT<S> init_params(const ModelConfig& cfg, std::uint64_t seed,
                            double init_std = 0.02) {
  cfg.check();
  Rng rng = make_rng({seed, 0x70617261ULL});
  auto normal_fill = [&](Mat<S>& m, int rows, int cols) {
    m.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        m(i, j) = static_cast<S>(normal_double(rng) * init_std);
      }
    }
  };

  const int d = cfg.d_model;
  ModelParamsT<S> p;
  normal_fill(p.tok_emb, cfg.vocab_size, d);
  normal_fill(p.idx_emb, cfg.i_max + 1, d);
  if (!cfg.kvpe) {
    normal_fill(p.pos_emb, cfg.max_seq_len, d);
  } else {
    p.pos_emb.resize(0, 0);
  }
  normal_fill(p.v_num, 1, d);
  p.layers.resize(cfg.n_layers);
  for (auto& l : p.layers) {
    l.ln1_g.setOnes(1, d);
    l.ln1_b.setZero(1, d);
    normal_fill(l.w_qkv, d, 3 * d);
    l.b_qkv.setZero(1, 3 * d);
    normal_fill(l.w_o, d, d);
    l.b_o.setZero(1, d);
    l.ln2_g.setOnes(1, d);
    l.ln2_b.setZero(1, d);
    normal_fill(l.w_ff1, d, cfg.d_ff);
    l.b_ff1.setZero(1, cfg.d_ff);
    normal_fill(l.w_ff2, cfg.d_ff, d);
    l.b_ff2.setZero(1, d);
  }
  p.lnf_g.setOnes(1, d);
  p.lnf_b.setZero(1, d);
  normal_fill(p.w_d, d, cfg.vocab_size);
  p.b_d.setZero(1, cfg.vocab_size);
  normal_fill(p.w_c, d, 3 * cfg.n_components);
  p.b_c.setZero(1, 3 * cfg.n_components);
  return p;
}

// ---------------------------------------------------------------------------
// Prepared batches
// ---------------------------------------------------------------------------

// KVPE path elements are stored flattened as ids: values < vocab_size refer
// to the token embedding table (tied key embeddings); values >= vocab_size
// refer to the array-index table at (id - vocab_size).
struct PreparedBatch {
  int batch = 0;
  int seq_len = 0;  // T, includes left padding

  std::vector<TokenId> tokens;            // B*T, PAD in the pad prefix
  std::vector<int> pad_len;               // per record
  std::vector<double> continuous;         // B*T, x~ at NUM positions else 0
  std::vector<std::uint8_t> is_num;       // B*T
  std::vector<std::int32_t> kvpe_off;     // B*T+1 offsets into kvpe_ids
  std::vector<std::int32_t> kvpe_ids;

  // Next-token targets; -1 where no target exists (pad prefix, last token).
  std::vector<TokenId> target;            // B*T
  std::vector<double> target_continuous;  // B*T, defined where target == NUM
  // Effective (grammar AND schema) mask per target position.
  std::vector<std::int64_t> mask_offset;  // B*T, -1 when unmasked
  std::vector<std::uint8_t> mask_bits;

  std::size_t index(int b, int t) const {
    return static_cast<std::size_t>(b) * seq_len + t;
  }
};

inline PreparedBatch prepare_batch(const std::vector<const TokenStream*>& streams,
                                   const ModelConfig& cfg,
                                   const VocabSpec& vocab,
                                   const SchemaMaskTable* table) {
  PreparedBatch pb;
  pb.batch = static_cast<int>(streams.size());
  std::size_t max_len = 0;
  for (const TokenStream* s : streams) max_len = std::max(max_len, s->length());
  if (max_len > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw Error("prepare_batch: sequence length " + std::to_string(max_len) +
                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  pb.seq_len = static_cast<int>(max_len);
  const std::size_t total = static_cast<std::size_t>(pb.batch) * pb.seq_len;
  pb.tokens.assign(total, kPad);
  pb.pad_len.resize(pb.batch);
  pb.continuous.assign(total, 0.0);
  pb.is_num.assign(total, 0);
  pb.kvpe_off.assign(total + 1, 0);
  pb.target.assign(total, -1);
  pb.target_continuous.assign(total, 0.0);
  pb.mask_offset.assign(total, -1);

  // Offsets first so kvpe_ids can be filled in order.
  for (int b = 0; b < pb.batch; ++b) {
    const TokenStream& s = *streams[b];
    int pad = pb.seq_len - static_cast<int>(s.length());
    pb.pad_len[b] = pad;
    for (std::size_t t = 0; t < s.length(); ++t) {
      pb.kvpe_off[pb.index(b, pad + static_cast<int>(t)) + 1] =
          static_cast<std::int32_t>(s.paths[t].size());
    }
  }
  for (std::size_t i = 0; i < total; ++i) pb.kvpe_off[i + 1] += pb.kvpe_off[i];
  pb.kvpe_ids.resize(pb.kvpe_off[total]);

  const std::int32_t vsize = cfg.vocab_size;
  for (int b = 0; b < pb.batch; ++b) {
    const TokenStream& s = *streams[b];
    const int pad = pb.pad_len[b];
    std::vector<Mask> gmasks;
    std::vector<std::int32_t> srows;
    if (table != nullptr) {
      gmasks = masks_for_sequence(s, vocab);
      srows = schema_rows_for_sequence(s, *table);
    }
    for (std::size_t t = 0; t < s.length(); ++t) {
      const std::size_t at = pb.index(b, pad + static_cast<int>(t));
      pb.tokens[at] = s.tokens[t];
      if (s.continuous[t].has_value()) {
        pb.continuous[at] = *s.continuous[t];
        pb.is_num[at] = 1;
      }
      std::int32_t off = pb.kvpe_off[at];
      for (const PathElement& e : s.paths[t]) {
        if (e.is_index) {
          if (static_cast<int>(e.index) >= cfg.i_max) {
            throw Error("prepare_batch: array index exceeds I_max");
          }
          pb.kvpe_ids[off++] = vsize + static_cast<std::int32_t>(e.index);
        } else {
          TokenId id = e.key_id >= 0 ? e.key_id : vocab.find_key(e.key).value();
          pb.kvpe_ids[off++] = id;
        }
      }
      if (t + 1 < s.length()) {
        pb.target[at] = s.tokens[t + 1];
        if (s.continuous[t + 1].has_value()) {
          pb.target_continuous[at] = *s.continuous[t + 1];
        }
        if (table != nullptr) {
          pb.mask_offset[at] = static_cast<std::int64_t>(pb.mask_bits.size());
          const Mask& gm = gmasks[t];
          const std::uint8_t* sm = table->row(srows[t]);
          for (std::int32_t vtok = 0; vtok < vsize; ++vtok) {
            pb.mask_bits.push_back(gm[vtok] & sm[vtok]);
          }
        }
      }
    }
  }
  return pb;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

namespace nn {

template <class S>
S gelu(S x) {
  // Exact (erf) form.
  return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475)));
}

template <class S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
  return cdf + x * pdf;
}

// Row-wise layer norm; caches normalized rows and inverse stddev.
template <class S>
void layernorm_forward(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b,
                       Mat<S>& y, Mat<S>& xhat, Vec<S>& rstd) {
  const auto n = x.rows();
  const auto d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  rstd.resize(n);
  const S eps = S(1e-5);
  for (Eigen::Index i = 0; i < n; ++i) {
    S mean = x.row(i).mean();
    S var = (x.row(i).array() - mean).square().mean();
    S r = S(1) / std::sqrt(var + eps);
    rstd(i) = r;
    xhat.row(i) = ((x.row(i).array() - mean) * r).matrix();
    y.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  }
}

template <class S>
void layernorm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd,
                        const Mat<S>& g, Mat<S>& dx, Mat<S>& dg, Mat<S>& db) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  dx.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
        dy.row(i).array() * g.row(0).array();
    S m1 = dxhat.mean();
    S m2 = (dxhat * xhat.row(i).array()).mean();
    dx.row(i) = ((dxhat - m1 - xhat.row(i).array() * m2) * rstd(i)).matrix();
  }
  dg += dy.cwiseProduct(xhat).colwise().sum();
  db += dy.colwise().sum();
}

}  // namespace nn

template <class S>
struct LayerCache {
  Mat<S> input;
  Mat<S> ln1_xhat, ln1_out;
  Vec<S> ln1_rstd;
  Mat<S> qkv;                      // N x 3d
  std::vector<Mat<S>> attn_probs;  // per record: (H*T) x T softmax rows
  Mat<S> attn_ctx;                 // N x d
  std::vector<std::uint8_t> attn_drop;
  Mat<S> resid1;
  Mat<S> ln2_xhat, ln2_out;
  Vec<S> ln2_rstd;
  Mat<S> ff_pre;                   // N x d_ff, before GELU
  Mat<S> ff_act;                   // N x d_ff, after GELU (and dropout)
  std::vector<std::uint8_t> ff_drop;
};

template <class S>
struct ForwardCache {
  Mat<S> h0;
  std::vector<LayerCache<S>> layers;
  Mat<S> final_stream;             // residual stream after the last layer
  Mat<S> lnf_xhat, hf;
  Vec<S> lnf_rstd;
};

// Input embedding: token embedding (x~ * v_num at NUM positions) plus the
// position term (KVPE path sum or learned sequential index).
template <class S>
void embed_batch(const PreparedBatch& pb, const ModelConfig& cfg,
                 const ModelParamsT<S>& p, Mat<S>& h0) {
  const int d = cfg.d_model;
  const std::size_t total = pb.tokens.size();
  h0.setZero(static_cast<Eigen::Index>(total), d);
  for (std::size_t i = 0; i < total; ++i) {
    const TokenId tok = pb.tokens[i];
    if (tok == kPad) continue;
    if (pb.is_num[i]) {
      h0.row(i) = p.v_num.row(0) * static_cast<S>(pb.continuous[i]);
    } else {
      h0.row(i) = p.tok_emb.row(tok);
    }
    if (cfg.kvpe) {
      for (std::int32_t e = pb.kvpe_off[i]; e < pb.kvpe_off[i + 1]; ++e) {
        const std::int32_t id = pb.kvpe_ids[e];
        if (id < cfg.vocab_size) {
          h0.row(i) += p.tok_emb.row(id);
        } else {
          h0.row(i) += p.idx_emb.row(id - cfg.vocab_size);
        }
      }
    } else {
      const int b = static_cast<int>(i) / pb.seq_len;
      const int t = static_cast<int>(i) % pb.seq_len;
      h0.row(i) += p.pos_emb.row(t - pb.pad_len[b]);
    }
  }
}

// Position embedding of one token as a standalone vector (KVPE sum pooling).
// Path elements must carry resolved key ids.
template <class S>
Vec<S> kvpe(const KeyPath& path, const ModelParamsT<S>& p, const ModelConfig& cfg) {
  Vec<S> out = Vec<S>::Zero(cfg.d_model);
  for (const PathElement& e : path) {
    if (e.is_index) {
      if (static_cast<int>(e.index) >= cfg.i_max) {
        throw Error("kvpe: array index " + std::to_string(e.index) +
                    " exceeds I_max");
      }
      out += p.idx_emb.row(e.index).transpose();
    } else {
      if (e.key_id < 0 || e.key_id >= cfg.vocab_size) {
        throw Error("kvpe: unresolved key id for \"" + e.key + "\"");
      }
      out += p.tok_emb.row(e.key_id).transpose();
    }
  }
  return out;
}

namespace detail {

// Cheap counter-based dropout stream: one splitmix per element, derived from
// a base drawn once per tensor. Keeps masks reproducible without paying for
// a full mt19937 step per element.
template <class S>
void apply_dropout(Mat<S>& x, double rate, Rng* rng,
                   std::vector<std::uint8_t>& mask) {
  if (rng == nullptr || rate <= 0.0) {
    mask.clear();
    return;
  }
  const double keep = 1.0 - rate;
  const S scale = static_cast<S>(1.0 / keep);
  const std::uint64_t threshold =
      static_cast<std::uint64_t>(keep * 9007199254740992.0);  // 2^53
  const std::uint64_t base = (*rng)();
  mask.resize(static_cast<std::size_t>(x.size()));
  S* data = x.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    bool kept = (splitmix64(base + i) >> 11) < threshold;
    mask[i] = kept;
    data[i] = kept ? data[i] * scale : S(0);
  }
}

template <class S>
void apply_dropout_backward(Mat<S>& dx, double rate,
                            const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return;
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  S* data = dx.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    data[i] = mask[i] ? data[i] * scale : S(0);
  }
}

}  // namespace detail

// Full forward over a left-padded batch. Pad rows stay zero; attention masks
// pad keys, so the last-position outputs match an unpadded run exactly.
template <class S>
void forward_batch(const PreparedBatch& pb, const ModelConfig& cfg,
                   const ModelParamsT<S>& p, ForwardCache<S>& cache,
                   Rng* dropout_rng = nullptr) {
  const int B = pb.batch;
  const int T = pb.seq_len;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

  embed_batch(pb, cfg, p, cache.h0);
  cache.layers.resize(cfg.n_layers);

  const Mat<S>* h = &cache.h0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerCache<S>& lc = cache.layers[l];
    const auto& lp = p.layers[l];
    lc.input = *h;

    nn::layernorm_forward(lc.input, lp.ln1_g, lp.ln1_b, lc.ln1_out, lc.ln1_xhat,
                          lc.ln1_rstd);
    lc.qkv.noalias() = lc.ln1_out * lp.w_qkv;
    lc.qkv.rowwise() += lp.b_qkv.row(0);

    lc.attn_ctx.setZero(static_cast<Eigen::Index>(B) * T, d);
    lc.attn_probs.assign(B, Mat<S>());
    for (int b = 0; b < B; ++b) {
      const int pad = pb.pad_len[b];
      Mat<S>& probs = lc.attn_probs[b];
      probs.setZero(static_cast<Eigen::Index>(H) * T, T);
      for (int hh = 0; hh < H; ++hh) {
        for (int i = pad; i < T; ++i) {
          const Eigen::Index row = static_cast<Eigen::Index>(b) * T + i;
          const Eigen::Index prow = static_cast<Eigen::Index>(hh) * T + i;
          const auto q = lc.qkv.row(row).segment(hh * dh, dh);
          S maxv = std::numeric_limits<S>::lowest();
          for (int j = pad; j <= i; ++j) {
            const Eigen::Index jrow = static_cast<Eigen::Index>(b) * T + j;
            S s = q.dot(lc.qkv.row(jrow).segment(d + hh * dh, dh)) * inv_sqrt_dh;
            probs(prow, j) = s;
            maxv = std::max(maxv, s);
          }
          S denom = S(0);
          for (int j = pad; j <= i; ++j) {
            S e = std::exp(probs(prow, j) - maxv);
            probs(prow, j) = e;
            denom += e;
          }
          auto out = lc.attn_ctx.row(row).segment(hh * dh, dh);
          for (int j = pad; j <= i; ++j) {
            const Eigen::Index jrow = static_cast<Eigen::Index>(b) * T + j;
            S w = probs(prow, j) / denom;
            probs(prow, j) = w;
            out += w * lc.qkv.row(jrow).segment(2 * d + hh * dh, dh);
          }
        }
      }
    }

    Mat<S> attn_proj;
    attn_proj.noalias() = lc.attn_ctx * lp.w_o;
    attn_proj.rowwise() += lp.b_o.row(0);
    detail::apply_dropout(attn_proj, cfg.dropout, dropout_rng, lc.attn_drop);
    lc.resid1 = lc.input + attn_proj;

    nn::layernorm_forward(lc.resid1, lp.ln2_g, lp.ln2_b, lc.ln2_out, lc.ln2_xhat,
                          lc.ln2_rstd);
    lc.ff_pre.noalias() = lc.ln2_out * lp.w_ff1;
    lc.ff_pre.rowwise() += lp.b_ff1.row(0);
    lc.ff_act = lc.ff_pre.unaryExpr([](S x) { return nn::gelu(x); });
    detail::apply_dropout(lc.ff_act, cfg.dropout, dropout_rng, lc.ff_drop);

    Mat<S>& next =
        (l + 1 < cfg.n_layers) ? cache.layers[l + 1].input : cache.final_stream;
    next.noalias() = lc.ff_act * lp.w_ff2;
    next.rowwise() += lp.b_ff2.row(0);
    next += lc.resid1;
    h = &next;
  }

  nn::layernorm_forward(cache.final_stream, p.lnf_g, p.lnf_b, cache.hf,
                        cache.lnf_xhat, cache.lnf_rstd);
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

template <class S>
Vec<S> discrete_logits(const RowVec<S>& h, const ModelParamsT<S>& p) {
  RowVec<S> out = h * p.w_d + p.b_d;
  return out.transpose();
}

// Disabled entries become -inf; their softmax probability is exactly zero.
template <class S>
void apply_mask_inplace(Vec<S>& logits, const std::uint8_t* mask) {
  bool any = false;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      any = true;
    } else {
      logits(i) = -std::numeric_limits<S>::infinity();
    }
  }
  if (!any) throw Error("apply_mask: empty mask");
}

constexpr double kLogVarFloor = -13.8;  // sigma^2 >= ~1e-6

struct MoGOutput {
  std::vector<double> weights;   // pi, on the simplex
  std::vector<double> means;
  std::vector<double> log_vars;  // floored at kLogVarFloor
};

template <class S>
MoGOutput mog_params(const RowVec<S>& h, const ModelParamsT<S>& p) {
  RowVec<S> raw = h * p.w_c + p.b_c;
  const int k = static_cast<int>(raw.size()) / 3;
  MoGOutput out;
  out.weights.resize(k);
  out.means.resize(k);
  out.log_vars.resize(k);
  double maxl = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) maxl = std::max(maxl, double(raw(j)));
  double denom = 0.0;
  for (int j = 0; j < k; ++j) {
    out.weights[j] = std::exp(double(raw(j)) - maxl);
    denom += out.weights[j];
  }
  for (int j = 0; j < k; ++j) out.weights[j] /= denom;
  for (int j = 0; j < k; ++j) out.means[j] = double(raw(k + j));
  for (int j = 0; j < k; ++j) {
    out.log_vars[j] = std::max(double(raw(2 * k + j)), kLogVarFloor);
  }
  return out;
}

// -ln sum_j pi_j N(x; mu_j, sigma_j^2), log-sum-exp form.
inline double mog_nll(const MoGOutput& out, double target) {
  constexpr double kLogTwoPi = 1.8378770664093454836;
  const int k = static_cast<int>(out.weights.size());
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(k);
  for (int j = 0; j < k; ++j) {
    double diff = target - out.means[j];
    terms[j] = std::log(std::max(out.weights[j], 1e-300)) -
               0.5 * (kLogTwoPi + out.log_vars[j] +
                      diff * diff * std::exp(-out.log_vars[j]));
    best = std::max(best, terms[j]);
  }
  double acc = 0.0;
  for (int j = 0; j < k; ++j) acc += std::exp(terms[j] - best);
  return -(best + std::log(acc));
}

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;      // mean over discrete targets (sum in normalized mode)
  double nll = 0.0;     // mean over NUM targets (sum in normalized mode)
  double lambda = 0.0;  // #NUM targets / #targets, per batch
  std::int64_t n_targets = 0;
  std::int64_t n_num_targets = 0;
};

// Externally supplied target counts. With lambda = n_num/n_targets the batch
// objective reduces to (sum_ce + sum_nll) / n_targets, so chunks of a batch
// evaluated under the full batch's normalizer produce gradients that sum
// exactly to the full-batch gradient.
struct LossNormalizer {
  std::int64_t n_targets = 0;
  std::int64_t n_num_targets = 0;
};

// ---------------------------------------------------------------------------
// Loss and gradients for one batch
// ---------------------------------------------------------------------------

template <class S>
LossBreakdown total_loss_and_grad(const PreparedBatch& pb, const ModelConfig& cfg,
                                  const ModelParamsT<S>& p,
                                  ModelParamsT<S>* grads,
                                  Rng* dropout_rng = nullptr,
                                  const LossNormalizer* norm = nullptr) {
  const int B = pb.batch;
  const int T = pb.seq_len;
  const int d = cfg.d_model;
  const int V = cfg.vocab_size;
  const int K = cfg.n_components;
  constexpr double kLogTwoPi = 1.8378770664093454836;

  ForwardCache<S> cache;
  forward_batch(pb, cfg, p, cache, dropout_rng);

  std::vector<std::size_t> rows;      // positions with a discrete target
  std::vector<std::size_t> num_rows;  // positions whose target is NUM
  rows.reserve(pb.tokens.size());
  for (std::size_t i = 0; i < pb.tokens.size(); ++i) {
    if (pb.target[i] < 0) continue;
    rows.push_back(i);
    if (pb.target[i] == kNum) num_rows.push_back(i);
  }
  LossBreakdown out;
  out.n_targets = static_cast<std::int64_t>(rows.size());
  out.n_num_targets = static_cast<std::int64_t>(num_rows.size());
  if (rows.empty()) return out;
  out.lambda = norm ? static_cast<double>(norm->n_num_targets) /
                          static_cast<double>(norm->n_targets)
                    : static_cast<double>(out.n_num_targets) /
                          static_cast<double>(out.n_targets);

  Mat<S> hd(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) hd.row(r) = cache.hf.row(rows[r]);
  Mat<S> logits;
  logits.noalias() = hd * p.w_d;
  logits.rowwise() += p.b_d.row(0);

  const double ce_w = norm ? 1.0 / static_cast<double>(norm->n_targets)
                           : 1.0 / static_cast<double>(rows.size());
  double ce_sum = 0.0;
  Mat<S> dlogits;
  if (grads) dlogits.setZero(rows.size(), V);

  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows.size()); ++r) {
    const std::size_t i = rows[r];
    const TokenId tgt = pb.target[i];
    const std::uint8_t* mask =
        pb.mask_offset[i] >= 0 ? pb.mask_bits.data() + pb.mask_offset[i]
                               : nullptr;
    S maxv = std::numeric_limits<S>::lowest();
    for (int vtok = 0; vtok < V; ++vtok) {
      if (mask && !mask[vtok]) continue;
      maxv = std::max(maxv, logits(r, vtok));
    }
    double denom = 0.0;
    for (int vtok = 0; vtok < V; ++vtok) {
      if (mask && !mask[vtok]) continue;
      denom += std::exp(double(logits(r, vtok)) - double(maxv));
    }
    const double lse = double(maxv) + std::log(denom);
    ce_sum += lse - double(logits(r, tgt));
    if (grads) {
      for (int vtok = 0; vtok < V; ++vtok) {
        if (mask && !mask[vtok]) continue;
        double pr = std::exp(double(logits(r, vtok)) - lse);
        dlogits(r, vtok) = static_cast<S>(pr * ce_w);
      }
      dlogits(r, tgt) -= static_cast<S>(ce_w);
    }
  }
  out.ce = norm ? ce_sum : ce_sum / static_cast<double>(rows.size());

  // Per-item NLL weight: lambda/n_num locally, which collapses to 1/n_targets
  // under an external normalizer.
  Mat<S> hc, draw_c;
  double nll_sum_total = 0.0;
  if (!num_rows.empty()) {
    hc.resize(num_rows.size(), d);
    for (std::size_t r = 0; r < num_rows.size(); ++r) {
      hc.row(r) = cache.hf.row(num_rows[r]);
    }
    Mat<S> craw;
    craw.noalias() = hc * p.w_c;
    craw.rowwise() += p.b_c.row(0);
    if (grads) draw_c.setZero(num_rows.size(), 3 * K);
    const double nll_w =
        norm ? 1.0 / static_cast<double>(norm->n_targets)
             : out.lambda / static_cast<double>(num_rows.size());

    double nll_sum = 0.0;
    std::vector<double> term(K), logvar(K), gate(K);
    for (std::size_t r = 0; r < num_rows.size(); ++r) {
      const double x = pb.target_continuous[num_rows[r]];
      double pmax = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < K; ++j) pmax = std::max(pmax, double(craw(r, j)));
      double psum = 0.0;
      for (int j = 0; j < K; ++j) psum += std::exp(double(craw(r, j)) - pmax);
      const double plse = pmax + std::log(psum);

      double tmax = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < K; ++j) {
        double raw_lv = double(craw(r, 2 * K + j));
        gate[j] = raw_lv > kLogVarFloor ? 1.0 : 0.0;
        logvar[j] = std::max(raw_lv, kLogVarFloor);
        double diff = x - double(craw(r, K + j));
        term[j] = (double(craw(r, j)) - plse) -
                  0.5 * (kLogTwoPi + logvar[j] +
                         diff * diff * std::exp(-logvar[j]));
        tmax = std::max(tmax, term[j]);
      }
      double tsum = 0.0;
      for (int j = 0; j < K; ++j) tsum += std::exp(term[j] - tmax);
      const double ll = tmax + std::log(tsum);
      nll_sum += -ll;
      if (grads) {
        for (int j = 0; j < K; ++j) {
          const double resp = std::exp(term[j] - ll);
          const double pi_j = std::exp(double(craw(r, j)) - plse);
          const double mu_j = double(craw(r, K + j));
          const double inv_var = std::exp(-logvar[j]);
          const double diff = x - mu_j;
          draw_c(r, j) = static_cast<S>((pi_j - resp) * nll_w);
          draw_c(r, K + j) = static_cast<S>(-resp * diff * inv_var * nll_w);
          draw_c(r, 2 * K + j) = static_cast<S>(
              gate[j] * resp * 0.5 * (1.0 - diff * diff * inv_var) * nll_w);
        }
      }
    }
    nll_sum_total = nll_sum;
    out.nll = norm ? nll_sum : nll_sum / static_cast<double>(num_rows.size());
  }
  out.total = norm ? (ce_sum + nll_sum_total) /
                         static_cast<double>(norm->n_targets)
                   : out.ce + out.lambda * out.nll;

  if (!grads) return out;
  ModelParamsT<S>& g = *grads;

  // Head gradients feed dhf; the NLL weight above already carries lambda.
  Mat<S> dhf;
  dhf.setZero(static_cast<Eigen::Index>(B) * T, d);
  g.w_d.noalias() += hd.transpose() * dlogits;
  g.b_d += dlogits.colwise().sum();
  Mat<S> dhd = dlogits * p.w_d.transpose();
  for (std::size_t r = 0; r < rows.size(); ++r) dhf.row(rows[r]) += dhd.row(r);
  if (!num_rows.empty()) {
    g.w_c.noalias() += hc.transpose() * draw_c;
    g.b_c += draw_c.colwise().sum();
    Mat<S> dhc = draw_c * p.w_c.transpose();
    for (std::size_t r = 0; r < num_rows.size(); ++r) {
      dhf.row(num_rows[r]) += dhc.row(r);
    }
  }

  Mat<S> dh;
  nn::layernorm_backward(dhf, cache.lnf_xhat, cache.lnf_rstd, p.lnf_g, dh,
                         g.lnf_g, g.lnf_b);

  const int H = cfg.n_heads;
  const int dh_dim = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh_dim));

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    LayerCache<S>& lc = cache.layers[l];
    const auto& lp = p.layers[l];
    auto& lg = g.layers[l];

    // FFN branch.
    lg.w_ff2.noalias() += lc.ff_act.transpose() * dh;
    lg.b_ff2 += dh.colwise().sum();
    Mat<S> dff_act = dh * lp.w_ff2.transpose();
    detail::apply_dropout_backward(dff_act, cfg.dropout, lc.ff_drop);
    Mat<S> dff_pre = dff_act.binaryExpr(
        lc.ff_pre, [](S dy, S x) { return dy * nn::gelu_grad(x); });
    lg.w_ff1.noalias() += lc.ln2_out.transpose() * dff_pre;
    lg.b_ff1 += dff_pre.colwise().sum();
    Mat<S> dln2_out = dff_pre * lp.w_ff1.transpose();

    Mat<S> dresid1;
    nn::layernorm_backward(dln2_out, lc.ln2_xhat, lc.ln2_rstd, lp.ln2_g, dresid1,
                           lg.ln2_g, lg.ln2_b);
    dresid1 += dh;

    // Attention branch.
    Mat<S> dattn_proj = dresid1;
    detail::apply_dropout_backward(dattn_proj, cfg.dropout, lc.attn_drop);
    lg.w_o.noalias() += lc.attn_ctx.transpose() * dattn_proj;
    lg.b_o += dattn_proj.colwise().sum();
    Mat<S> dctx = dattn_proj * lp.w_o.transpose();

    Mat<S> dqkv;
    dqkv.setZero(static_cast<Eigen::Index>(B) * T, 3 * d);
    for (int b = 0; b < B; ++b) {
      const int pad = pb.pad_len[b];
      const Mat<S>& probs = lc.attn_probs[b];
      Eigen::Matrix<S, 1, Eigen::Dynamic> dprob(T);
      for (int hh = 0; hh < H; ++hh) {
        for (int i = pad; i < T; ++i) {
          const Eigen::Index row = static_cast<Eigen::Index>(b) * T + i;
          const Eigen::Index prow = static_cast<Eigen::Index>(hh) * T + i;
          const auto dout = dctx.row(row).segment(hh * dh_dim, dh_dim);
          dprob.setZero();
          for (int j = pad; j <= i; ++j) {
            const Eigen::Index jrow = static_cast<Eigen::Index>(b) * T + j;
            dprob(j) =
                dout.dot(lc.qkv.row(jrow).segment(2 * d + hh * dh_dim, dh_dim));
            dqkv.row(jrow).segment(2 * d + hh * dh_dim, dh_dim) +=
                probs(prow, j) * dout;
          }
          S inner = S(0);
          for (int j = pad; j <= i; ++j) inner += dprob(j) * probs(prow, j);
          const auto qi = lc.qkv.row(row).segment(hh * dh_dim, dh_dim);
          for (int j = pad; j <= i; ++j) {
            const S w = probs(prow, j);
            if (w == S(0) && dprob(j) == S(0)) continue;
            const S dscore = w * (dprob(j) - inner) * inv_sqrt_dh;
            const Eigen::Index jrow = static_cast<Eigen::Index>(b) * T + j;
            dqkv.row(row).segment(hh * dh_dim, dh_dim) +=
                dscore * lc.qkv.row(jrow).segment(d + hh * dh_dim, dh_dim);
            dqkv.row(jrow).segment(d + hh * dh_dim, dh_dim) += dscore * qi;
          }
        }
      }
    }

    lg.w_qkv.noalias() += lc.ln1_out.transpose() * dqkv;
    lg.b_qkv += dqkv.colwise().sum();
    Mat<S> dln1_out = dqkv * lp.w_qkv.transpose();
    Mat<S> dinput;
    nn::layernorm_backward(dln1_out, lc.ln1_xhat, lc.ln1_rstd, lp.ln1_g, dinput,
                           lg.ln1_g, lg.ln1_b);
    dinput += dresid1;
    dh = std::move(dinput);
  }

  for (std::size_t i = 0; i < pb.tokens.size(); ++i) {
    const TokenId tok = pb.tokens[i];
    if (tok == kPad) continue;
    if (pb.is_num[i]) {
      g.v_num.row(0) += dh.row(i) * static_cast<S>(pb.continuous[i]);
    } else {
      g.tok_emb.row(tok) += dh.row(i);
    }
    if (cfg.kvpe) {
      for (std::int32_t e = pb.kvpe_off[i]; e < pb.kvpe_off[i + 1]; ++e) {
        const std::int32_t id = pb.kvpe_ids[e];
        if (id < cfg.vocab_size) {
          g.tok_emb.row(id) += dh.row(i);
        } else {
          g.idx_emb.row(id - cfg.vocab_size) += dh.row(i);
        }
      }
    } else {
      const int b = static_cast<int>(i) / pb.seq_len;
      const int t = static_cast<int>(i) % pb.seq_len;
      g.pos_emb.row(t - pb.pad_len[b]) += dh.row(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental decoding (KV cache)
// ---------------------------------------------------------------------------

template <class S>
struct StepCache {
  std::vector<Mat<S>> keys;    // per layer, t x d
  std::vector<Mat<S>> values;  // per layer, t x d
  int t = 0;

  void reset(const ModelConfig& cfg) {
    keys.assign(cfg.n_layers, Mat<S>());
    values.assign(cfg.n_layers, Mat<S>());
    for (auto& m : keys) m.resize(cfg.max_seq_len, cfg.d_model);
    for (auto& m : values) m.resize(cfg.max_seq_len, cfg.d_model);
    t = 0;
  }
};

// Embeds one token during generation. `path_ids` uses the PreparedBatch id
// convention. `position` is the 0-based index within the record (sequential
// position mode only).
template <class S>
RowVec<S> embed_step(TokenId token, bool is_num, double continuous,
                     const std::vector<std::int32_t>& path_ids, int position,
                     const ModelConfig& cfg, const ModelParamsT<S>& p) {
  RowVec<S> h(cfg.d_model);
  if (is_num) {
    h = p.v_num.row(0) * static_cast<S>(continuous);
  } else {
    h = p.tok_emb.row(token);
  }
  if (cfg.kvpe) {
    for (std::int32_t id : path_ids) {
      if (id < cfg.vocab_size) {
        h += p.tok_emb.row(id);
      } else {
        h += p.idx_emb.row(id - cfg.vocab_size);
      }
    }
  } else {
    h += p.pos_emb.row(position);
  }
  return h;
}

// One autoregressive step; returns the final hidden state for the new token.
// Matches forward_batch on the same prefix (no dropout at inference).
template <class S>
RowVec<S> forward_step(const RowVec<S>& h0, const ModelConfig& cfg,
                       const ModelParamsT<S>& p, StepCache<S>& cache) {
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  if (cache.t >= cfg.max_seq_len) throw Error("forward_step: cache full");

  Mat<S> x(1, d), y(1, d), xhat(1, d);
  Vec<S> rstd(1);
  x.row(0) = h0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& lp = p.layers[l];
    nn::layernorm_forward(x, lp.ln1_g, lp.ln1_b, y, xhat, rstd);
    RowVec<S> qkv = y.row(0) * lp.w_qkv + lp.b_qkv.row(0);
    cache.keys[l].row(cache.t) = qkv.segment(d, d);
    cache.values[l].row(cache.t) = qkv.segment(2 * d, d);

    RowVec<S> ctx = RowVec<S>::Zero(d);
    for (int hh = 0; hh < H; ++hh) {
      const auto q = qkv.segment(hh * dh, dh);
      Vec<S> scores(cache.t + 1);
      S maxv = std::numeric_limits<S>::lowest();
      for (int j = 0; j <= cache.t; ++j) {
        scores(j) = q.dot(cache.keys[l].row(j).segment(hh * dh, dh)) * inv_sqrt_dh;
        maxv = std::max(maxv, scores(j));
      }
      S denom = S(0);
      for (int j = 0; j <= cache.t; ++j) {
        scores(j) = std::exp(scores(j) - maxv);
        denom += scores(j);
      }
      auto out = ctx.segment(hh * dh, dh);
      for (int j = 0; j <= cache.t; ++j) {
        out += (scores(j) / denom) *
               cache.values[l].row(j).segment(hh * dh, dh);
      }
    }
    RowVec<S> attn = ctx * lp.w_o + lp.b_o.row(0);
    x.row(0) += attn;

    nn::layernorm_forward(x, lp.ln2_g, lp.ln2_b, y, xhat, rstd);
    RowVec<S> ff = y.row(0) * lp.w_ff1 + lp.b_ff1.row(0);
    for (Eigen::Index i = 0; i < ff.size(); ++i) ff(i) = nn::gelu(ff(i));
    x.row(0) += (ff * lp.w_ff2 + lp.b_ff2.row(0));
  }
  ++cache.t;
  nn::layernorm_forward(x, p.lnf_g, p.lnf_b, y, xhat, rstd);
  return y.row(0);
}

using ModelParams = ModelParamsT<float>;

}  // namespace origami
