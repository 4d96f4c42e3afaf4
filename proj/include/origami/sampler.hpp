#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "origami/checkpoint.hpp"
#include "origami/errors.hpp"
#include "origami/grammar.hpp"
#include "origami/model.hpp"
#include "origami/rng.hpp"
#include "origami/schema.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

// ---------------------------------------------------------------------------
// Count-dependent constraint tracker
// ---------------------------------------------------------------------------

// Enforces the schema constraints that need runtime state: duplicate keys,
// required keys before closing, array length bounds and element uniqueness.
class CountTracker {
 public:
  struct ObjectFrame {
    SchemaPath path;
    std::set<TokenId> emitted_keys;
    std::set<std::string> outstanding_required;
  };
  struct ArrayFrame {
    SchemaPath path;  // the array's own path
    std::uint64_t count = 0;
    std::uint64_t min_items = 0;
    std::uint64_t max_items = 0;
    bool unique_items = false;
    std::set<std::string> seen_elements;  // canonical serialized form
  };
  struct Frame {
    bool is_array = false;
    ObjectFrame obj;
    ArrayFrame arr;
  };

  const DerivedSchema* schema = nullptr;

  void open_object(const SchemaPath& path) {
    Frame f;
    f.is_array = false;
    f.obj.path = path;
    if (const SchemaEntry* e = schema->find(path)) {
      f.obj.outstanding_required = e->required_keys;
    }
    frames_.push_back(std::move(f));
  }

  void open_array(const SchemaPath& path) {
    Frame f;
    f.is_array = true;
    f.arr.path = path;
    if (const SchemaEntry* e = schema->find(path)) {
      f.arr.min_items = e->min_items;
      f.arr.max_items = e->max_items;
      f.arr.unique_items = e->unique_items;
    }
    frames_.push_back(std::move(f));
  }

  void close_frame() { frames_.pop_back(); }

  void key_emitted(TokenId key, const std::string& name) {
    Frame& f = frames_.back();
    f.obj.emitted_keys.insert(key);
    f.obj.outstanding_required.erase(name);
  }

  // Registers a finished array element in its enclosing array frame, if any.
  // Returns false when a uniqueItems constraint was broken (container
  // elements cannot be pre-masked; the caller aborts the record).
  bool element_completed(const Json& element) {
    if (frames_.empty() || !frames_.back().is_array) return true;
    ArrayFrame& a = frames_.back().arr;
    ++a.count;
    if (a.unique_items) {
      if (!a.seen_elements.insert(element.dump()).second) return false;
    }
    return true;
  }

  bool in_array() const {
    return !frames_.empty() && frames_.back().is_array;
  }
  const Frame& top() const { return frames_.back(); }
  bool empty() const { return frames_.empty(); }

  // Intersects count-dependent restrictions into `mask`.
  void restrict(Mask& mask, const VocabSpec& vocab) const {
    if (frames_.empty()) return;
    const Frame& f = frames_.back();
    if (f.is_array) {
      const ArrayFrame& a = f.arr;
      if (a.count < a.min_items) mask[kArrEnd] = 0;
      if (a.count >= a.max_items) {
        // no further elements
        for (TokenId t = vocab.value_base(); t < vocab.size(); ++t) mask[t] = 0;
        mask[kNum] = 0;
        mask[kObjStart] = 0;
        mask[kArrStart] = 0;
      } else if (a.unique_items) {
        for (const std::string& seen : a.seen_elements) {
          Json v = Json::parse(seen, nullptr, false);
          if (v.is_discarded()) continue;
          if (auto id = vocab.find_value(v)) mask[*id] = 0;
        }
      }
    } else {
      const ObjectFrame& o = f.obj;
      for (TokenId k : o.emitted_keys) mask[k] = 0;
      if (!o.outstanding_required.empty()) {
        mask[kObjEnd] = 0;
        mask[kEnd] = 0;
      }
    }
  }

 private:
  std::vector<Frame> frames_;
};

// ---------------------------------------------------------------------------
// Effective mask
// ---------------------------------------------------------------------------

// grammar AND schema AND count-dependent restrictions for the next token.
// `next_path` must be the wildcarded decision-point path (the row key).
inline Mask next_mask(const PDAState& pda, const VocabSpec& vocab,
                      const SchemaMaskTable& table, const CountTracker& tracker,
                      const SchemaPath& next_path) {
  Mask m = valid_next(pda, vocab);
  const std::uint8_t* srow = table.row(table.row_index(next_path));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] &= srow[i];
  tracker.restrict(m, vocab);
  bool any = false;
  for (std::uint8_t b : m) any |= b;
  if (!any) {
    throw GenerationDeadlock("empty effective mask at " + next_path.to_string() +
                             " (" + pda.summary() + ")");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Sampling primitives
// ---------------------------------------------------------------------------

// Categorical draw from softmax(masked logits / temperature).
template <class S>
TokenId sample_token(const Vec<S>& logits, const Mask& mask, double temperature,
                     Rng& rng) {
  if (temperature <= 0.0) throw Error("sample_token: temperature must be > 0");
  double maxv = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[i]) maxv = std::max(maxv, double(logits(i)));
  }
  if (!std::isfinite(maxv)) throw Error("sample_token: empty mask");
  std::vector<double> probs(logits.size(), 0.0);
  double denom = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    double e = std::exp((double(logits(i)) - maxv) / temperature);
    probs[i] = e;
    denom += e;
  }
  double r = uniform_double(rng) * denom;
  double acc = 0.0;
  TokenId last_enabled = -1;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    last_enabled = static_cast<TokenId>(i);
    acc += probs[i];
    if (r < acc) return static_cast<TokenId>(i);
  }
  return last_enabled;  // numeric edge: fall back to the last enabled token
}

// Component choice by mixture weight, then a Gaussian draw, clipped into the
// standardized bounds when present.
inline double sample_numeric(const MoGOutput& out, Rng& rng,
                             std::optional<double> scaled_min,
                             std::optional<double> scaled_max) {
  double r = uniform_double(rng);
  std::size_t j = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    acc += out.weights[i];
    j = i;
    if (r < acc) break;
  }
  double sigma = std::exp(0.5 * out.log_vars[j]);
  double x = out.means[j] + sigma * normal_double(rng);
  if (scaled_min) x = std::max(x, *scaled_min);
  if (scaled_max) x = std::min(x, *scaled_max);
  return x;
}

// ---------------------------------------------------------------------------
// Constrained generation
// ---------------------------------------------------------------------------

struct GenerationSettings {
  std::size_t count = 1;
  double temperature = 1.0;
  std::size_t max_tokens = 0;  // 0: use 2x the longest training stream
  std::uint64_t seed = 0;
  int workers = 2;
  int max_attempts = 64;       // resamples per record before giving up
};

struct GenerationStats {
  std::uint64_t records = 0;
  std::uint64_t tokens = 0;
  std::uint64_t overlength_resamples = 0;
  std::uint64_t deadlock_resamples = 0;
  std::uint64_t validation_resamples = 0;

  Json to_json() const {
    return Json{{"records", records},
                {"tokens", tokens},
                {"overlength_resamples", overlength_resamples},
                {"deadlock_resamples", deadlock_resamples},
                {"validation_resamples", validation_resamples}};
  }
};

namespace detail {

// Decision-point context during generation; mirrors the tokenizer's path
// bookkeeping so KVPE embeddings and schema rows line up with training.
struct GenContext {
  // one entry per open container; root object included
  struct Level {
    bool is_array = false;
    KeyPath path;           // the container's own key path
    SchemaPath wpath;       // wildcarded
    std::uint32_t next_index = 0;  // arrays
    std::optional<PathElement> pending_key;  // objects: key awaiting value
  };
  std::vector<Level> levels;

  // Path of the NEXT token given the grammar state (used for the row lookup
  // and for the token's own stored path).
  KeyPath next_token_path(const PDAState& pda) const {
    if (levels.empty()) return {};
    const Level& top = levels.back();
    if (top.is_array) {
      KeyPath p = top.path;
      p.push_back(PathElement::Index(top.next_index));
      return p;
    }
    if (pda.expecting_value && top.pending_key) {
      KeyPath p = top.path;
      p.push_back(*top.pending_key);
      return p;
    }
    return top.path;  // key or closer position
  }

  SchemaPath next_row_path(const PDAState& pda) const {
    if (levels.empty()) return SchemaPath{};
    const Level& top = levels.back();
    if (top.is_array) return top.wpath.child_wild();
    if (pda.expecting_value && top.pending_key) {
      return top.wpath.child_key(top.pending_key->key);
    }
    return top.wpath;
  }
};

struct RecordSampler {
  const Checkpoint& ckpt;
  const SchemaMaskTable& table;
  double temperature;
  std::size_t max_tokens;
  StepCache<float> cache;

  // Builds one record; throws GenerationDeadlock / Error on dead ends.
  // Returns nullopt when the token budget is exhausted.
  std::optional<Json> run(Rng& rng, std::size_t& tokens_out) {
    const ModelConfig& cfg = ckpt.config;
    const VocabSpec& vocab = ckpt.vocab;

    cache.reset(cfg);
    PDAState pda = init_state();
    CountTracker tracker;
    tracker.schema = &ckpt.schema_scaled;
    GenContext ctx;

    // JSON builder stack: value slots are filled as tokens arrive.
    std::vector<Json*> build_stack;
    Json root = Json::object();

    // feed START
    RowVec<float> h = embed_step<float>(kStart, false, 0.0, {}, 0, cfg,
                                        ckpt.params);
    RowVec<float> hf = forward_step<float>(h, cfg, ckpt.params, cache);
    pda = advance(pda, kStart, vocab);
    tracker.open_object(SchemaPath{});
    ctx.levels.push_back({});
    build_stack.push_back(&root);
    std::size_t t = 1;

    std::string pending_key_name;
    while (!pda.at_record_end) {
      if (t >= max_tokens) return std::nullopt;
      Mask mask = next_mask(pda, vocab, table, tracker, ctx.next_row_path(pda));
      Vec<float> logits = discrete_logits<float>(hf, ckpt.params);
      TokenId tok = sample_token<float>(logits, mask, temperature, rng);

      // Closing delimiters carry their container's own path, matching encode.
      KeyPath tok_path = tok == kArrEnd ? ctx.levels.back().path
                                        : ctx.next_token_path(pda);
      bool tok_is_num = tok == kNum;
      double continuous = 0.0;
      Json completed_element;  // for array uniqueness accounting
      bool have_completed_element = false;

      auto& level = ctx.levels.back();
      Json* slot = build_stack.back();

      if (vocab.is_key(tok)) {
        const std::string& name = vocab.key_name(tok);
        tracker.key_emitted(tok, name);
        level.pending_key = PathElement::Key(name, tok);
        pending_key_name = name;
      } else if (tok == kObjEnd || tok == kEnd) {
        tracker.close_frame();
        ctx.levels.pop_back();
        if (tok == kObjEnd) {
          completed_element = *slot;
          have_completed_element = true;
          build_stack.pop_back();
        }
      } else if (tok == kArrEnd) {
        tracker.close_frame();
        ctx.levels.pop_back();
        completed_element = *slot;
        have_completed_element = true;
        build_stack.pop_back();
      } else {
        // a value begins: locate its slot
        Json* value_slot = nullptr;
        if (level.is_array) {
          slot->push_back(Json());
          value_slot = &slot->back();
        } else {
          (*slot)[pending_key_name] = Json();
          value_slot = &(*slot)[pending_key_name];
        }
        SchemaPath wpath = ctx.next_row_path(pda);

        if (tok == kObjStart) {
          *value_slot = Json::object();
          tracker.open_object(wpath);
          ctx.levels.push_back({false, tok_path, wpath, 0, std::nullopt});
          build_stack.push_back(value_slot);
        } else if (tok == kArrStart) {
          *value_slot = Json::array();
          tracker.open_array(wpath);
          ctx.levels.push_back({true, tok_path, wpath, 0, std::nullopt});
          build_stack.push_back(value_slot);
        } else if (tok == kNum) {
          const SchemaEntry* e = ckpt.schema_scaled.find(wpath);
          const ScalerEntry* s = ckpt.scalers.find(wpath);
          if (!s) {
            throw Error("generate: NUM sampled at unscaled path " +
                        wpath.to_string());
          }
          MoGOutput mog = mog_params<float>(hf, ckpt.params);
          continuous = sample_numeric(mog, rng,
                                      e ? e->minimum : std::nullopt,
                                      e ? e->maximum : std::nullopt);
          *value_slot = s->unscale(continuous);
          completed_element = *value_slot;
          have_completed_element = level.is_array;
        } else {
          *value_slot = vocab.value_literal(tok);
          completed_element = *value_slot;
          have_completed_element = level.is_array;
        }
      }

      // array bookkeeping for completed elements
      if (have_completed_element) {
        if (!tracker.element_completed(completed_element)) {
          throw GenerationDeadlock("uniqueItems violated by a container element");
        }
        if (tracker.in_array()) {
          ctx.levels.back().next_index++;
        }
      }

      // advance grammar and model
      pda = advance(pda, tok, vocab);
      std::vector<std::int32_t> path_ids;
      path_ids.reserve(tok_path.size());
      for (const PathElement& e : tok_path) {
        path_ids.push_back(e.is_index
                               ? cfg.vocab_size + static_cast<std::int32_t>(e.index)
                               : e.key_id);
      }
      h = embed_step<float>(tok, tok_is_num, continuous, path_ids,
                            static_cast<int>(t), cfg, ckpt.params);
      hf = forward_step<float>(h, cfg, ckpt.params, cache);
      ++t;
    }
    tokens_out = t;
    return root;
  }
};

}  // namespace detail

// Generates settings.count records. Records are independent; each derives its
// RNG from (seed, record index, attempt), so results do not depend on the
// worker count. Over-length, deadlocked or schema-invalid attempts are
// discarded and resampled with the next attempt seed.
inline std::vector<Json> generate(const Checkpoint& ckpt,
                                  const SchemaMaskTable& table,
                                  const GenerationSettings& settings,
                                  GenerationStats* stats_out = nullptr) {
  if (settings.count < 1) throw Error("generate: count must be >= 1");
  std::size_t max_tokens = settings.max_tokens;
  if (max_tokens == 0) {
    max_tokens = std::max<std::size_t>(8, 2 * ckpt.max_train_stream_len);
  }
  max_tokens = std::min<std::size_t>(max_tokens,
                                     static_cast<std::size_t>(ckpt.config.max_seq_len));

  std::vector<Json> out(settings.count);
  std::atomic<std::uint64_t> overlength{0}, deadlocks{0}, invalid{0},
      total_tokens{0};

  const int workers =
      std::max(1, std::min<int>(settings.workers,
                                static_cast<int>(settings.count)));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    detail::RecordSampler sampler{ckpt, table, settings.temperature, max_tokens};
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= settings.count) break;
      for (int attempt = 0;; ++attempt) {
        if (attempt >= settings.max_attempts) {
          throw Error("generate: record " + std::to_string(i) +
                      " failed after " + std::to_string(attempt) + " attempts");
        }
        Rng rng = make_rng({settings.seed, 0x67656eULL, i,
                            static_cast<std::uint64_t>(attempt)});
        std::size_t tokens = 0;
        try {
          std::optional<Json> rec = sampler.run(rng, tokens);
          if (!rec) {
            ++overlength;
            continue;
          }
          Json finished = postprocess_record(*rec, ckpt.schema_original);
          if (!validate(finished, ckpt.schema_original).empty()) {
            ++invalid;
            continue;
          }
          total_tokens += tokens;
          out[i] = std::move(finished);
          break;
        } catch (const GenerationDeadlock&) {
          ++deadlocks;
          continue;
        }
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          worker();
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  if (stats_out) {
    stats_out->records = settings.count;
    stats_out->tokens = total_tokens.load();
    stats_out->overlength_resamples = overlength.load();
    stats_out->deadlock_resamples = deadlocks.load();
    stats_out->validation_resamples = invalid.load();
  }
  return out;
}

}  // namespace origami
