#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/errors.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

// Boolean mask over the vocabulary; 1 = token allowed next.
using Mask = std::vector<std::uint8_t>;

constexpr std::size_t kMaxNestingDepth = 128;

// Pushdown automaton over the JSON token grammar. The top-level record is an
// implicit object: START pushes the root frame, END pops it. Key/value/
// delimiter alternation and balanced nesting live here; which keys or values
// are legal where is the schema's concern.
struct PDAState {
  enum class Frame : std::uint8_t { Object, Array };

  std::vector<Frame> stack;
  bool at_record_start = true;
  bool at_record_end = false;
  bool expecting_value = false;  // inside an object, a key awaits its value

  bool expecting_key() const {
    return !at_record_start && !at_record_end && !stack.empty() &&
           stack.back() == Frame::Object && !expecting_value;
  }
  std::size_t depth() const { return stack.size(); }

  std::string summary() const {
    if (at_record_start) return "at record start";
    if (at_record_end) return "at record end";
    std::string s = "depth=" + std::to_string(stack.size());
    if (!stack.empty()) {
      s += stack.back() == Frame::Object ? " in object" : " in array";
    }
    if (expecting_value) s += " expecting value";
    return s;
  }
};

inline PDAState init_state() { return PDAState{}; }

namespace detail {

inline void enable_range(Mask& m, TokenId lo, TokenId hi) {
  for (TokenId t = lo; t < hi; ++t) m[static_cast<std::size_t>(t)] = 1;
}

// Tokens that may begin a value: any value literal, NUM, or a container.
inline void enable_value_starts(Mask& m, const VocabSpec& vocab) {
  m[kNum] = 1;
  m[kObjStart] = 1;
  m[kArrStart] = 1;
  enable_range(m, vocab.value_base(), vocab.size());
}

}  // namespace detail

inline Mask valid_next(const PDAState& state, const VocabSpec& vocab) {
  Mask m(static_cast<std::size_t>(vocab.size()), 0);
  if (state.at_record_start) {
    m[kStart] = 1;
    return m;
  }
  if (state.at_record_end) {
    // The stream may continue with another record; PAD is never offered.
    m[kStart] = 1;
    return m;
  }
  if (state.stack.back() == PDAState::Frame::Array) {
    detail::enable_value_starts(m, vocab);
    m[kArrEnd] = 1;
    return m;
  }
  if (state.expecting_value) {
    detail::enable_value_starts(m, vocab);
    return m;
  }
  // Inside an object, awaiting a key or the closing delimiter.
  detail::enable_range(m, vocab.key_base(), vocab.value_base());
  m[state.stack.size() == 1 ? kEnd : kObjEnd] = 1;
  return m;
}

inline PDAState advance(const PDAState& state, TokenId token,
                        const VocabSpec& vocab) {
  Mask allowed = valid_next(state, vocab);
  if (token < 0 || token >= vocab.size() ||
      !allowed[static_cast<std::size_t>(token)]) {
    throw TransitionError("grammar: token " + vocab.token_name(token) +
                          " not valid (" + state.summary() + ")");
  }
  PDAState next = state;
  if (state.at_record_start || state.at_record_end) {
    // token == START
    next.at_record_start = false;
    next.at_record_end = false;
    next.expecting_value = false;
    next.stack.assign(1, PDAState::Frame::Object);
    return next;
  }

  auto push = [&](PDAState::Frame f) {
    if (next.stack.size() >= kMaxNestingDepth) {
      throw TransitionError("grammar: nesting depth exceeds " +
                            std::to_string(kMaxNestingDepth));
    }
    next.stack.push_back(f);
  };
  auto value_done = [&]() {
    // A completed value re-arms the enclosing frame.
    if (next.stack.back() == PDAState::Frame::Object) {
      next.expecting_value = false;
    }
  };

  switch (token) {
    case kEnd:
      next.stack.pop_back();
      next.at_record_end = true;
      break;
    case kObjStart:
      push(PDAState::Frame::Object);
      next.expecting_value = false;
      break;
    case kObjEnd:
      next.stack.pop_back();
      value_done();
      break;
    case kArrStart:
      push(PDAState::Frame::Array);
      next.expecting_value = false;
      break;
    case kArrEnd:
      next.stack.pop_back();
      value_done();
      break;
    case kNum:
      value_done();
      break;
    default:
      if (vocab.is_key(token)) {
        next.expecting_value = true;
      } else {  // value literal
        value_done();
      }
      break;
  }
  return next;
}

// mask[t] = valid_next(state after tokens[0..t]); for a well-formed stream
// mask[t] always admits tokens[t+1].
inline std::vector<Mask> masks_for_sequence(const TokenStream& stream,
                                            const VocabSpec& vocab) {
  std::vector<Mask> masks;
  masks.reserve(stream.length());
  PDAState state = init_state();
  for (std::size_t t = 0; t < stream.length(); ++t) {
    try {
      state = advance(state, stream.tokens[t], vocab);
    } catch (const TransitionError& e) {
      throw TransitionError(std::string(e.what()) + " at position " +
                            std::to_string(t));
    }
    masks.push_back(valid_next(state, vocab));
  }
  return masks;
}

}  // namespace origami
