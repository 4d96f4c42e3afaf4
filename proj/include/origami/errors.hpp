#pragma once

#include <stdexcept>
#include <string>

namespace origami {

// Base for all library errors so callers can catch one type at the CLI
// boundary and still discriminate below it.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A key or categorical value that is not covered by the vocabulary.
struct VocabularyMiss : Error {
  explicit VocabularyMiss(const std::string& msg) : Error(msg) {}
};

// Malformed token stream (unbalanced delimiters, bad continuous channel).
struct StructureError : Error {
  StructureError(const std::string& msg, std::size_t position)
      : Error(msg + " (position " + std::to_string(position) + ")"),
        position(position) {}
  std::size_t position;
};

// A token fed to the grammar automaton that its current state forbids.
struct TransitionError : Error {
  explicit TransitionError(const std::string& msg) : Error(msg) {}
};

// The intersection of grammar, schema and count masks became empty.
struct GenerationDeadlock : Error {
  explicit GenerationDeadlock(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace origami
