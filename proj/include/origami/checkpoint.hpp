#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "origami/json_io.hpp"
#include "origami/model.hpp"
#include "origami/schema.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

// Self-sufficient model container: config, vocabulary, scalers, both schemas
// (original and standardized) and all parameter tensors as named f32 blobs.
struct Checkpoint {
  ModelConfig config;
  VocabSpec vocab;
  NumericScalers scalers;
  DerivedSchema schema_original;
  DerivedSchema schema_scaled;
  ModelParams params;
  std::size_t max_train_stream_len = 0;  // drives the generation token cap
  Json run_config;                       // provenance echo

  TokenizerOptions tokenizer_options() const {
    TokenizerOptions opts;
    opts.tau = schema_original.tau;
    opts.i_max = static_cast<std::uint32_t>(config.i_max);
    return opts;
  }
};

namespace detail {

constexpr char kCkptMagic[8] = {'O', 'G', 'M', 'C', 'K', 'P', 'T', '1'};

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& in) {
  std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(detail::kCkptMagic, sizeof detail::kCkptMagic);

  Json header;
  header["version"] = 1;
  header["config"] = ckpt.config.to_json();
  header["vocab"] = ckpt.vocab.to_json();
  header["scalers"] = ckpt.scalers.to_json();
  header["schema_original"] = schema_to_json(ckpt.schema_original);
  header["schema_scaled"] = schema_to_json(ckpt.schema_scaled);
  header["max_train_stream_len"] = ckpt.max_train_stream_len;
  header["run_config"] = ckpt.run_config;
  detail::write_string(out, header.dump());

  // for_each is a non-const visitor; saving does not mutate.
  ModelParams& params = const_cast<Checkpoint&>(ckpt).params;
  std::uint64_t n_tensors = 0;
  params.for_each([&](const std::string&, Mat<float>&) { ++n_tensors; });
  detail::write_u64(out, n_tensors);
  params.for_each([&](const std::string& name, Mat<float>& m) {
    detail::write_string(out, name);
    detail::write_u64(out, static_cast<std::uint64_t>(m.rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
  });
  if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, detail::kCkptMagic, sizeof magic) != 0) {
    throw IoError(path + ": not an origami checkpoint");
  }
  Json header = Json::parse(detail::read_string(in), nullptr, false);
  if (header.is_discarded()) throw IoError(path + ": corrupt header");
  if (header.at("version").get<int>() != 1) {
    throw IoError(path + ": unsupported checkpoint version");
  }

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("config"));
  ckpt.vocab = VocabSpec::from_json(header.at("vocab"));
  ckpt.scalers = NumericScalers::from_json(header.at("scalers"));
  ckpt.schema_original = schema_from_json(header.at("schema_original"));
  ckpt.schema_scaled = schema_from_json(header.at("schema_scaled"));
  ckpt.max_train_stream_len = header.at("max_train_stream_len").get<std::size_t>();
  ckpt.run_config = header.value("run_config", Json::object());

  ckpt.params = init_params<float>(ckpt.config, 0);
  std::uint64_t n_tensors = detail::read_u64(in);
  std::unordered_map<std::string, Mat<float>*> slots;
  ckpt.params.for_each(
      [&](const std::string& name, Mat<float>& m) { slots[name] = &m; });
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = detail::read_string(in);
    std::uint64_t rows = detail::read_u64(in);
    std::uint64_t cols = detail::read_u64(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw IoError(path + ": unknown tensor " + name);
    Mat<float>& m = *it->second;
    if (static_cast<std::uint64_t>(m.rows()) != rows ||
        static_cast<std::uint64_t>(m.cols()) != cols) {
      throw IoError(path + ": shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  if (!in) throw IoError(path + ": truncated checkpoint");
  return ckpt;
}

}  // namespace origami
