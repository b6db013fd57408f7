#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "document.hpp"
#include "tensor.hpp"

namespace knnf {

// Seed for the fallback text hasher. Fixed so two runs (and two machines)
// agree byte-for-byte on hashed embeddings.
inline constexpr uint64_t kDefaultHashSeed = 0x6b6e6e666f726dULL;

// Character 1..3-gram signed-bucket embedding, L2-normalized. Deterministic
// in (text, dim, seed); empty text maps to the zero vector.
inline std::vector<double> hash_ngram_embed(const std::string& text, int dim, uint64_t seed = kDefaultHashSeed) {
  if (dim < 8) throw InvalidInputError("hash_ngram_embed: dim must be >= 8");
  std::vector<double> vec(static_cast<size_t>(dim), 0.0);
  const size_t len = text.size();
  for (size_t n = 1; n <= 3; ++n) {
    if (len < n) break;
    for (size_t start = 0; start + n <= len; ++start) {
      const uint64_t h = hash_str(text.substr(start, n), hash_combine(seed, n));
      const size_t bucket = static_cast<size_t>(h % static_cast<uint64_t>(dim));
      vec[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm = 0.0;
  for (const double v : vec) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : vec) v /= norm;
  }
  return vec;
}

// Precomputed per-entity text vectors keyed by (document id, entity index).
struct EmbeddingTable {
  int dim = 0;
  std::map<std::pair<std::string, int>, std::vector<double>> rows;
};

// JSONL: first line {"dim": D}, then one {"doc", "idx", "vec"} per line.
inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_embeddings: cannot open " + path);
  std::string line;
  EmbeddingTable table;
  bool have_header = false;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("load_embeddings: " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_integer())
        throw ParseError("load_embeddings: first line must be a {\"dim\": D} header");
      table.dim = j["dim"].get<int>();
      if (table.dim < 1) throw ParseError("load_embeddings: dim must be positive");
      have_header = true;
      continue;
    }
    if (!j.is_object() || !j.contains("doc") || !j.contains("idx") || !j.contains("vec"))
      throw ParseError("load_embeddings: line " + std::to_string(line_no) + " missing doc/idx/vec");
    auto key = std::make_pair(j["doc"].get<std::string>(), j["idx"].get<int>());
    auto vec = j["vec"].get<std::vector<double>>();
    if (static_cast<int>(vec.size()) != table.dim)
      throw ParseError("load_embeddings: line " + std::to_string(line_no) + " vector length != dim");
    if (!table.rows.emplace(std::move(key), std::move(vec)).second)
      throw ParseError("load_embeddings: duplicate (doc, idx) at line " + std::to_string(line_no));
  }
  if (!have_header) throw ParseError("load_embeddings: empty file " + path);
  return table;
}

// Where entity text vectors come from: an explicit table when one was
// loaded, otherwise the deterministic n-gram hasher.
struct EmbeddingSource {
  int dim = 0;
  uint64_t hash_seed = kDefaultHashSeed;
  const EmbeddingTable* table = nullptr;  // optional, not owned

  std::vector<double> embed(const std::string& doc_id, int idx, const std::string& text) const {
    if (dim < 1) throw InvalidInputError("EmbeddingSource: dim not set");
    if (table) {
      auto it = table->rows.find({doc_id, idx});
      if (it != table->rows.end()) return it->second;
    }
    return hash_ngram_embed(text, dim, hash_seed);
  }

  // N x dim matrix of text vectors for a whole document.
  Grid<double> embed_document(const Document& doc) const {
    Grid<double> out(static_cast<int>(doc.entities.size()), dim, 0.0);
    for (size_t i = 0; i < doc.entities.size(); ++i) {
      const auto v = embed(doc.id, static_cast<int>(i), doc.entities[i].text);
      for (int j = 0; j < dim; ++j) out(static_cast<int>(i), j) = v[static_cast<size_t>(j)];
    }
    return out;
  }
};

// Input projection: text vector concatenated with an affine lift of the
// box size features, then projected to the model width.
struct EmbedderParams {
  Tensor w_size, b_size;  // 2 x size_dim, 1 x size_dim
  Tensor w_in, b_in;      // (text_dim + size_dim) x hidden, 1 x hidden
};

inline Tensor input_embedding(const EmbedderParams& p, const Tensor& text_vecs, const Tensor& sizes) {
  Tensor lifted = bias_add(matmul(sizes, p.w_size), p.b_size);
  Tensor joint = concat_cols(text_vecs, lifted);
  return bias_add(matmul(joint, p.w_in), p.b_in);
}

// Per-entity geometric features: normalized (width, height), optionally
// followed by the absolute centroid (cx, cy). Dropping the centroid is the
// "no absolute position" ablation.
inline Grid<double> geo_matrix(const Document& doc, bool with_abs_pos) {
  if (!doc.normalized) throw InvalidInputError("geo_matrix: document must be normalized first");
  Grid<double> out(static_cast<int>(doc.entities.size()), with_abs_pos ? 4 : 2, 0.0);
  for (size_t i = 0; i < doc.entities.size(); ++i) {
    const auto s = size_features(doc.entities[i].box);
    out(static_cast<int>(i), 0) = s.first;
    out(static_cast<int>(i), 1) = s.second;
    if (with_abs_pos) {
      const auto c = centroid(doc.entities[i].box);
      out(static_cast<int>(i), 2) = c.first;
      out(static_cast<int>(i), 3) = c.second;
    }
  }
  return out;
}

}  // namespace knnf
