#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "matching.hpp"
#include "model.hpp"

namespace knnf {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  uint64_t seed = 0;             // training seed the weights came from
  uint64_t hash_embed_seed = 0;  // text-hash seed the weights expect
  LabelSchema schema;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// JSON with sorted object keys and shortest-round-trip doubles: two identical
// runs write byte-identical files, and load/save round-trips exactly.
inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const CheckpointMeta& meta) {
  nlohmann::json tensors;
  for (const auto& [name, t] : params.named) {
    tensors[name] = {
        {"shape", {t->value.rows(), t->value.cols()}},
        {"data", t->value.cells()},
    };
  }
  const nlohmann::json doc{
      {"format_version", kCheckpointFormatVersion},
      {"model_config", to_json(params.config)},
      {"meta",
       {{"seed", meta.seed}, {"hash_embed_seed", meta.hash_embed_seed}, {"schema", schema_to_json(meta.schema)}}},
      {"params", tensors},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot write " + path);
  out << doc.dump() << '\n';
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version") || !doc["format_version"].is_number_integer())
    throw ParseError("load_checkpoint: missing format_version");
  if (doc["format_version"].get<int>() != kCheckpointFormatVersion)
    throw ParseError("load_checkpoint: unsupported format_version");
  for (const char* key : {"model_config", "meta", "params"})
    if (!doc.contains(key)) throw ParseError(std::string("load_checkpoint: missing ") + key);

  Checkpoint ck;
  const ModelConfig cfg = model_config_from_json(doc["model_config"]);
  const auto& meta = doc["meta"];
  try {
    ck.meta.seed = meta.at("seed").get<uint64_t>();
    ck.meta.hash_embed_seed = meta.at("hash_embed_seed").get<uint64_t>();
    ck.meta.schema = schema_from_json(meta.at("schema"));
  } catch (const nlohmann::json::exception&) {
    throw ParseError("load_checkpoint: bad meta block");
  }
  if (ck.meta.schema.size() != cfg.num_classes)
    throw ParseError("load_checkpoint: schema size does not match num_classes");

  // Materialize the parameter tree (structure and table sharing come from the
  // config) and overwrite every tensor from the file.
  Rng scratch(1);
  ck.params = build_model_params(cfg, scratch);
  const auto& tensors = doc["params"];
  if (!tensors.is_object()) throw ParseError("load_checkpoint: params must be an object");
  if (tensors.size() != ck.params.named.size())
    throw ParseError("load_checkpoint: parameter set does not match the model config");
  for (auto& [name, t] : ck.params.named) {
    if (!tensors.contains(name)) throw ParseError("load_checkpoint: missing parameter " + name);
    const auto& entry = tensors[name];
    std::vector<int> shape;
    std::vector<double> data;
    try {
      shape = entry.at("shape").get<std::vector<int>>();
      data = entry.at("data").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("load_checkpoint: bad entry for parameter " + name);
    }
    if (shape.size() != 2 || shape[0] != t->value.rows() || shape[1] != t->value.cols() ||
        data.size() != t->value.cells().size())
      throw ParseError("load_checkpoint: shape mismatch for parameter " + name);
    t->value.cells() = std::move(data);
  }
  return ck;
}

}  // namespace knnf
