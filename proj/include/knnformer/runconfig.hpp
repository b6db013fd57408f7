#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "embedder.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace knnf {

// Everything tunable from outside, one flat key space. Precedence is
// resolved by apply order: defaults, then config file, then KNNF_*
// environment variables, then command-line flags.
struct RunConfig {
  ModelConfig model;  // num_classes is overwritten from the schema at load time
  int epochs = 400;
  int batch_size = 8;
  double lr = 5e-3;
  uint64_t seed = 1;
  uint64_t hash_seed = kDefaultHashSeed;
  std::string loss = "per_entity_ce";
  bool matching = true;  // one-to-one decoding at eval/predict time

  LossMode loss_mode() const {
    if (loss == "per_entity_ce") return LossMode::kPerEntityCe;
    if (loss == "matched_ce") return LossMode::kMatchedCe;
    throw ConfigError("config: loss must be per_entity_ce or matched_ce, got \"" + loss + "\"");
  }

  DecodeMode decode_mode() const { return matching ? DecodeMode::kMatched : DecodeMode::kArgmax; }

  void validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("config: lr must be positive");
    loss_mode();
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "hidden",        "layers",          "heads",           "ffn_ratio",      "text_dim",
      "size_dim",      "knn_k",           "hop_threshold",   "max_bucket",     "use_hop_bias",
      "use_local_mask", "use_sigma_bias", "use_abs_pos",     "p2c_uses_key_of_j",
      "share_bias_tables", "epochs",      "batch_size",      "lr",             "seed",
      "hash_seed",     "loss",            "matching",
  };
  return keys;
}

inline void set_config_key(RunConfig& c, const std::string& key, const nlohmann::json& v) {
  auto geti = [&]() -> int {
    if (!v.is_number_integer()) throw ConfigError("config: \"" + key + "\" must be an integer");
    return v.get<int>();
  };
  auto getb = [&]() -> bool {
    if (!v.is_boolean()) throw ConfigError("config: \"" + key + "\" must be a boolean");
    return v.get<bool>();
  };
  auto getd = [&]() -> double {
    if (!v.is_number()) throw ConfigError("config: \"" + key + "\" must be a number");
    return v.get<double>();
  };
  auto getu = [&]() -> uint64_t {
    if (!v.is_number_integer()) throw ConfigError("config: \"" + key + "\" must be an integer");
    return v.get<uint64_t>();
  };
  if (key == "hidden") c.model.hidden = geti();
  else if (key == "layers") c.model.layers = geti();
  else if (key == "heads") c.model.heads = geti();
  else if (key == "ffn_ratio") c.model.ffn_ratio = geti();
  else if (key == "text_dim") c.model.text_dim = geti();
  else if (key == "size_dim") c.model.size_dim = geti();
  else if (key == "knn_k") c.model.knn_k = geti();
  else if (key == "hop_threshold") c.model.hop_threshold = geti();
  else if (key == "max_bucket") c.model.max_bucket = geti();
  else if (key == "use_hop_bias") c.model.use_hop_bias = getb();
  else if (key == "use_local_mask") c.model.use_local_mask = getb();
  else if (key == "use_sigma_bias") c.model.use_sigma_bias = getb();
  else if (key == "use_abs_pos") c.model.use_abs_pos = getb();
  else if (key == "p2c_uses_key_of_j") c.model.p2c_uses_key_of_j = getb();
  else if (key == "share_bias_tables") c.model.share_bias_tables = getb();
  else if (key == "epochs") c.epochs = geti();
  else if (key == "batch_size") c.batch_size = geti();
  else if (key == "lr") c.lr = getd();
  else if (key == "seed") c.seed = getu();
  else if (key == "hash_seed") c.hash_seed = getu();
  else if (key == "loss") {
    if (!v.is_string()) throw ConfigError("config: \"loss\" must be a string");
    c.loss = v.get<std::string>();
  } else if (key == "matching") c.matching = getb();
  else throw ConfigError("config: unknown key \"" + key + "\"");
}

inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, val] : j.items()) set_config_key(c, key, val);
}

inline void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  apply_config_json(c, j);
}

// Environment overrides: KNNF_<KEY upper-cased>. Values are parsed as JSON
// scalars; anything that does not parse is taken as a bare string.
inline void apply_env(RunConfig& c) {
  for (const auto& key : config_keys()) {
    std::string env_name = "KNNF_";
    for (const char ch : key) env_name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    const char* raw = std::getenv(env_name.c_str());
    if (!raw) continue;
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      v = std::string(raw);
    }
    try {
      set_config_key(c, key, v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (from " + env_name + ")");
    }
  }
}

}  // namespace knnf
