#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "document.hpp"
#include "graph.hpp"
#include "matching.hpp"

namespace knnf {

inline constexpr int kAnnotationFormatVersion = 1;

// ---------------------------------------------------------------------------
// Annotation file I/O. A corpus is a JSON array of documents; every document
// carries its own format_version. Boxes are in page pixels.
// ---------------------------------------------------------------------------

inline std::vector<Document> parse_annotations(const nlohmann::json& arr, const LabelSchema& schema) {
  if (!arr.is_array()) throw ParseError("annotations: expected a top-level JSON array of documents");
  std::vector<Document> docs;
  std::set<std::string> ids;
  for (size_t di = 0; di < arr.size(); ++di) {
    const auto& jd = arr[di];
    const std::string where = "annotations: document #" + std::to_string(di);
    if (!jd.is_object()) throw ParseError(where + ": expected an object");
    if (!jd.contains("format_version") || !jd["format_version"].is_number_integer() ||
        jd["format_version"].get<int>() != kAnnotationFormatVersion)
      throw ParseError(where + ": missing or unsupported format_version");
    for (const char* key : {"id", "page", "entities"})
      if (!jd.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
    Document doc;
    try {
      doc.id = jd["id"].get<std::string>();
      doc.tag = jd.value("tag", std::string());
      doc.page_w = jd["page"].at("w").get<double>();
      doc.page_h = jd["page"].at("h").get<double>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(where + ": bad id/tag/page");
    }
    if (doc.id.empty()) throw ParseError(where + ": empty id");
    if (!(doc.page_w > 0) || !(doc.page_h > 0)) throw ParseError(where + ": page dimensions must be positive");
    if (!ids.insert(doc.id).second) throw ParseError("annotations: duplicate document id " + doc.id);
    if (!jd["entities"].is_array()) throw ParseError(where + ": entities must be an array");
    for (size_t ei = 0; ei < jd["entities"].size(); ++ei) {
      const auto& je = jd["entities"][ei];
      const std::string ewhere = where + " entity #" + std::to_string(ei);
      if (!je.is_object() || !je.contains("bbox") || !je.contains("text"))
        throw ParseError(ewhere + ": needs bbox and text");
      Entity e;
      try {
        const auto box = je["bbox"].get<std::vector<double>>();
        if (box.size() != 4) throw ParseError(ewhere + ": bbox must have 4 numbers");
        e.box = BBox{box[0], box[1], box[2], box[3]};
        e.text = je["text"].get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw ParseError(ewhere + ": bad bbox/text");
      }
      if (!e.box.well_formed()) throw ParseError(ewhere + ": malformed bbox");
      if (je.contains("category") && !je["category"].is_null()) {
        std::string cat;
        try {
          cat = je["category"].get<std::string>();
        } catch (const nlohmann::json::exception&) {
          throw ParseError(ewhere + ": category must be a string");
        }
        e.category = schema.index_of(cat);
        if (e.category < 0) throw ParseError(ewhere + ": unknown category \"" + cat + "\"");
      }
      doc.entities.push_back(std::move(e));
    }
    if (doc.entities.empty()) throw ParseError(where + ": no entities");
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::vector<Document> load_annotations(const std::string& path, const LabelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("load_annotations: cannot open " + path);
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_annotations: " + path + ": " + e.what());
  }
  return parse_annotations(arr, schema);
}

inline nlohmann::json corpus_to_json(const std::vector<Document>& docs, const LabelSchema& schema) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& doc : docs) {
    if (doc.normalized)
      throw InvalidInputError("corpus_to_json: document " + doc.id + " is normalized; corpora store pixel boxes");
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& e : doc.entities) {
      nlohmann::json je{{"bbox", {e.box.x0, e.box.y0, e.box.x1, e.box.y1}}, {"text", e.text}};
      if (e.category != kNoCategory) {
        if (e.category < 0 || e.category >= schema.size())
          throw InvalidInputError("corpus_to_json: category out of schema range in doc " + doc.id);
        je["category"] = schema.categories[static_cast<size_t>(e.category)].name;
      }
      ents.push_back(std::move(je));
    }
    arr.push_back(nlohmann::json{{"format_version", kAnnotationFormatVersion},
                                 {"id", doc.id},
                                 {"tag", doc.tag},
                                 {"page", {{"w", doc.page_w}, {"h", doc.page_h}}},
                                 {"entities", std::move(ents)}});
  }
  return arr;
}

inline void save_annotations(const std::string& path, const std::vector<Document>& docs,
                             const LabelSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_annotations: cannot write " + path);
  out << corpus_to_json(docs, schema).dump() << '\n';
  if (!out) throw IoError("save_annotations: write failed for " + path);
}

// Schema files: either a bare category array or
// {"format_version": 1, "categories": [...]}.
inline LabelSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_schema: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_schema: " + path + ": " + e.what());
  }
  if (j.is_object()) {
    if (!j.contains("categories")) throw ParseError("load_schema: wrapped schema needs \"categories\"");
    return schema_from_json(j["categories"]);
  }
  return schema_from_json(j);
}

inline void save_schema(const std::string& path, const LabelSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_schema: cannot write " + path);
  out << nlohmann::json{{"format_version", 1}, {"categories", schema_to_json(schema)}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Corpus splits.
// ---------------------------------------------------------------------------

struct SplitResult {
  std::vector<Document> train;
  std::vector<Document> eval;
};

inline SplitResult split_random(const std::vector<Document>& docs, int eval_count, uint64_t seed) {
  const int n = static_cast<int>(docs.size());
  if (eval_count < 1 || eval_count >= n)
    throw InvalidInputError("split_random: eval_count must be in [1, docs-1]");
  std::vector<int> idx(docs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng(seed);
  shuffle(idx, rng);
  SplitResult out;
  for (int i = 0; i < n; ++i)
    (i < n - eval_count ? out.train : out.eval).push_back(docs[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
  return out;
}

inline SplitResult split_by_tag(const std::vector<Document>& docs, const std::vector<std::string>& holdout_tags) {
  if (holdout_tags.empty()) throw InvalidInputError("split_by_tag: no holdout tags given");
  std::set<std::string> holdout(holdout_tags.begin(), holdout_tags.end());
  std::set<std::string> present;
  for (const auto& d : docs) present.insert(d.tag);
  for (const auto& t : holdout)
    if (!present.count(t)) throw InvalidInputError("split_by_tag: tag \"" + t + "\" not present in corpus");
  SplitResult out;
  for (const auto& d : docs) (holdout.count(d.tag) ? out.eval : out.train).push_back(d);
  if (out.train.empty()) throw InvalidInputError("split_by_tag: holdout tags cover the whole corpus");
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generator.
//
// Every document carries one instance of each unique field as a key/value
// pair plus assorted junk. Half the documents (the "hop-sensitive" ones)
// place four of those fields in two cross layouts where each value sits
// Euclidean-equidistant between two keys: its own key is 1 hop away on the
// k=4 neighbor graph (the key's neighborhood reaches the value) while the
// rival key is 2 hops away (through a junk bridge), with the direct view
// crowded out by junk. Distance and angle cues are symmetrized away by
// per-cross mirror flips, so telling the keys apart requires hop information.
// Generation re-runs the real geometry pipeline on each finished document
// and retries with fresh jitter until the intended graph structure holds.
// ---------------------------------------------------------------------------

struct GenConfig {
  int docs = 250;
  int templates = 10;
  double sensitive_fraction = 0.5;
  uint64_t seed = 1;
  double page_w = 1600.0;
  double page_h = 1200.0;

  void validate() const {
    if (docs < 1) throw ConfigError("GenConfig: docs must be >= 1");
    if (templates < 1 || templates > 10) throw ConfigError("GenConfig: templates must be in [1,10]");
    if (sensitive_fraction < 0.0 || sensitive_fraction > 1.0)
      throw ConfigError("GenConfig: sensitive_fraction must be in [0,1]");
    if (!(page_w > 0) || !(page_h > 0)) throw ConfigError("GenConfig: page dimensions must be positive");
  }
};

// Where the generator planted an ambiguous value: the key it belongs to and
// the equidistant rival key. Entity indices are into the finished document.
struct PlantReport {
  int doc_index = 0;
  int value_idx = 0;
  int true_key_idx = 0;
  int wrong_key_idx = 0;
};

namespace gen_detail {

struct Pending {
  double cx = 0, cy = 0;
  std::string text;
  int category = kNoCategory;
};

struct PairMeta {
  int value = -1, key = -1, wrong_key = -1;  // wrong_key only for planted pairs
  std::vector<int> crowd;                    // junk blocking the value's direct view
  bool planted = false;
};

// Field indices into default_poi_schema().
inline constexpr int kLastName = 0, kFirstName = 1, kDob = 2, kDoi = 3, kDoe = 4, kIdNumber = 5;
inline constexpr int kKeyCat = 6, kOthersCat = 7;

inline const char* field_stem(int field) {
  static const char* stems[6] = {"nachname", "vorname",    "geburtsdatum",
                                 "ausstellungsdatum", "ablaufdatum", "kennnummer"};
  return stems[field];
}

struct Decor {
  const char* pre;
  const char* post;
};

inline Decor template_decor(int t) {
  static const Decor decors[10] = {{"", ""},     {"", ":"},      {"", "*"},   {"", " nr"}, {"feld ", ""},
                                   {"ihr ", ""}, {"1. ", ""},    {"", " / doc"}, {"- ", ""},  {"", " #"}};
  return decors[t % 10];
}

inline std::string key_text(int field, int tpl) {
  const Decor d = template_decor(tpl);
  return std::string(d.pre) + field_stem(field) + d.post;
}

inline std::string random_name(Rng& rng) {
  static const char* vocab[32] = {
      "adler",  "baum",   "berg",   "brandt", "dietz",  "ernst",  "falk",   "fuchs",
      "graf",   "haas",   "hahn",   "horn",   "jaeger", "kern",   "klein",  "kraus",
      "lang",   "lorenz", "maier",  "marx",   "otto",   "paul",   "rau",    "roth",
      "sauer",  "seidel", "thiel",  "vogel",  "walter", "weber",  "wolf",   "zink"};
  return vocab[rng.uniform_int(0, 31)];
}

inline std::string random_date(Rng& rng) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d.%02d.%d", rng.uniform_int(1, 28), rng.uniform_int(1, 12),
                rng.uniform_int(1960, 2035));
  return buf;
}

inline std::string random_digits(Rng& rng) {
  std::string s;
  s.push_back(static_cast<char>('1' + rng.uniform_int(0, 8)));
  for (int i = 0; i < 7; ++i) s.push_back(static_cast<char>('0' + rng.uniform_int(0, 9)));
  return s;
}

inline std::string junk_word(Rng& rng) {
  const int len = rng.uniform_int(4, 8);
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
  return s;
}

inline std::string value_text(int field, Rng& rng) {
  switch (field) {
    case kLastName:
    case kFirstName:
      return random_name(rng);
    case kDob:
    case kDoi:
    case kDoe:
      return random_date(rng);
    default:
      return random_digits(rng);
  }
}

inline double dist2d(double ax, double ay, double bx, double by) {
  return std::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
}

// Cross layout constants (normalized page units).
inline constexpr double kCrossKeyX = 0.085;    // keys at (+-kCrossKeyX, 0)
inline constexpr double kCrossValY = 0.085;    // values at (~0, -+kCrossValY)
inline constexpr double kCrossEps = 0.0006;    // nudge that decides each key's 4th neighbor
inline constexpr double kBridgeT = 0.6;        // junk bridge fraction toward the far key
inline constexpr double kFlankRLo = 0.055, kFlankRHi = 0.075;

// Emits one cross (2 keys, 2 values, 10 junk) around (cx, cy). field_a pairs
// with the left key, field_b with the right key, before the mirror flips.
inline void build_cross(std::vector<Pending>& ents, std::vector<PairMeta>& pairs, double cx, double cy,
                        bool flip_x, bool flip_y, int field_a, int field_b, int tpl, Rng& rng) {
  struct P {
    double x, y;
  };
  const P ka{-kCrossKeyX, 0.0}, kb{kCrossKeyX, 0.0};
  const P va{-kCrossEps, -kCrossValY}, vb{kCrossEps, kCrossValY};
  auto lerp = [](P from, P to, double t) { return P{from.x + t * (to.x - from.x), from.y + t * (to.y - from.y)}; };
  const P bridge_a = lerp(va, kb, kBridgeT), pseudo_a = lerp(va, ka, kBridgeT);
  const P bridge_b = lerp(vb, ka, kBridgeT), pseudo_b = lerp(vb, kb, kBridgeT);

  // Flankers sit in a cone pointing away from the keys; they crowd the
  // value's neighbor list without ever entering a key's top-4.
  auto flanker = [&](P v, double outward_angle, double side) {
    for (int tries = 0; tries < 64; ++tries) {
      const double a = outward_angle + side * rng.uniform(0.6981, 0.7854);  // 40..45 degrees
      const double r = rng.uniform(kFlankRLo, kFlankRHi);
      const P f{v.x + r * std::cos(a), v.y + r * std::sin(a)};
      if (dist2d(f.x, f.y, ka.x, ka.y) > 0.13 && dist2d(f.x, f.y, kb.x, kb.y) > 0.13) return f;
    }
    throw Error("build_cross: flanker placement failed");
  };
  const P fa1 = flanker(va, -kPi / 2, +1.0), fa2 = flanker(va, -kPi / 2, -1.0);
  const P fb1 = flanker(vb, kPi / 2, +1.0), fb2 = flanker(vb, kPi / 2, -1.0);

  // One flanker per key, pointing away from the cross center.
  auto key_flanker = [&](P k, double away_angle) {
    const double a = away_angle + rng.uniform(-0.5236, 0.5236);  // +-30 degrees
    const double r = rng.uniform(kFlankRLo, kFlankRHi);
    return P{k.x + r * std::cos(a), k.y + r * std::sin(a)};
  };
  const P ea = key_flanker(ka, kPi), eb = key_flanker(kb, 0.0);

  const double sx = flip_x ? -1.0 : 1.0, sy = flip_y ? -1.0 : 1.0;
  auto emit = [&](P p, std::string text, int category) {
    ents.push_back(Pending{cx + sx * p.x, cy + sy * p.y, std::move(text), category});
    return static_cast<int>(ents.size()) - 1;
  };

  const int ika = emit(ka, key_text(field_a, tpl), kKeyCat);
  const int iva = emit(va, value_text(field_a, rng), field_a);
  const int ikb = emit(kb, key_text(field_b, tpl), kKeyCat);
  const int ivb = emit(vb, value_text(field_b, rng), field_b);
  const int iba = emit(bridge_a, junk_word(rng), kOthersCat);
  const int ipa = emit(pseudo_a, junk_word(rng), kOthersCat);
  const int ifa1 = emit(fa1, junk_word(rng), kOthersCat);
  const int ifa2 = emit(fa2, junk_word(rng), kOthersCat);
  const int ibb = emit(bridge_b, junk_word(rng), kOthersCat);
  const int ipb = emit(pseudo_b, junk_word(rng), kOthersCat);
  const int ifb1 = emit(fb1, junk_word(rng), kOthersCat);
  const int ifb2 = emit(fb2, junk_word(rng), kOthersCat);
  emit(ea, junk_word(rng), kOthersCat);
  emit(eb, junk_word(rng), kOthersCat);

  pairs.push_back(PairMeta{iva, ika, ikb, {iba, ipa, ifa1, ifa2}, true});
  pairs.push_back(PairMeta{ivb, ikb, ika, {ibb, ipb, ifb1, ifb2}, true});
}

// Key at a grid slot, value a fixed offset to its right.
inline void build_zone_pair(std::vector<Pending>& ents, std::vector<PairMeta>& pairs, int slot, int field,
                            int tpl, Rng& rng) {
  static const double cols[2] = {0.10, 0.32};
  static const double rows[3] = {0.18, 0.45, 0.72};
  const double kx = cols[slot % 2] + rng.uniform(-0.005, 0.005);
  const double ky = rows[slot / 2] + rng.uniform(-0.005, 0.005);
  const double vx = kx + 0.095 + rng.uniform(-0.004, 0.004);
  const double vy = ky + rng.uniform(-0.004, 0.004);
  ents.push_back(Pending{kx, ky, key_text(field, tpl), kKeyCat});
  const int ik = static_cast<int>(ents.size()) - 1;
  ents.push_back(Pending{vx, vy, value_text(field, rng), field});
  pairs.push_back(PairMeta{static_cast<int>(ents.size()) - 1, ik, -1, {}, false});
}

// Random junk with minimum separation from everything already placed.
inline void scatter_junk(std::vector<Pending>& ents, int count, double x_lo, double x_hi, double y_lo,
                         double y_hi, Rng& rng) {
  for (int placed = 0; placed < count; ++placed) {
    bool ok = false;
    for (int tries = 0; tries < 500 && !ok; ++tries) {
      const double x = rng.uniform(x_lo, x_hi);
      const double y = rng.uniform(y_lo, y_hi);
      ok = true;
      for (const auto& e : ents) {
        const double min_gap = e.category == kOthersCat ? 0.075 : 0.10;
        if (dist2d(x, y, e.cx, e.cy) < min_gap) {
          ok = false;
          break;
        }
      }
      if (ok) ents.push_back(Pending{x, y, junk_word(rng), kOthersCat});
    }
    if (!ok) throw Error("scatter_junk: could not place junk entity");
  }
}

// Re-run the production geometry pipeline on the finished document and check
// that the graph structure the corpus advertises actually holds.
inline bool verify_document(const Document& pixel_doc, const std::vector<PairMeta>& pairs) {
  const Document doc = normalize_document(pixel_doc, pixel_doc.page_w, pixel_doc.page_h);
  const SigmaMatrices sig = pairwise_sigma(doc);
  const KnnGraph graph = build_knn_graph(sig.dist, 4);
  const Grid<int> hops = hop_distances(graph);
  const int n = static_cast<int>(doc.entities.size());

  std::vector<int> key_indices;
  for (int i = 0; i < n; ++i)
    if (doc.entities[static_cast<size_t>(i)].category == kKeyCat) key_indices.push_back(i);

  for (const auto& pm : pairs) {
    if (hops(pm.value, pm.key) != 1) return false;
    int nearest_key = key_indices[0];
    for (const int k : key_indices)
      if (sig.dist(pm.value, k) < sig.dist(pm.value, nearest_key)) nearest_key = k;
    if (nearest_key != pm.key) return false;
    if (!pm.planted) continue;

    if (hops(pm.value, pm.wrong_key) != 2) return false;
    // The value's own neighbor picks must all be junk: nearest entity in its
    // crowd, true key absent from its top-4.
    std::vector<int> order;
    for (int j = 0; j < n; ++j)
      if (j != pm.value) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sig.dist(pm.value, a) != sig.dist(pm.value, b)) return sig.dist(pm.value, a) < sig.dist(pm.value, b);
      return a < b;
    });
    if (std::find(pm.crowd.begin(), pm.crowd.end(), order[0]) == pm.crowd.end()) return false;
    for (int t = 0; t < 4; ++t)
      if (order[static_cast<size_t>(t)] == pm.key) return false;
  }
  return true;
}

inline Document finalize_document(std::vector<Pending> ents, std::vector<PairMeta>& pairs, int doc_index,
                                  int tpl, const GenConfig& cfg, Rng& rng) {
  // Shuffle entity order so nothing downstream can lean on construction order.
  std::vector<int> perm(ents.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  shuffle(perm, rng);
  std::vector<int> pos(ents.size());  // old index -> new index
  for (size_t i = 0; i < perm.size(); ++i) pos[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  for (auto& pm : pairs) {
    pm.value = pos[static_cast<size_t>(pm.value)];
    pm.key = pos[static_cast<size_t>(pm.key)];
    if (pm.wrong_key >= 0) pm.wrong_key = pos[static_cast<size_t>(pm.wrong_key)];
    for (auto& c : pm.crowd) c = pos[static_cast<size_t>(c)];
  }

  Document doc;
  char idbuf[32], tagbuf[16];
  std::snprintf(idbuf, sizeof(idbuf), "doc%04d", doc_index);
  std::snprintf(tagbuf, sizeof(tagbuf), "tpl%02d", tpl);
  doc.id = idbuf;
  doc.tag = tagbuf;
  doc.page_w = cfg.page_w;
  doc.page_h = cfg.page_h;
  doc.entities.resize(ents.size());
  for (size_t old = 0; old < ents.size(); ++old) {
    const auto& p = ents[old];
    const double w = std::clamp(0.012 * static_cast<double>(p.text.size()), 0.035, 0.16) + rng.uniform(-0.002, 0.002);
    const double h = 0.022 + rng.uniform(-0.002, 0.002);
    Entity e;
    e.box = BBox{(p.cx - w / 2) * cfg.page_w, (p.cy - h / 2) * cfg.page_h, (p.cx + w / 2) * cfg.page_w,
                 (p.cy + h / 2) * cfg.page_h};
    e.text = p.text;
    e.category = p.category;
    doc.entities[static_cast<size_t>(pos[old])] = std::move(e);
  }
  return doc;
}

inline Document generate_document(int doc_index, bool sensitive, int tpl, const GenConfig& cfg,
                                  std::vector<PairMeta>& pairs_out) {
  const uint64_t doc_seed = hash_combine(cfg.seed, static_cast<uint64_t>(doc_index) + 1);
  for (int attempt = 0; attempt < 80; ++attempt) {
    Rng rng(hash_combine(doc_seed, static_cast<uint64_t>(attempt)));
    std::vector<Pending> ents;
    std::vector<PairMeta> pairs;

    const Decor d = template_decor(tpl);
    ents.push_back(Pending{0.50 + rng.uniform(-0.01, 0.01), 0.05 + rng.uniform(-0.005, 0.005),
                           std::string(d.pre) + "dienstausweis" + d.post, kOthersCat});

    std::vector<int> slots{0, 1, 2, 3, 4, 5};
    shuffle(slots, rng);

    if (sensitive) {
      std::vector<int> dates{kDob, kDoi, kDoe};
      shuffle(dates, rng);
      std::vector<int> names{kLastName, kFirstName};
      shuffle(names, rng);

      double c1x = 0.72 + rng.uniform(-0.015, 0.015), c1y = 0.25 + rng.uniform(-0.015, 0.015);
      double c2x = 0.72 + rng.uniform(-0.015, 0.015), c2y = 0.75 + rng.uniform(-0.015, 0.015);
      if (rng.uniform() < 0.5) {
        std::swap(c1x, c2x);
        std::swap(c1y, c2y);
      }
      build_cross(ents, pairs, c1x, c1y, rng.uniform() < 0.5, rng.uniform() < 0.5, dates[0], dates[1], tpl, rng);
      build_cross(ents, pairs, c2x, c2y, rng.uniform() < 0.5, rng.uniform() < 0.5, names[0], names[1], tpl, rng);

      build_zone_pair(ents, pairs, slots[0], dates[2], tpl, rng);
      build_zone_pair(ents, pairs, slots[1], kIdNumber, tpl, rng);
    } else {
      std::vector<int> fields{kLastName, kFirstName, kDob, kDoi, kDoe, kIdNumber};
      shuffle(fields, rng);
      for (int s = 0; s < 6; ++s) build_zone_pair(ents, pairs, slots[static_cast<size_t>(s)], fields[static_cast<size_t>(s)], tpl, rng);
      scatter_junk(ents, 8, 0.52, 0.92, 0.12, 0.92, rng);
      scatter_junk(ents, 9, 0.05, 0.44, 0.12, 0.92, rng);
    }

    Document doc = finalize_document(std::move(ents), pairs, doc_index, tpl, cfg, rng);
    if (verify_document(doc, pairs)) {
      pairs_out = std::move(pairs);
      return doc;
    }
  }
  throw Error("generate_synthetic: could not satisfy the layout for document " + std::to_string(doc_index));
}

}  // namespace gen_detail

inline std::vector<Document> generate_synthetic(const GenConfig& cfg,
                                                std::vector<PlantReport>* reports = nullptr) {
  cfg.validate();
  if (reports) reports->clear();
  const int per_template = (cfg.docs + cfg.templates - 1) / cfg.templates;
  std::vector<Document> docs;
  docs.reserve(static_cast<size_t>(cfg.docs));
  int sensitive_made = 0;
  for (int i = 0; i < cfg.docs; ++i) {
    const int tpl = i / per_template;
    // Alternate within each template block so both kinds appear everywhere,
    // landing on round(docs * fraction) sensitive documents overall.
    const int target = static_cast<int>(std::lround(cfg.sensitive_fraction * (i + 1)));
    const bool sensitive = sensitive_made < target;
    std::vector<gen_detail::PairMeta> pairs;
    docs.push_back(gen_detail::generate_document(i, sensitive, tpl, cfg, pairs));
    if (sensitive) ++sensitive_made;
    if (reports) {
      for (const auto& pm : pairs)
        if (pm.planted) reports->push_back(PlantReport{i, pm.value, pm.key, pm.wrong_key});
    }
  }
  return docs;
}

}  // namespace knnf
