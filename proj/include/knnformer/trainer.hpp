#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "adam.hpp"
#include "checkpoint.hpp"
#include "data.hpp"
#include "embedder.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace knnf {

enum class DecodeMode { kMatched, kArgmax };

// A document with everything the model consumes precomputed: text vectors,
// geometric features, and the spatial bundle (graph, hops, mask, sigma).
struct PreparedDoc {
  std::string id;
  Grid<double> text_vecs;
  Grid<double> geo_feats;
  SpatialRef spatial;
  std::vector<int> gold;
};

inline PreparedDoc prepare_doc(const Document& raw, const ModelConfig& cfg, const EmbeddingSource& emb) {
  if (emb.dim != cfg.text_dim)
    throw ConfigError("prepare_doc: embedding dim " + std::to_string(emb.dim) + " != model text_dim " +
                      std::to_string(cfg.text_dim));
  const Document doc = normalize_document(raw, raw.page_w, raw.page_h);
  PreparedDoc out;
  out.id = doc.id;
  out.text_vecs = emb.embed_document(doc);
  out.geo_feats = geo_matrix(doc, cfg.use_abs_pos);
  out.spatial = std::make_shared<const SpatialBundle>(build_spatial_bundle(doc, cfg));
  out.gold.reserve(doc.entities.size());
  for (const auto& e : doc.entities) out.gold.push_back(e.category);
  return out;
}

inline std::vector<PreparedDoc> prepare_docs(const std::vector<Document>& docs, const ModelConfig& cfg,
                                             const EmbeddingSource& emb) {
  std::vector<PreparedDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(prepare_doc(d, cfg, emb));
  return out;
}

inline std::vector<int> predict_document(const ModelParams& params, const PreparedDoc& doc,
                                         const LabelSchema& schema, DecodeMode mode) {
  NoGradGuard ng;
  const Tensor logits = transformer_forward(params, doc.text_vecs, doc.geo_feats, doc.spatial);
  const Grid<double> probs = softmax_rows(logits->value);
  return mode == DecodeMode::kMatched ? decode_one_to_one(probs, schema) : decode_argmax(probs);
}

inline F1Report evaluate(const ModelParams& params, const std::vector<PreparedDoc>& docs,
                         const LabelSchema& schema, DecodeMode mode) {
  std::vector<int> gold_flat, pred_flat;
  for (const auto& doc : docs) {
    const std::vector<int> pred = predict_document(params, doc, schema, mode);
    gold_flat.insert(gold_flat.end(), doc.gold.begin(), doc.gold.end());
    pred_flat.insert(pred_flat.end(), pred.begin(), pred.end());
  }
  return entity_f1(gold_flat, pred_flat, schema);
}

struct TrainOptions {
  int epochs = 400;
  int batch_size = 8;
  AdamConfig adam;
  LossMode loss = LossMode::kPerEntityCe;
  DecodeMode eval_decode = DecodeMode::kMatched;
  uint64_t seed = 1;  // drives the per-epoch shuffle
  NonFinitePolicy nonfinite = NonFinitePolicy::kFail;
  int log_every = 0;             // epochs between progress lines; 0 disables
  std::ostream* log = nullptr;  // where progress lines go

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainOptions: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainOptions: batch_size must be >= 1");
    if (!(adam.lr > 0)) throw ConfigError("TrainOptions: lr must be positive");
  }
};

struct TrainResult {
  double best_eval_f1 = -1.0;
  int best_epoch = -1;
  double final_train_loss = 0.0;
  std::vector<double> eval_f1_history;
  int skipped_steps = 0;  // batches dropped by the non-finite policy
};

inline std::vector<Grid<double>> snapshot_values(const ModelParams& p) {
  std::vector<Grid<double>> snap;
  snap.reserve(p.named.size());
  for (const auto& [name, t] : p.named) snap.push_back(t->value);
  return snap;
}

inline void restore_values(ModelParams& p, const std::vector<Grid<double>>& snap) {
  if (snap.size() != p.named.size()) throw InvalidInputError("restore_values: snapshot size mismatch");
  for (size_t i = 0; i < snap.size(); ++i) p.named[i].second->value = snap[i];
}

// Full-batch-accumulated Adam training. Deterministic given (params, docs,
// options): same inputs give bit-identical weights. When an eval set is
// given, the epoch with the best eval F1 is kept and restored at the end.
inline TrainResult train_model(ModelParams& params, const std::vector<PreparedDoc>& train,
                               const std::vector<PreparedDoc>& eval, const LabelSchema& schema,
                               const TrainOptions& opt) {
  opt.validate();
  if (train.empty()) throw InvalidInputError("train_model: empty training set");
  if (schema.size() != params.config.num_classes)
    throw ConfigError("train_model: schema size != model num_classes");

  const std::vector<Tensor> trainable = params.trainable();
  AdamState adam(trainable);
  Rng shuffle_rng(hash_combine(opt.seed, 0x7261696e));
  TrainResult result;
  std::vector<Grid<double>> best_snap;

  std::vector<int> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opt.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(opt.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (size_t b = start; b < end; ++b) {
        const PreparedDoc& doc = train[static_cast<size_t>(order[b])];
        const Tensor logits = transformer_forward(params, doc.text_vecs, doc.geo_feats, doc.spatial);
        const Tensor loss = set_loss(logits, doc.gold, schema, opt.loss);
        epoch_loss += loss->value(0, 0);
        backward(scale(loss, inv_batch));
      }
      if (!adam_step(trainable, adam, opt.adam, opt.nonfinite)) result.skipped_steps += 1;
      zero_grads(trainable);
    }
    epoch_loss /= static_cast<double>(train.size());
    result.final_train_loss = epoch_loss;

    double eval_f1 = -1.0;
    if (!eval.empty()) {
      eval_f1 = evaluate(params, eval, schema, opt.eval_decode).macro_f1;
      result.eval_f1_history.push_back(eval_f1);
      if (eval_f1 > result.best_eval_f1) {
        result.best_eval_f1 = eval_f1;
        result.best_epoch = epoch;
        best_snap = snapshot_values(params);
      }
    }
    if (opt.log && opt.log_every > 0 && (epoch % opt.log_every == 0 || epoch == opt.epochs)) {
      (*opt.log) << "epoch " << epoch << " loss " << epoch_loss;
      if (eval_f1 >= 0.0) (*opt.log) << " eval_f1 " << eval_f1 << " best " << result.best_eval_f1;
      (*opt.log) << '\n';
    }
  }

  if (!best_snap.empty()) restore_values(params, best_snap);
  return result;
}

}  // namespace knnf
