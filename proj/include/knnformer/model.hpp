#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "document.hpp"
#include "embedder.hpp"
#include "graph.hpp"
#include "tensor.hpp"

namespace knnf {

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct ModelConfig {
  int hidden = 80;
  int layers = 8;
  int heads = 8;
  int ffn_ratio = 2;
  int text_dim = 128;   // width of the per-entity text vector
  int size_dim = 16;    // width of the lifted geometric features
  int num_classes = 8;  // label schema size
  int knn_k = 4;
  int hop_threshold = 2;  // attention reaches at most this many hops
  int max_bucket = 4;     // hops clamp here; +1 more bucket for unreachable
  bool use_hop_bias = true;
  bool use_local_mask = true;
  bool use_sigma_bias = true;
  bool use_abs_pos = true;
  bool p2c_uses_key_of_j = false;   // pair->content term reads row i's key vector by default
  bool share_bias_tables = false;   // all layers reuse layer 0's hop/sigma tables

  int head_dim() const { return hidden / heads; }
  int sigma_dim() const { return 2; }  // (distance, angle)
  int hop_vocab() const { return max_bucket + 2; }
  int geo_dim() const { return use_abs_pos ? 4 : 2; }
  int ffn_dim() const { return hidden * ffn_ratio; }

  void validate() const {
    if (hidden < 1 || layers < 0 || heads < 1 || ffn_ratio < 1) throw ConfigError("ModelConfig: dimensions must be positive");
    if (hidden % heads != 0) throw ConfigError("ModelConfig: hidden must be divisible by heads");
    if (text_dim < 8) throw ConfigError("ModelConfig: text_dim must be >= 8");
    if (size_dim < 1) throw ConfigError("ModelConfig: size_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("ModelConfig: num_classes must be >= 2");
    if (knn_k < 1) throw ConfigError("ModelConfig: knn_k must be >= 1");
    if (hop_threshold < 1) throw ConfigError("ModelConfig: hop_threshold must be >= 1");
    if (max_bucket < 1) throw ConfigError("ModelConfig: max_bucket must be >= 1");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"hidden", c.hidden},
      {"layers", c.layers},
      {"heads", c.heads},
      {"ffn_ratio", c.ffn_ratio},
      {"text_dim", c.text_dim},
      {"size_dim", c.size_dim},
      {"num_classes", c.num_classes},
      {"knn_k", c.knn_k},
      {"hop_threshold", c.hop_threshold},
      {"max_bucket", c.max_bucket},
      {"use_hop_bias", c.use_hop_bias},
      {"use_local_mask", c.use_local_mask},
      {"use_sigma_bias", c.use_sigma_bias},
      {"use_abs_pos", c.use_abs_pos},
      {"p2c_uses_key_of_j", c.p2c_uses_key_of_j},
      {"share_bias_tables", c.share_bias_tables},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  ModelConfig c;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "hidden") c.hidden = val.get<int>();
      else if (key == "layers") c.layers = val.get<int>();
      else if (key == "heads") c.heads = val.get<int>();
      else if (key == "ffn_ratio") c.ffn_ratio = val.get<int>();
      else if (key == "text_dim") c.text_dim = val.get<int>();
      else if (key == "size_dim") c.size_dim = val.get<int>();
      else if (key == "num_classes") c.num_classes = val.get<int>();
      else if (key == "knn_k") c.knn_k = val.get<int>();
      else if (key == "hop_threshold") c.hop_threshold = val.get<int>();
      else if (key == "max_bucket") c.max_bucket = val.get<int>();
      else if (key == "use_hop_bias") c.use_hop_bias = val.get<bool>();
      else if (key == "use_local_mask") c.use_local_mask = val.get<bool>();
      else if (key == "use_sigma_bias") c.use_sigma_bias = val.get<bool>();
      else if (key == "use_abs_pos") c.use_abs_pos = val.get<bool>();
      else if (key == "p2c_uses_key_of_j") c.p2c_uses_key_of_j = val.get<bool>();
      else if (key == "share_bias_tables") c.share_bias_tables = val.get<bool>();
      else throw ConfigError("model config: unknown key \"" + key + "\"");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("model config: bad value for \"" + key + "\"");
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Per-document spatial context: sigma features, graph, hops, mask, buckets.
// ---------------------------------------------------------------------------

struct SpatialBundle {
  int n = 0;
  SigmaMatrices sigma;
  KnnGraph graph;
  Grid<int> hops;
  Grid<uint8_t> mask;  // all-ones when the locality mask is ablated
  Grid<int> buckets;
};

using SpatialRef = std::shared_ptr<const SpatialBundle>;

inline SpatialBundle build_spatial_bundle(const Document& doc, const ModelConfig& cfg) {
  SpatialBundle b;
  b.n = static_cast<int>(doc.entities.size());
  b.sigma = pairwise_sigma(doc);
  b.graph = build_knn_graph(b.sigma.dist, cfg.knn_k);
  b.hops = hop_distances(b.graph);
  b.mask = cfg.use_local_mask ? attention_mask(b.hops, cfg.hop_threshold)
                              : Grid<uint8_t>(b.n, b.n, 1);
  b.buckets = bucket_hops(b.hops, cfg.max_bucket);
  return b;
}

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

struct HeadParams {
  Tensor wq, wk, wv;  // hidden x head_dim
  Tensor hq, hk, hv;  // hop_vocab x head_dim; null when hop bias is off
  Tensor rq, rk, rv;  // sigma_dim x head_dim; null when sigma bias is off
};

struct LayerParams {
  std::vector<HeadParams> heads;
  Tensor wo, bo;  // hidden x hidden, 1 x hidden
  Tensor ln1_g, ln1_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor ln2_g, ln2_b;
};

struct ModelParams {
  ModelConfig config;
  EmbedderParams embedder;
  std::vector<LayerParams> layers;
  Tensor final_ln_g, final_ln_b;
  Tensor cls_w, cls_b;
  // Every distinct trainable tensor exactly once, in creation order. Shared
  // tables appear under their layer-0 name only.
  std::vector<std::pair<std::string, Tensor>> named;

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
  }

  long long param_count() const {
    long long total = 0;
    for (const auto& [name, t] : named)
      total += static_cast<long long>(t->value.rows()) * t->value.cols();
    return total;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : named)
      if (n == name) return &t;
    return nullptr;
  }
};

inline Grid<double> xavier_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Grid<double> g(rows, cols, 0.0);
  for (auto& v : g.cells()) v = rng.uniform(-limit, limit);
  return g;
}

// Weight matrices draw Xavier-uniform values; biases start at zero,
// layer-norm gains at one. Hop and sigma tables start at zero and consume no
// RNG draws, so toggling them changes no other tensor's initial value.
inline ModelParams build_model_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  auto reg = [&p](const std::string& name, Grid<double> v) {
    Tensor t = make_param(std::move(v));
    p.named.emplace_back(name, t);
    return t;
  };
  auto zeros = [](int r, int c) { return Grid<double>(r, c, 0.0); };
  auto ones = [](int r, int c) { return Grid<double>(r, c, 1.0); };

  p.embedder.w_size = reg("embedder.w_size", xavier_uniform(cfg.geo_dim(), cfg.size_dim, rng));
  p.embedder.b_size = reg("embedder.b_size", zeros(1, cfg.size_dim));
  p.embedder.w_in = reg("embedder.w_in", xavier_uniform(cfg.text_dim + cfg.size_dim, cfg.hidden, rng));
  p.embedder.b_in = reg("embedder.b_in", zeros(1, cfg.hidden));

  const int hd = cfg.head_dim();
  p.layers.resize(static_cast<size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& layer = p.layers[static_cast<size_t>(l)];
    const std::string lp = "layers." + std::to_string(l) + ".";
    layer.heads.resize(static_cast<size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      auto& head = layer.heads[static_cast<size_t>(h)];
      const std::string hp = lp + "heads." + std::to_string(h) + ".";
      head.wq = reg(hp + "wq", xavier_uniform(cfg.hidden, hd, rng));
      head.wk = reg(hp + "wk", xavier_uniform(cfg.hidden, hd, rng));
      head.wv = reg(hp + "wv", xavier_uniform(cfg.hidden, hd, rng));
      const bool shared = cfg.share_bias_tables && l > 0;
      if (cfg.use_hop_bias) {
        if (shared) {
          const auto& h0 = p.layers[0].heads[static_cast<size_t>(h)];
          head.hq = h0.hq;
          head.hk = h0.hk;
          head.hv = h0.hv;
        } else {
          head.hq = reg(hp + "hq", zeros(cfg.hop_vocab(), hd));
          head.hk = reg(hp + "hk", zeros(cfg.hop_vocab(), hd));
          head.hv = reg(hp + "hv", zeros(cfg.hop_vocab(), hd));
        }
      }
      if (cfg.use_sigma_bias) {
        if (shared) {
          const auto& h0 = p.layers[0].heads[static_cast<size_t>(h)];
          head.rq = h0.rq;
          head.rk = h0.rk;
          head.rv = h0.rv;
        } else {
          head.rq = reg(hp + "rq", zeros(cfg.sigma_dim(), hd));
          head.rk = reg(hp + "rk", zeros(cfg.sigma_dim(), hd));
          head.rv = reg(hp + "rv", zeros(cfg.sigma_dim(), hd));
        }
      }
    }
    layer.wo = reg(lp + "attn.wo", xavier_uniform(cfg.hidden, cfg.hidden, rng));
    layer.bo = reg(lp + "attn.bo", zeros(1, cfg.hidden));
    layer.ln1_g = reg(lp + "ln1.gamma", ones(1, cfg.hidden));
    layer.ln1_b = reg(lp + "ln1.beta", zeros(1, cfg.hidden));
    layer.ff1_w = reg(lp + "ffn.w1", xavier_uniform(cfg.hidden, cfg.ffn_dim(), rng));
    layer.ff1_b = reg(lp + "ffn.b1", zeros(1, cfg.ffn_dim()));
    layer.ff2_w = reg(lp + "ffn.w2", xavier_uniform(cfg.ffn_dim(), cfg.hidden, rng));
    layer.ff2_b = reg(lp + "ffn.b2", zeros(1, cfg.hidden));
    layer.ln2_g = reg(lp + "ln2.gamma", ones(1, cfg.hidden));
    layer.ln2_b = reg(lp + "ln2.beta", zeros(1, cfg.hidden));
  }

  p.final_ln_g = reg("final_ln.gamma", ones(1, cfg.hidden));
  p.final_ln_b = reg("final_ln.beta", zeros(1, cfg.hidden));
  p.cls_w = reg("classifier.w", xavier_uniform(cfg.hidden, cfg.num_classes, rng));
  p.cls_b = reg("classifier.b", zeros(1, cfg.num_classes));
  return p;
}

// ---------------------------------------------------------------------------
// Fused attention ops. Raw pair scores for one head:
//
//   e_ij = [ q_i.k_j  +  q_i.Hq[b_ij]  +  k_r.Hk[b_ij]
//            + sum_p (q_i.Rq[p] + k_r.Rk[p]) * sigma_p(i,j) ] / sqrt(d)
//
// where b_ij is the hop bucket of the pair, sigma_p are the pairwise
// distance/angle features, and r is row i (default) or column j
// (p2c_uses_key_of_j). Masked pairs are skipped entirely: their score slot
// stays 0 and is never read because the same mask gates the softmax.
// ---------------------------------------------------------------------------

inline Tensor attention_scores(const Tensor& q, const Tensor& k, const HeadParams& hp,
                               const SpatialRef& sp, const ModelConfig& cfg) {
  const int n = q->value.rows(), d = q->value.cols();
  if (k->value.rows() != n || k->value.cols() != d) throw InvalidShapeError("attention_scores: q/k shape mismatch");
  if (sp->n != n) throw InvalidShapeError("attention_scores: spatial bundle size mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool hop = cfg.use_hop_bias;
  const bool sig = cfg.use_sigma_bias;
  const bool key_of_j = cfg.p2c_uses_key_of_j;

  // Content-to-bias inner products, each N x table_rows.
  Grid<double> p1, p2, u1, u2;
  if (hop) {
    p1 = Grid<double>(n, cfg.hop_vocab(), 0.0);
    p2 = Grid<double>(n, cfg.hop_vocab(), 0.0);
    mm_nt_acc(q->value, hp.hq->value, p1);
    mm_nt_acc(k->value, hp.hk->value, p2);
  }
  if (sig) {
    u1 = Grid<double>(n, cfg.sigma_dim(), 0.0);
    u2 = Grid<double>(n, cfg.sigma_dim(), 0.0);
    mm_nt_acc(q->value, hp.rq->value, u1);
    mm_nt_acc(k->value, hp.rk->value, u2);
  }

  Grid<double> out(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!sp->mask(i, j)) continue;
      double e = 0.0;
      for (int c = 0; c < d; ++c) e += q->value(i, c) * k->value(j, c);
      const int r = key_of_j ? j : i;
      if (hop) {
        const int b = sp->buckets(i, j);
        e += p1(i, b) + p2(r, b);
      }
      if (sig) {
        e += (u1(i, 0) + u2(r, 0)) * sp->sigma.dist(i, j);
        e += (u1(i, 1) + u2(r, 1)) * sp->sigma.angle(i, j);
      }
      out(i, j) = e * inv_sqrt_d;
    }
  }

  std::vector<Tensor> parents{q, k};
  if (hop) { parents.push_back(hp.hq); parents.push_back(hp.hk); }
  if (sig) { parents.push_back(hp.rq); parents.push_back(hp.rk); }
  Tensor hq = hp.hq, hk = hp.hk, rq = hp.rq, rk = hp.rk;
  return make_op(std::move(out), std::move(parents),
                 [q, k, hq, hk, rq, rk, sp, hop, sig, key_of_j, inv_sqrt_d](const Grid<double>& grad) {
    const int n = q->value.rows(), d = q->value.cols();
    Grid<double> dq(n, d, 0.0), dk(n, d, 0.0);
    Grid<double> dhq, dhk, drq, drk;
    if (hop) {
      dhq = Grid<double>(hq->value.rows(), d, 0.0);
      dhk = Grid<double>(hk->value.rows(), d, 0.0);
    }
    if (sig) {
      drq = Grid<double>(rq->value.rows(), d, 0.0);
      drk = Grid<double>(rk->value.rows(), d, 0.0);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!sp->mask(i, j)) continue;
        const double g = grad(i, j) * inv_sqrt_d;
        if (g == 0.0) continue;
        const int r = key_of_j ? j : i;
        for (int c = 0; c < d; ++c) {
          dq(i, c) += g * k->value(j, c);
          dk(j, c) += g * q->value(i, c);
        }
        if (hop) {
          const int b = sp->buckets(i, j);
          for (int c = 0; c < d; ++c) {
            dq(i, c) += g * hq->value(b, c);
            dhq(b, c) += g * q->value(i, c);
            dk(r, c) += g * hk->value(b, c);
            dhk(b, c) += g * k->value(r, c);
          }
        }
        if (sig) {
          const double s0 = sp->sigma.dist(i, j), s1 = sp->sigma.angle(i, j);
          for (int c = 0; c < d; ++c) {
            dq(i, c) += g * (s0 * rq->value(0, c) + s1 * rq->value(1, c));
            drq(0, c) += g * s0 * q->value(i, c);
            drq(1, c) += g * s1 * q->value(i, c);
            dk(r, c) += g * (s0 * rk->value(0, c) + s1 * rk->value(1, c));
            drk(0, c) += g * s0 * k->value(r, c);
            drk(1, c) += g * s1 * k->value(r, c);
          }
        }
      }
    }
    if (q->requires_grad) q->accumulate(dq);
    if (k->requires_grad) k->accumulate(dk);
    if (hop && hq->requires_grad) hq->accumulate(dhq);
    if (hop && hk->requires_grad) hk->accumulate(dhk);
    if (sig && rq->requires_grad) rq->accumulate(drq);
    if (sig && rk->requires_grad) rk->accumulate(drk);
  });
}

// Attention aggregation with the same bias tables on the value path:
//
//   z_i = sum_j a_ij * ( v_j + Hv[b_ij] + sum_p sigma_p(i,j) * Rv[p] )
//
// Masked pairs contribute nothing (their a_ij is exactly zero).
inline Tensor attention_output(const Tensor& probs, const Tensor& v, const HeadParams& hp,
                               const SpatialRef& sp, const ModelConfig& cfg) {
  const int n = probs->value.rows(), d = v->value.cols();
  if (probs->value.cols() != n || v->value.rows() != n)
    throw InvalidShapeError("attention_output: probs/v shape mismatch");
  if (sp->n != n) throw InvalidShapeError("attention_output: spatial bundle size mismatch");
  const bool hop = cfg.use_hop_bias;
  const bool sig = cfg.use_sigma_bias;

  // Aggregate attention mass per hop bucket / per sigma feature, then let the
  // tables enter through two small matmuls.
  Grid<double> t_hop, s_sig;
  if (hop) {
    t_hop = Grid<double>(n, cfg.hop_vocab(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (sp->mask(i, j)) t_hop(i, sp->buckets(i, j)) += probs->value(i, j);
  }
  if (sig) {
    s_sig = Grid<double>(n, cfg.sigma_dim(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (sp->mask(i, j)) {
          s_sig(i, 0) += probs->value(i, j) * sp->sigma.dist(i, j);
          s_sig(i, 1) += probs->value(i, j) * sp->sigma.angle(i, j);
        }
  }

  Grid<double> out(n, d, 0.0);
  mm_nn_acc(probs->value, v->value, out);
  if (hop) mm_nn_acc(t_hop, hp.hv->value, out);
  if (sig) mm_nn_acc(s_sig, hp.rv->value, out);

  std::vector<Tensor> parents{probs, v};
  if (hop) parents.push_back(hp.hv);
  if (sig) parents.push_back(hp.rv);
  Tensor hv = hp.hv, rv = hp.rv;
  return make_op(std::move(out), std::move(parents),
                 [probs, v, hv, rv, sp, hop, sig, t_hop, s_sig](const Grid<double>& grad) {
    const int n = probs->value.rows(), d = v->value.cols();
    if (probs->requires_grad) {
      Grid<double> da(n, n, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!sp->mask(i, j)) continue;
          double s = 0.0;
          for (int c = 0; c < d; ++c) s += grad(i, c) * v->value(j, c);
          if (hop) {
            const int b = sp->buckets(i, j);
            for (int c = 0; c < d; ++c) s += grad(i, c) * hv->value(b, c);
          }
          if (sig) {
            const double s0 = sp->sigma.dist(i, j), s1 = sp->sigma.angle(i, j);
            for (int c = 0; c < d; ++c)
              s += grad(i, c) * (s0 * rv->value(0, c) + s1 * rv->value(1, c));
          }
          da(i, j) = s;
        }
      }
      probs->accumulate(da);
    }
    if (v->requires_grad) {
      Grid<double> dv(n, d, 0.0);
      mm_tn_acc(probs->value, grad, dv);
      v->accumulate(dv);
    }
    if (hop && hv->requires_grad) {
      Grid<double> dhv(hv->value.rows(), d, 0.0);
      mm_tn_acc(t_hop, grad, dhv);
      hv->accumulate(dhv);
    }
    if (sig && rv->requires_grad) {
      Grid<double> drv(rv->value.rows(), d, 0.0);
      mm_tn_acc(s_sig, grad, drv);
      rv->accumulate(drv);
    }
  });
}

// ---------------------------------------------------------------------------
// Full forward pass.
// ---------------------------------------------------------------------------

// Per-head attention probabilities recorded during a forward pass,
// indexed [layer][head].
struct AttentionCapture {
  std::vector<std::vector<Grid<double>>> probs;
};

inline Tensor transformer_forward(const ModelParams& p, const Grid<double>& text_vecs,
                                  const Grid<double>& geo_feats, const SpatialRef& sp,
                                  AttentionCapture* capture = nullptr) {
  const ModelConfig& cfg = p.config;
  if (text_vecs.cols() != cfg.text_dim) throw InvalidShapeError("transformer_forward: text width != text_dim");
  if (geo_feats.cols() != cfg.geo_dim()) throw InvalidShapeError("transformer_forward: geo width != geo_dim");
  if (text_vecs.rows() != sp->n || geo_feats.rows() != sp->n)
    throw InvalidShapeError("transformer_forward: row count != bundle size");

  if (capture) {
    capture->probs.assign(static_cast<size_t>(cfg.layers), {});
  }

  Tensor x = input_embedding(p.embedder, make_tensor(text_vecs), make_tensor(geo_feats));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& layer = p.layers[static_cast<size_t>(l)];
    Tensor heads_out;
    for (int h = 0; h < cfg.heads; ++h) {
      const auto& head = layer.heads[static_cast<size_t>(h)];
      Tensor q = matmul(x, head.wq);
      Tensor k = matmul(x, head.wk);
      Tensor v = matmul(x, head.wv);
      Tensor scores = attention_scores(q, k, head, sp, cfg);
      Tensor probs = row_softmax(scores, sp->mask);
      if (capture) capture->probs[static_cast<size_t>(l)].push_back(probs->value);
      Tensor z = attention_output(probs, v, head, sp, cfg);
      heads_out = h == 0 ? z : concat_cols(heads_out, z);
    }
    Tensor attn = bias_add(matmul(heads_out, layer.wo), layer.bo);
    x = layer_norm(add(x, attn), layer.ln1_g, layer.ln1_b);
    Tensor ff = bias_add(matmul(gelu(bias_add(matmul(x, layer.ff1_w), layer.ff1_b)), layer.ff2_w), layer.ff2_b);
    x = layer_norm(add(x, ff), layer.ln2_g, layer.ln2_b);
  }
  x = layer_norm(x, p.final_ln_g, p.final_ln_b);
  return bias_add(matmul(x, p.cls_w), p.cls_b);
}

}  // namespace knnf
