// Command-line front end: train / eval / predict / synth / grid.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <knnformer/knnformer.hpp>

namespace {

using namespace knnf;

// ---------------------------------------------------------------------------
// Flag plumbing. Precedence: defaults < --config file < KNNF_* env < flags.
// ---------------------------------------------------------------------------

struct ConfigFlags {
  std::string config_path;
  int hidden = 0, layers = 0, heads = 0, ffn_ratio = 0, text_dim = 0, size_dim = 0;
  int knn_k = 0, hop_threshold = 0, max_bucket = 0, epochs = 0, batch_size = 0;
  double lr = 0.0;
  uint64_t seed = 0, hash_seed = 0;
  std::string loss;
  bool share_tables = false, p2c_key_of_j = false, no_matching = false;
  std::vector<std::string> ablate;
  std::map<std::string, CLI::Option*> opts;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  f.opts["config"] = cmd->add_option("--config", f.config_path, "JSON config file (flat key space)");
  f.opts["hidden"] = cmd->add_option("--hidden", f.hidden, "model width");
  f.opts["layers"] = cmd->add_option("--layers", f.layers, "transformer layers");
  f.opts["heads"] = cmd->add_option("--heads", f.heads, "attention heads");
  f.opts["ffn_ratio"] = cmd->add_option("--ffn-ratio", f.ffn_ratio, "feed-forward width multiplier");
  f.opts["text_dim"] = cmd->add_option("--text-dim", f.text_dim, "text vector width");
  f.opts["size_dim"] = cmd->add_option("--size-dim", f.size_dim, "lifted geometry width");
  f.opts["knn_k"] = cmd->add_option("--knn-k", f.knn_k, "neighbors per node in the box graph");
  f.opts["hop_threshold"] = cmd->add_option("--hop-threshold", f.hop_threshold, "attention hop radius");
  f.opts["max_bucket"] = cmd->add_option("--max-bucket", f.max_bucket, "hop distances clamp here");
  f.opts["epochs"] = cmd->add_option("--epochs", f.epochs, "training epochs");
  f.opts["batch_size"] = cmd->add_option("--batch-size", f.batch_size, "documents per optimizer step");
  f.opts["lr"] = cmd->add_option("--lr", f.lr, "Adam learning rate");
  f.opts["seed"] = cmd->add_option("--seed", f.seed, "weight init / shuffle seed");
  f.opts["hash_seed"] = cmd->add_option("--hash-seed", f.hash_seed, "text hash seed");
  f.opts["loss"] = cmd->add_option("--loss", f.loss, "per_entity_ce or matched_ce");
  f.opts["share_bias_tables"] =
      cmd->add_flag("--share-bias-tables", f.share_tables, "all layers reuse layer 0's bias tables");
  f.opts["p2c_uses_key_of_j"] =
      cmd->add_flag("--p2c-key-of-j", f.p2c_key_of_j, "pair->content bias reads the target's key vector");
  f.opts["matching"] =
      cmd->add_flag("--no-matching", f.no_matching, "decode by per-entity argmax instead of assignment");
  cmd->add_option("--ablate", f.ablate, "disable components: hop, local, sigma, abspos, matching")
      ->delimiter(',');
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig rc;
  if (f.opts.at("config")->count()) load_config_file(rc, f.config_path);
  apply_env(rc);
  auto maybe = [&](const char* key, nlohmann::json v) {
    if (f.opts.at(key)->count()) set_config_key(rc, key, v);
  };
  maybe("hidden", f.hidden);
  maybe("layers", f.layers);
  maybe("heads", f.heads);
  maybe("ffn_ratio", f.ffn_ratio);
  maybe("text_dim", f.text_dim);
  maybe("size_dim", f.size_dim);
  maybe("knn_k", f.knn_k);
  maybe("hop_threshold", f.hop_threshold);
  maybe("max_bucket", f.max_bucket);
  maybe("epochs", f.epochs);
  maybe("batch_size", f.batch_size);
  maybe("lr", f.lr);
  maybe("seed", f.seed);
  maybe("hash_seed", f.hash_seed);
  maybe("loss", f.loss);
  if (f.opts.at("share_bias_tables")->count()) rc.model.share_bias_tables = true;
  if (f.opts.at("p2c_uses_key_of_j")->count()) rc.model.p2c_uses_key_of_j = true;
  if (f.opts.at("matching")->count()) rc.matching = false;
  for (const auto& a : f.ablate) {
    if (a == "hop") rc.model.use_hop_bias = false;
    else if (a == "local") rc.model.use_local_mask = false;
    else if (a == "sigma") rc.model.use_sigma_bias = false;
    else if (a == "abspos") rc.model.use_abs_pos = false;
    else if (a == "matching") rc.matching = false;
    else throw ConfigError("unknown ablation \"" + a + "\" (expected hop, local, sigma, abspos, or matching)");
  }
  return rc;
}

struct SplitFlags {
  std::string mode = "none";  // none | random | by_tag
  int eval_count = 0;         // 0 = one fifth of the corpus
  uint64_t split_seed = 42;
  std::vector<std::string> holdout_tags;
};

void add_split_flags(CLI::App* cmd, SplitFlags& f, const std::string& default_mode) {
  f.mode = default_mode;
  cmd->add_option("--split", f.mode, "none, random, or by_tag (default " + default_mode + ")")
      ->check(CLI::IsMember({"none", "random", "by_tag"}));
  cmd->add_option("--eval-count", f.eval_count, "eval documents for --split random (0 = corpus/5)");
  cmd->add_option("--split-seed", f.split_seed, "shuffle seed for --split random");
  cmd->add_option("--holdout-tags", f.holdout_tags, "tags held out for --split by_tag")->delimiter(',');
}

SplitResult make_split(const std::vector<Document>& docs, const SplitFlags& f) {
  if (f.mode == "random") {
    int count = f.eval_count > 0 ? f.eval_count : std::max(1, static_cast<int>(docs.size()) / 5);
    return split_random(docs, count, f.split_seed);
  }
  if (f.mode == "by_tag") return split_by_tag(docs, f.holdout_tags);
  return SplitResult{docs, {}};
}

// ---------------------------------------------------------------------------
// Shared loading helpers.
// ---------------------------------------------------------------------------

LabelSchema load_schema_or_default(const std::string& path) {
  return path.empty() ? default_poi_schema() : load_schema(path);
}

struct Embeddings {
  std::optional<EmbeddingTable> table;
  EmbeddingSource source(int text_dim, uint64_t hash_seed) const {
    EmbeddingSource src;
    src.dim = text_dim;
    src.hash_seed = hash_seed;
    src.table = table ? &*table : nullptr;
    return src;
  }
};

Embeddings load_embeddings_opt(const std::string& path, int text_dim) {
  Embeddings e;
  if (path.empty()) return e;
  e.table = load_embeddings(path);
  if (e.table->dim != text_dim)
    throw ConfigError("embeddings file has dim " + std::to_string(e.table->dim) + " but text_dim is " +
                      std::to_string(text_dim) + "; set text_dim to match");
  return e;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

struct TrainArgs {
  ConfigFlags cfg;
  SplitFlags split;
  std::string data, schema, embeddings, out, metrics;
  int log_every = 25;
};

void run_train(const TrainArgs& a) {
  RunConfig rc = resolve_config(a.cfg);
  const LabelSchema schema = load_schema_or_default(a.schema);
  rc.model.num_classes = schema.size();
  rc.validate();

  const std::vector<Document> docs = load_annotations(a.data, schema);
  const SplitResult split = make_split(docs, a.split);
  const Embeddings emb = load_embeddings_opt(a.embeddings, rc.model.text_dim);
  const EmbeddingSource src = emb.source(rc.model.text_dim, rc.hash_seed);

  Rng init_rng(rc.seed);
  ModelParams params = build_model_params(rc.model, init_rng);

  const std::vector<PreparedDoc> train_docs = prepare_docs(split.train, rc.model, src);
  const std::vector<PreparedDoc> eval_docs = prepare_docs(split.eval, rc.model, src);

  TrainOptions opt;
  opt.epochs = rc.epochs;
  opt.batch_size = rc.batch_size;
  opt.adam.lr = rc.lr;
  opt.loss = rc.loss_mode();
  opt.eval_decode = rc.decode_mode();
  opt.seed = rc.seed;
  opt.log_every = a.log_every;
  opt.log = a.log_every > 0 ? &std::cerr : nullptr;

  const TrainResult result = train_model(params, train_docs, eval_docs, schema, opt);
  save_checkpoint(a.out, params, CheckpointMeta{rc.seed, rc.hash_seed, schema});

  std::cout << "checkpoint " << a.out << " params " << params.param_count() << " train_docs "
            << train_docs.size() << " eval_docs " << eval_docs.size();
  if (!eval_docs.empty()) {
    const F1Report rep = evaluate(params, eval_docs, schema, rc.decode_mode());
    std::cout << " best_epoch " << result.best_epoch << " eval_f1 " << rep.macro_f1;
    if (!a.metrics.empty()) write_text_file(a.metrics, to_json(rep).dump() + "\n");
  }
  std::cout << '\n';
}

struct EvalArgs {
  SplitFlags split;
  std::string data, checkpoint, embeddings, metrics;
  bool no_matching = false;
};

void run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const LabelSchema& schema = ck.meta.schema;
  const std::vector<Document> docs = load_annotations(a.data, schema);
  const SplitResult split = make_split(docs, a.split);
  const std::vector<Document>& subset = a.split.mode == "none" ? split.train : split.eval;
  if (subset.empty()) throw InvalidInputError("eval: selected split is empty");

  const Embeddings emb = load_embeddings_opt(a.embeddings, ck.params.config.text_dim);
  const EmbeddingSource src = emb.source(ck.params.config.text_dim, ck.meta.hash_embed_seed);
  const std::vector<PreparedDoc> prepared = prepare_docs(subset, ck.params.config, src);

  const DecodeMode mode = a.no_matching ? DecodeMode::kArgmax : DecodeMode::kMatched;
  const F1Report rep = evaluate(ck.params, prepared, schema, mode);
  const std::string payload = to_json(rep).dump() + "\n";
  std::cout << payload;
  if (!a.metrics.empty()) write_text_file(a.metrics, payload);
}

struct PredictArgs {
  std::string data, checkpoint, embeddings, out;
  bool no_matching = false;
};

void run_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const LabelSchema& schema = ck.meta.schema;
  const std::vector<Document> docs = load_annotations(a.data, schema);
  const Embeddings emb = load_embeddings_opt(a.embeddings, ck.params.config.text_dim);
  const EmbeddingSource src = emb.source(ck.params.config.text_dim, ck.meta.hash_embed_seed);
  const DecodeMode mode = a.no_matching ? DecodeMode::kArgmax : DecodeMode::kMatched;

  nlohmann::json out = nlohmann::json::array();
  for (const auto& doc : docs) {
    const PreparedDoc prepared = prepare_doc(doc, ck.params.config, src);
    const std::vector<int> pred = predict_document(ck.params, prepared, schema, mode);
    nlohmann::json names = nlohmann::json::array();
    for (const int c : pred) names.push_back(schema.categories[static_cast<size_t>(c)].name);
    out.push_back({{"id", doc.id}, {"categories", std::move(names)}});
  }
  const std::string payload = out.dump() + "\n";
  if (a.out.empty()) std::cout << payload;
  else write_text_file(a.out, payload);
}

struct SynthArgs {
  GenConfig gen;
  std::string out, schema_out;
};

void run_synth(const SynthArgs& a) {
  const std::vector<Document> docs = generate_synthetic(a.gen);
  save_annotations(a.out, docs, default_poi_schema());
  if (!a.schema_out.empty()) save_schema(a.schema_out, default_poi_schema());
  size_t entities = 0;
  for (const auto& d : docs) entities += d.entities.size();
  std::cout << "wrote " << docs.size() << " documents (" << entities << " entities) to " << a.out << '\n';
}

struct GridArgs {
  ConfigFlags cfg;
  SplitFlags split;
  std::string data, schema, embeddings, out;
  std::vector<double> lrs{5e-3, 1e-3, 5e-4};
  std::vector<int> layers_list{4, 8};
  std::vector<int> thresholds{1, 2, 3};
  std::vector<int> heads_list{4, 8};
};

void run_grid(const GridArgs& a) {
  const RunConfig base = resolve_config(a.cfg);
  const LabelSchema schema = load_schema_or_default(a.schema);
  const std::vector<Document> docs = load_annotations(a.data, schema);
  const SplitResult split = make_split(docs, a.split);
  if (split.eval.empty()) throw InvalidInputError("grid: needs a non-empty eval split (use --split)");
  const Embeddings emb = load_embeddings_opt(a.embeddings, base.model.text_dim);

  nlohmann::json results = nlohmann::json::array();
  double best_f1 = -1.0;
  nlohmann::json best;
  for (const double lr : a.lrs)
    for (const int layers : a.layers_list)
      for (const int threshold : a.thresholds)
        for (const int heads : a.heads_list) {
          RunConfig rc = base;
          rc.lr = lr;
          rc.model.layers = layers;
          rc.model.hop_threshold = threshold;
          rc.model.heads = heads;
          rc.model.num_classes = schema.size();
          rc.validate();
          const EmbeddingSource src = emb.source(rc.model.text_dim, rc.hash_seed);
          Rng init_rng(rc.seed);
          ModelParams params = build_model_params(rc.model, init_rng);
          const std::vector<PreparedDoc> train_docs = prepare_docs(split.train, rc.model, src);
          const std::vector<PreparedDoc> eval_docs = prepare_docs(split.eval, rc.model, src);
          TrainOptions opt;
          opt.epochs = rc.epochs;
          opt.batch_size = rc.batch_size;
          opt.adam.lr = rc.lr;
          opt.loss = rc.loss_mode();
          opt.eval_decode = rc.decode_mode();
          opt.seed = rc.seed;
          const TrainResult r = train_model(params, train_docs, eval_docs, schema, opt);
          nlohmann::json row{{"lr", lr},
                             {"layers", layers},
                             {"hop_threshold", threshold},
                             {"heads", heads},
                             {"best_eval_f1", r.best_eval_f1},
                             {"best_epoch", r.best_epoch}};
          std::cerr << "grid: " << row.dump() << '\n';
          if (r.best_eval_f1 > best_f1) {
            best_f1 = r.best_eval_f1;
            best = row;
          }
          results.push_back(std::move(row));
        }
  std::sort(results.begin(), results.end(), [](const nlohmann::json& x, const nlohmann::json& y) {
    return x.at("best_eval_f1").get<double>() > y.at("best_eval_f1").get<double>();
  });
  if (!a.out.empty()) write_text_file(a.out, results.dump() + "\n");
  std::cout << "best " << best.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-biased transformer for document entity extraction"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--data", train_args.data, "annotation JSON")->required();
  train->add_option("--schema", train_args.schema, "label schema JSON (default: built-in identity fields)");
  train->add_option("--embeddings", train_args.embeddings, "precomputed text vectors (JSONL)");
  train->add_option("--out", train_args.out, "checkpoint output path")->required();
  train->add_option("--metrics", train_args.metrics, "write final eval metrics JSON here");
  train->add_option("--log-every", train_args.log_every, "progress line every N epochs (stderr)");
  add_config_flags(train, train_args.cfg);
  add_split_flags(train, train_args.split, "random");
  train->callback([&] { run_train(train_args); });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a corpus");
  eval->add_option("--data", eval_args.data, "annotation JSON")->required();
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint to score")->required();
  eval->add_option("--embeddings", eval_args.embeddings, "precomputed text vectors (JSONL)");
  eval->add_option("--metrics", eval_args.metrics, "also write metrics JSON here");
  eval->add_flag("--no-matching", eval_args.no_matching, "decode by per-entity argmax");
  add_split_flags(eval, eval_args.split, "none");
  eval->callback([&] { run_eval(eval_args); });

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "label a corpus with a checkpoint");
  predict->add_option("--data", predict_args.data, "annotation JSON")->required();
  predict->add_option("--checkpoint", predict_args.checkpoint, "checkpoint to use")->required();
  predict->add_option("--embeddings", predict_args.embeddings, "precomputed text vectors (JSONL)");
  predict->add_option("--out", predict_args.out, "predictions JSON path (default stdout)");
  predict->add_flag("--no-matching", predict_args.no_matching, "decode by per-entity argmax");
  predict->callback([&] { run_predict(predict_args); });

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  synth->add_option("--out", synth_args.out, "corpus output path")->required();
  synth->add_option("--docs", synth_args.gen.docs, "number of documents (default 250)");
  synth->add_option("--templates", synth_args.gen.templates, "number of layout templates (default 10)");
  synth->add_option("--sensitive-fraction", synth_args.gen.sensitive_fraction,
                    "fraction of hop-sensitive documents (default 0.5)");
  synth->add_option("--seed", synth_args.gen.seed, "corpus seed");
  synth->add_option("--page-w", synth_args.gen.page_w, "page width in pixels");
  synth->add_option("--page-h", synth_args.gen.page_h, "page height in pixels");
  synth->add_option("--schema-out", synth_args.schema_out, "also write the built-in schema here");
  synth->callback([&] { run_synth(synth_args); });

  GridArgs grid_args;
  CLI::App* grid = app.add_subcommand("grid", "grid search over lr, layers, hop threshold, heads");
  grid->add_option("--data", grid_args.data, "annotation JSON")->required();
  grid->add_option("--schema", grid_args.schema, "label schema JSON");
  grid->add_option("--embeddings", grid_args.embeddings, "precomputed text vectors (JSONL)");
  grid->add_option("--out", grid_args.out, "results JSON path");
  grid->add_option("--lrs", grid_args.lrs, "learning rates to try")->delimiter(',');
  grid->add_option("--layers-list", grid_args.layers_list, "layer counts to try")->delimiter(',');
  grid->add_option("--thresholds", grid_args.thresholds, "hop thresholds to try")->delimiter(',');
  grid->add_option("--heads-list", grid_args.heads_list, "head counts to try")->delimiter(',');
  add_config_flags(grid, grid_args.cfg);
  add_split_flags(grid, grid_args.split, "random");
  grid->callback([&] { run_grid(grid_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
