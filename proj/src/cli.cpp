#include "aes/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "aes/bow.hpp"
#include "aes/checkpoint.hpp"
#include "aes/corpus.hpp"
#include "aes/metrics.hpp"
#include "aes/text.hpp"
#include "aes/training.hpp"

namespace aes {

namespace {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

struct RunConfig {
  std::string data_path;
  std::string spec_path;
  std::string out_dir = "out";
  std::string pred_path;
  std::string stopword_file;
  std::string model = "bert";
  int item = -1;  // -1: first item in the data
  int fold = 0;
  std::uint64_t seed = 1;
  std::size_t vocab_size = 2000;
  double tfidf_cutoff = 0.9;
  EncoderConfig enc;
  std::size_t lstm_embed = 16;
  std::size_t lstm_hidden = 16;
  std::size_t lstm_layers = 1;
  bool lstm_mean_pool = false;
  std::size_t lstm_window_cap = 126;
  TrainPlan plan;
  std::string lr_variant = "fixed";
  std::string unfreeze = "off";
  std::vector<std::string> checkpoints;
  std::string ensemble_mode = "mean";
  std::size_t best_member = 0;
  std::string qwk_variant = "standard";
  std::size_t jobs = 1;
};

// One row of the flat key=value configuration surface; used for config files,
// --print-config and the run manifest alike.
struct ConfigKey {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::vector<ConfigKey> config_table(RunConfig& c) {
  auto s_str = [](std::string& ref) {
    return std::make_pair([&ref] { return ref; },
                          [&ref](const std::string& v) { ref = v; });
  };
  auto s_int = [](auto& ref) {
    return std::make_pair([&ref] { return std::to_string(ref); },
                          [&ref](const std::string& v) {
                            ref = static_cast<std::decay_t<decltype(ref)>>(std::stoll(v));
                          });
  };
  auto s_double = [](double& ref) {
    return std::make_pair([&ref] {
        std::ostringstream os; os.precision(17); os << ref; return os.str(); },
                          [&ref](const std::string& v) { ref = std::stod(v); });
  };
  auto s_bool = [](bool& ref) {
    return std::make_pair([&ref] { return std::string(ref ? "1" : "0"); },
                          [&ref](const std::string& v) { ref = (v == "1" || v == "true"); });
  };
  std::vector<ConfigKey> t;
  auto addk = [&t](const std::string& key, auto pair) {
    t.push_back({key, pair.first, pair.second});
  };
  addk("data", s_str(c.data_path));
  addk("spec", s_str(c.spec_path));
  addk("out", s_str(c.out_dir));
  addk("pred", s_str(c.pred_path));
  addk("stopword-file", s_str(c.stopword_file));
  addk("model", s_str(c.model));
  addk("item", s_int(c.item));
  addk("fold", s_int(c.fold));
  addk("seed", s_int(c.seed));
  addk("vocab-size", s_int(c.vocab_size));
  addk("tfidf-cutoff", s_double(c.tfidf_cutoff));
  addk("embed-dim", s_int(c.enc.embed_dim));
  addk("heads", s_int(c.enc.heads));
  addk("layers", s_int(c.enc.layers));
  addk("ffn-dim", s_int(c.enc.ffn_dim));
  addk("max-len", s_int(c.enc.max_len));
  addk("mem-len", s_int(c.enc.mem_len));
  addk("dropout", s_double(c.enc.dropout));
  addk("pos-denominator", s_double(c.enc.pos_denominator));
  addk("lstm-embed", s_int(c.lstm_embed));
  addk("lstm-hidden", s_int(c.lstm_hidden));
  addk("lstm-layers", s_int(c.lstm_layers));
  addk("lstm-mean-pool", s_bool(c.lstm_mean_pool));
  addk("lstm-window-cap", s_int(c.lstm_window_cap));
  addk("epochs", s_int(c.plan.epochs));
  addk("lr", s_double(c.plan.base_lr));
  addk("lr-variant", s_str(c.lr_variant));
  addk("xi", s_double(c.plan.xi));
  addk("unfreeze", s_str(c.unfreeze));
  addk("dropout-override", s_double(c.plan.dropout_override));
  addk("layer-limit", s_int(c.plan.layer_limit));
  addk("remove-stopwords", s_bool(c.plan.remove_stopwords));
  addk("batch-size", s_int(c.plan.batch_size));
  addk("window", s_int(c.plan.window));
  addk("prob-average", s_bool(c.plan.prob_average));
  addk("warmup", s_bool(c.plan.warmup));
  addk("warmup-steps", s_int(c.plan.warmup_steps));
  addk("ensemble-mode", s_str(c.ensemble_mode));
  addk("best-member", s_int(c.best_member));
  addk("qwk-variant", s_str(c.qwk_variant));
  addk("jobs", s_int(c.jobs));
  return t;
}

void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open config file: " + path);
  auto table = config_table(c);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    bool known = false;
    for (auto& entry : table) {
      if (entry.key == key) {
        entry.set(value);
        known = true;
        break;
      }
    }
    if (!known && key.rfind("manifest.", 0) != 0 && key != "command") {
      throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
}

std::string effective_config(RunConfig& c) {
  std::ostringstream os;
  for (auto& entry : config_table(c)) os << entry.key << " = " << entry.get() << "\n";
  return os.str();
}

void finalize_plan(RunConfig& c) {
  c.plan.lr_variant = c.lr_variant == "discriminative" ? LrVariant::discriminative
                                                       : LrVariant::fixed;
  c.plan.unfreeze = c.unfreeze == "gradual" ? UnfreezeMode::gradual : UnfreezeMode::off;
  c.plan.seed = c.seed;
  if (c.lr_variant != "fixed" && c.lr_variant != "discriminative") {
    throw ValueError("lr-variant must be fixed or discriminative");
  }
  if (c.unfreeze != "off" && c.unfreeze != "gradual") {
    throw ValueError("unfreeze must be off or gradual");
  }
}

void ensure_out_dir(const RunConfig& c) { fs::create_directories(c.out_dir); }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write " + path);
  out << content;
}

void write_manifest(RunConfig& c, const std::string& command,
                    const std::map<std::string, std::string>& extra) {
  std::ostringstream os;
  os << "command = " << command << "\n";
  os << effective_config(c);
  for (const auto& [k, v] : extra) os << "manifest." << k << " = " << v << "\n";
  write_file(c.out_dir + "/manifest.txt", os.str());
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << std::fixed << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Data preparation

std::set<std::string> stoplist_for(const RunConfig& c) {
  if (!c.stopword_file.empty()) return load_stopwords(c.stopword_file);
  return builtin_stopwords();
}

Corpus load_corpus(const RunConfig& c) {
  if (c.data_path.empty()) throw ValueError("--data is required");
  if (!c.spec_path.empty()) return load_tsv(c.data_path, load_item_spec_tsv(c.spec_path));
  return load_tsv(c.data_path);
}

int pick_item(const Corpus& corpus, int requested) {
  if (requested >= 0) {
    corpus.spec_for(requested);  // validates
    return requested;
  }
  if (corpus.items.empty()) throw ValueError("no items in corpus");
  return corpus.items.front().item;
}

struct PreparedItem {
  int item = 0;
  ItemSpec spec;
  std::vector<std::size_t> indices;               // corpus indices of this item
  std::map<std::size_t, LabeledText> by_index;    // corpus index -> (text, label)
};

PreparedItem prepare_item(const Corpus& corpus, int item, const TrainPlan& plan,
                          const std::set<std::string>& stoplist) {
  PreparedItem out;
  out.item = item;
  out.spec = corpus.spec_for(item);
  out.indices = corpus.indices_of_item(item);
  auto labeled = to_labels(corpus, out.indices, out.spec);
  for (const auto& le : labeled) {
    std::string text = corpus.essays[le.corpus_index].text;
    if (plan.remove_stopwords) {
      std::string filtered = remove_stopwords(text, stoplist);
      if (!trim(filtered).empty()) text = filtered;
    }
    out.by_index[le.corpus_index] = {text, le.label};
  }
  return out;
}

std::vector<LabeledText> subset(const PreparedItem& item,
                                const std::vector<std::size_t>& corpus_indices) {
  std::vector<LabeledText> out;
  out.reserve(corpus_indices.size());
  for (std::size_t idx : corpus_indices) out.push_back(item.by_index.at(idx));
  return out;
}

// ---------------------------------------------------------------------------
// One fold of one item with one model

struct FoldOutcome {
  int fold = 0;
  std::size_t n_train = 0, n_dev = 0, n_val = 0;
  double dev_qwk = 0.0;  // best epoch's dev QWK (NaN if undefined)
  double val_qwk = 0.0;
  double val_acc = 0.0;
  std::vector<EpochStat> history;
  std::vector<std::pair<long, int>> val_predictions;  // essay_id -> predicted score
};

double qwk_or_nan(const std::vector<int>& pred, const std::vector<int>& truth,
                  std::size_t k) {
  try {
    return qwk(confusion(pred, truth, k));
  } catch (const UndefinedKappaError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

FoldOutcome run_one_fold(const Corpus& corpus, const RunConfig& cfg, const TrainPlan& plan,
                         const PreparedItem& item, const FoldSplit& fold,
                         const std::string& checkpoint_path) {
  FoldOutcome out;
  out.fold = fold.fold;
  out.n_train = fold.train.size();
  out.n_dev = fold.test.size();
  out.n_val = fold.validation.size();
  auto train = subset(item, fold.train);
  auto dev = subset(item, fold.test);
  std::size_t k = item.spec.label_count();
  std::uint64_t seed = mix_seed(plan.seed, mix_seed(static_cast<std::uint64_t>(item.item),
                                                    static_cast<std::uint64_t>(fold.fold)));
  SaveContext save_ctx;
  save_ctx.item = item.item;
  save_ctx.spec = item.spec;
  save_ctx.plan = plan;
  save_ctx.seed = plan.seed;

  std::vector<int> val_truth, val_pred;
  auto record_val = [&](auto&& predict_label) {
    for (std::size_t idx : fold.validation) {
      const auto& [text, label] = item.by_index.at(idx);
      std::size_t pred = predict_label(text);
      val_truth.push_back(static_cast<int>(label));
      val_pred.push_back(static_cast<int>(pred));
      out.val_predictions.emplace_back(corpus.essays[idx].essay_id,
                                       label_to_score(pred, item.spec));
    }
  };

  if (cfg.model == "bow") {
    std::vector<std::string> docs;
    std::vector<std::size_t> labels;
    for (const auto& [text, label] : train) {
      docs.push_back(text);
      labels.push_back(label);
    }
    BowClassifier clf;
    clf.classes = k;
    clf.features = fit_tfidf(docs, cfg.tfidf_cutoff);
    std::vector<Tensor> features;
    for (const auto& d : docs) features.push_back(vectorize(d, clf.features));
    Rng rng = make_rng(seed);
    train_bow_classifier(clf, features, labels, plan.epochs, plan.base_lr, rng,
                         plan.batch_size);
    std::vector<int> dev_truth, dev_pred;
    for (const auto& [text, label] : dev) {
      dev_truth.push_back(static_cast<int>(label));
      dev_pred.push_back(static_cast<int>(bow_predict(clf, vectorize(text, clf.features))));
    }
    out.dev_qwk = qwk_or_nan(dev_pred, dev_truth, k);
    record_val([&](const std::string& text) {
      return bow_predict(clf, vectorize(text, clf.features));
    });
    if (!checkpoint_path.empty()) save_bow_bundle(checkpoint_path, clf, save_ctx);
  } else {
    std::vector<std::string> train_texts;
    for (const auto& [text, label] : train) {
      (void)label;
      train_texts.push_back(text);
    }
    Vocab vocab = Vocab::build(train_texts, cfg.vocab_size);
    Rng rng = make_rng(seed);
    std::unique_ptr<Scorer> scorer;
    EncoderConfig enc_cfg = cfg.enc;
    LstmConfig lstm_cfg;
    if (cfg.model == "bert" || cfg.model == "xlnet") {
      enc_cfg.vocab_size = vocab.size();
      scorer = std::make_unique<TransformerScorer>(enc_cfg, variant_from_string(cfg.model),
                                                   k, rng);
    } else if (cfg.model == "lstm") {
      lstm_cfg.vocab_size = vocab.size();
      lstm_cfg.embed_dim = cfg.lstm_embed;
      lstm_cfg.hidden = cfg.lstm_hidden;
      lstm_cfg.layers = cfg.lstm_layers;
      lstm_cfg.classes = k;
      lstm_cfg.mean_pool = cfg.lstm_mean_pool;
      scorer = std::make_unique<LstmScorer>(lstm_cfg, cfg.lstm_window_cap, rng);
    } else {
      throw ValueError("unknown model kind: " + cfg.model);
    }
    TrainPlan fold_plan = plan;
    fold_plan.seed = seed;
    FinetuneResult ft = finetune(*scorer, vocab, train, dev, fold_plan);
    out.history = ft.history;
    out.dev_qwk = ft.best_dev_qwk;
    record_val([&](const std::string& text) {
      return predict_essay(*scorer, text, vocab, fold_plan);
    });
    if (!checkpoint_path.empty()) {
      save_scorer_bundle(checkpoint_path, *scorer, vocab,
                         cfg.model == "lstm" ? nullptr : &enc_cfg,
                         cfg.model == "lstm" ? &lstm_cfg : nullptr, save_ctx);
    }
  }
  out.val_qwk = qwk_or_nan(val_pred, val_truth, k);
  ConfusionMatrix m = confusion(val_pred, val_truth, k);
  out.val_acc = exact_agreement(m);
  return out;
}

std::string predictions_tsv(const std::vector<std::pair<long, int>>& preds, int item) {
  std::ostringstream os;
  os << "essay_id\titem\tpredicted_score\n";
  for (const auto& [id, score] : preds) os << id << '\t' << item << '\t' << score << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_ingest(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  ensure_out_dir(cfg);
  std::ostringstream os;
  os << "item\tessays\tmin_score\tmax_score\n";
  for (const auto& spec : corpus.items) {
    os << spec.item << '\t' << corpus.indices_of_item(spec.item).size() << '\t'
       << spec.min_score << '\t' << spec.max_score << '\n';
  }
  std::cout << os.str();
  write_file(cfg.out_dir + "/metrics.tsv", os.str());
  write_manifest(cfg, "ingest", {{"data_hash", file_hash_hex(cfg.data_path)},
                                 {"essays", std::to_string(corpus.essays.size())}});
  return 0;
}

int cmd_vocab(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  std::vector<std::string> docs;
  for (const auto& e : corpus.essays) docs.push_back(e.text);
  Vocab vocab = Vocab::build(docs, cfg.vocab_size);
  ensure_out_dir(cfg);
  vocab.save(cfg.out_dir + "/vocab.txt");
  write_manifest(cfg, "vocab", {{"data_hash", file_hash_hex(cfg.data_path)},
                                {"vocab_entries", std::to_string(vocab.size())}});
  std::cout << "vocab entries: " << vocab.size() << "\n";
  return 0;
}

std::string fold_metrics_header() {
  return "fold\tn_train\tn_dev\tn_val\tdev_qwk\tval_qwk\tval_acc";
}

std::string fold_metrics_row(const std::string& tag, const FoldOutcome& o) {
  std::ostringstream os;
  os << tag << '\t' << o.n_train << '\t' << o.n_dev << '\t' << o.n_val << '\t'
     << fmt(o.dev_qwk) << '\t' << fmt(o.val_qwk) << '\t' << fmt(o.val_acc);
  return os.str();
}

int cmd_train(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  int item = pick_item(corpus, cfg.item);
  PreparedItem prepared = prepare_item(corpus, item, cfg.plan, stoplist_for(cfg));
  auto folds = kfold_splits(prepared.indices, cfg.seed);
  if (cfg.fold < 0 || cfg.fold >= 5) throw ValueError("--fold must be in [0,5)");
  ensure_out_dir(cfg);
  std::string ckpt = cfg.out_dir + "/checkpoint.aesf";
  FoldOutcome out = run_one_fold(corpus, cfg, cfg.plan, prepared, folds[cfg.fold], ckpt);

  std::ostringstream metrics;
  metrics << fold_metrics_header() << '\n'
          << fold_metrics_row(std::to_string(out.fold), out) << '\n';
  write_file(cfg.out_dir + "/metrics.tsv", metrics.str());
  std::ostringstream hist;
  hist << "epoch\ttrain_loss\tdev_qwk\n";
  for (const auto& h : out.history) {
    hist << h.epoch << '\t' << fmt(h.train_loss) << '\t' << fmt(h.dev_qwk) << '\n';
  }
  write_file(cfg.out_dir + "/history.tsv", hist.str());
  write_file(cfg.out_dir + "/predictions.tsv", predictions_tsv(out.val_predictions, item));
  write_manifest(cfg, "train", {{"data_hash", file_hash_hex(cfg.data_path)},
                                {"checkpoint_hash", file_hash_hex(ckpt)}});
  std::cout << fold_metrics_header() << '\n'
            << fold_metrics_row(std::to_string(out.fold), out) << '\n';
  return 0;
}

int cmd_kfold(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  int item = pick_item(corpus, cfg.item);
  PreparedItem prepared = prepare_item(corpus, item, cfg.plan, stoplist_for(cfg));
  auto folds = kfold_splits(prepared.indices, cfg.seed);
  ensure_out_dir(cfg);

  std::vector<FoldOutcome> outcomes(5);
  std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
  for (std::size_t start = 0; start < folds.size(); start += jobs) {
    std::vector<std::future<FoldOutcome>> wave;
    for (std::size_t f = start; f < std::min<std::size_t>(folds.size(), start + jobs); ++f) {
      wave.push_back(std::async(std::launch::async, [&, f] {
        std::string ckpt = cfg.out_dir + "/checkpoint_fold" + std::to_string(f) + ".aesf";
        return run_one_fold(corpus, cfg, cfg.plan, prepared, folds[f], ckpt);
      }));
    }
    for (std::size_t i = 0; i < wave.size(); ++i) outcomes[start + i] = wave[i].get();
  }

  std::ostringstream metrics;
  metrics << fold_metrics_header() << '\n';
  FoldOutcome avg;
  std::vector<std::pair<long, int>> all_preds;
  std::vector<int> pooled_pred, pooled_truth;
  for (const auto& o : outcomes) {
    metrics << fold_metrics_row(std::to_string(o.fold), o) << '\n';
    avg.n_train += o.n_train;
    avg.n_dev += o.n_dev;
    avg.n_val += o.n_val;
    avg.dev_qwk += o.dev_qwk / 5.0;
    avg.val_qwk += o.val_qwk / 5.0;
    avg.val_acc += o.val_acc / 5.0;
    all_preds.insert(all_preds.end(), o.val_predictions.begin(), o.val_predictions.end());
  }
  // Pooled QWK over the five disjoint validation folds (they tile the item).
  std::map<long, int> pred_by_id;
  for (const auto& [id, score] : all_preds) pred_by_id[id] = score;
  for (std::size_t idx : prepared.indices) {
    const auto& e = corpus.essays[idx];
    pooled_truth.push_back(e.resolved - prepared.spec.min_score);
    pooled_pred.push_back(pred_by_id.at(e.essay_id) - prepared.spec.min_score);
  }
  FoldOutcome pooled;
  pooled.n_val = pooled_pred.size();
  pooled.val_qwk = qwk_or_nan(pooled_pred, pooled_truth, prepared.spec.label_count());
  pooled.val_acc = exact_agreement(
      confusion(pooled_pred, pooled_truth, prepared.spec.label_count()));
  pooled.dev_qwk = avg.dev_qwk;
  metrics << fold_metrics_row("avg", avg) << '\n';
  metrics << fold_metrics_row("pooled", pooled) << '\n';
  write_file(cfg.out_dir + "/metrics.tsv", metrics.str());
  write_file(cfg.out_dir + "/predictions.tsv", predictions_tsv(all_preds, item));
  write_manifest(cfg, "kfold", {{"data_hash", file_hash_hex(cfg.data_path)}});
  std::cout << metrics.str();
  return 0;
}

struct GridVariant {
  std::string label;
  std::function<void(TrainPlan&)> apply;
};

std::vector<GridVariant> table1_variants() {
  auto v1 = [](TrainPlan& p) { p.unfreeze = UnfreezeMode::gradual; };
  auto v2 = [](TrainPlan& p) { p.lr_variant = LrVariant::discriminative; p.xi = 0.95; };
  auto v3 = [](TrainPlan& p) { p.dropout_override = 0.2; };
  auto v4 = [](TrainPlan& p) { p.remove_stopwords = true; };
  auto v5 = [](TrainPlan& p) { p.layer_limit = 3; };
  return {
      {"(1) gradual unfreezing", v1},
      {"(2) discriminative finetuning (xi=0.95)", v2},
      {"1+2", [=](TrainPlan& p) { v1(p); v2(p); }},
      {"(3) dropout (0.2)", v3},
      {"1+3", [=](TrainPlan& p) { v1(p); v3(p); }},
      {"2+3", [=](TrainPlan& p) { v2(p); v3(p); }},
      {"1+2+3", [=](TrainPlan& p) { v1(p); v2(p); v3(p); }},
      {"(4) remove stop-words", v4},
      {"(5) 3 layers", v5},
      {"4+5", [=](TrainPlan& p) { v4(p); v5(p); }},
  };
}

int cmd_grid(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  std::vector<int> items;
  if (cfg.item >= 0) {
    items.push_back(pick_item(corpus, cfg.item));
  } else {
    items = corpus.item_ids();
  }
  ensure_out_dir(cfg);
  auto variants = table1_variants();
  auto stoplist = stoplist_for(cfg);

  // Layer limits above the stack size mean "no truncation" for desk configs.
  auto clamp_plan = [&](TrainPlan& p) {
    std::size_t layers = cfg.model == "lstm" ? cfg.lstm_layers : cfg.enc.layers;
    p.layer_limit = std::min(p.layer_limit, layers);
  };

  std::map<std::string, std::vector<double>> deltas;  // label -> per-item delta %
  std::vector<double> base_qwks;
  for (int item : items) {
    TrainPlan base_plan = cfg.plan;
    clamp_plan(base_plan);
    PreparedItem prepared = prepare_item(corpus, item, base_plan, stoplist);
    auto folds = kfold_splits(prepared.indices, cfg.seed);
    const FoldSplit& fold = folds.at(static_cast<std::size_t>(cfg.fold));
    FoldOutcome base = run_one_fold(corpus, cfg, base_plan, prepared, fold, "");
    base_qwks.push_back(base.dev_qwk);
    for (const auto& variant : variants) {
      TrainPlan plan = cfg.plan;
      variant.apply(plan);
      clamp_plan(plan);
      PreparedItem vprep = prepare_item(corpus, item, plan, stoplist);
      FoldOutcome vout = run_one_fold(corpus, cfg, plan, vprep, fold, "");
      double delta = 100.0 * (vout.dev_qwk - base.dev_qwk) / base.dev_qwk;
      deltas[variant.label].push_back(delta);
    }
  }

  std::ostringstream os;
  os << "variant";
  for (int item : items) os << "\titem" << item;
  os << "\tmean\n";
  os << "base";
  double base_mean = 0.0;
  for (double q : base_qwks) {
    os << '\t' << fmt(0.0, 2);
    base_mean += q / static_cast<double>(base_qwks.size());
  }
  os << '\t' << fmt(0.0, 2) << '\n';
  for (const auto& variant : variants) {
    const auto& row = deltas[variant.label];
    os << variant.label;
    double mean = 0.0;
    for (double d : row) {
      os << '\t' << fmt(d, 2);
      mean += d / static_cast<double>(row.size());
    }
    os << '\t' << fmt(mean, 2) << '\n';
  }
  write_file(cfg.out_dir + "/grid.tsv", os.str());
  write_manifest(cfg, "grid",
                 {{"data_hash", file_hash_hex(cfg.data_path)},
                  {"base_dev_qwk_mean", fmt(base_mean)}});
  std::cout << os.str();
  return 0;
}

int cmd_score(RunConfig& cfg) {
  if (cfg.checkpoints.size() != 1) {
    throw ValueError("score needs exactly one --checkpoint");
  }
  auto predictor = load_predictor(cfg.checkpoints[0]);
  if (cfg.data_path.empty()) throw ValueError("--data is required");
  Corpus corpus = load_tsv_unscored(cfg.data_path);  // new essays carry no ratings
  ensure_out_dir(cfg);
  std::vector<std::pair<long, int>> preds;
  for (const auto& e : corpus.essays) {
    if (e.item != predictor->item()) continue;
    preds.emplace_back(e.essay_id, predictor->predict_score(e.text));
  }
  if (preds.empty()) {
    throw ValueError("no essays with item " + std::to_string(predictor->item()) +
                     " in " + cfg.data_path);
  }
  write_file(cfg.out_dir + "/predictions.tsv", predictions_tsv(preds, predictor->item()));
  write_manifest(cfg, "score", {{"data_hash", file_hash_hex(cfg.data_path)},
                                {"checkpoint_hash", file_hash_hex(cfg.checkpoints[0])}});
  std::cout << "scored " << preds.size() << " essays\n";
  return 0;
}

int cmd_ensemble(RunConfig& cfg) {
  if (cfg.checkpoints.size() < 2) throw ValueError("ensemble needs at least 2 checkpoints");
  if (cfg.best_member >= cfg.checkpoints.size()) {
    throw ValueError("best-member index out of range");
  }
  std::vector<std::unique_ptr<EssayPredictor>> members;
  for (const auto& path : cfg.checkpoints) members.push_back(load_predictor(path));
  int item = members[0]->item();
  const ItemSpec spec = members[0]->spec();
  for (const auto& m : members) {
    if (m->item() != item || m->spec().min_score != spec.min_score ||
        m->spec().max_score != spec.max_score) {
      throw ValueError("ensemble members disagree on item or label space");
    }
  }
  EnsembleMode mode = ensemble_mode_from_string(cfg.ensemble_mode);
  Corpus corpus = load_corpus(cfg);
  PreparedItem prepared = prepare_item(corpus, item, TrainPlan{}, builtin_stopwords());
  auto folds = kfold_splits(prepared.indices, cfg.seed);
  const FoldSplit& fold = folds.at(static_cast<std::size_t>(cfg.fold));
  ensure_out_dir(cfg);

  std::size_t k = spec.label_count();
  std::vector<int> truth, pred;
  std::vector<std::vector<int>> member_preds(members.size());
  std::vector<std::pair<long, int>> out_preds;
  for (std::size_t idx : fold.validation) {
    const auto& e = corpus.essays[idx];
    std::vector<std::size_t> labels;
    for (std::size_t m = 0; m < members.size(); ++m) {
      std::size_t l = members[m]->predict_label(e.text);
      labels.push_back(l);
      member_preds[m].push_back(static_cast<int>(l));
    }
    std::size_t combined = ensemble_combine(labels, mode, cfg.best_member, k);
    truth.push_back(e.resolved - spec.min_score);
    pred.push_back(static_cast<int>(combined));
    out_preds.emplace_back(e.essay_id, label_to_score(combined, spec));
  }
  std::ostringstream os;
  os << "member\tkind\tval_qwk\tval_acc\n";
  for (std::size_t m = 0; m < members.size(); ++m) {
    double q = qwk_or_nan(member_preds[m], truth, k);
    double acc = exact_agreement(confusion(member_preds[m], truth, k));
    os << m << '\t' << members[m]->kind() << '\t' << fmt(q) << '\t' << fmt(acc) << '\n';
  }
  double q = qwk_or_nan(pred, truth, k);
  double acc = exact_agreement(confusion(pred, truth, k));
  os << "ensemble\t" << (mode == EnsembleMode::mean_round ? "mean-round" : "majority")
     << '\t' << fmt(q) << '\t' << fmt(acc) << '\n';
  write_file(cfg.out_dir + "/metrics.tsv", os.str());
  write_file(cfg.out_dir + "/predictions.tsv", predictions_tsv(out_preds, item));
  std::map<std::string, std::string> extra{{"data_hash", file_hash_hex(cfg.data_path)}};
  for (std::size_t m = 0; m < cfg.checkpoints.size(); ++m) {
    extra["member" + std::to_string(m) + "_hash"] = file_hash_hex(cfg.checkpoints[m]);
  }
  write_manifest(cfg, "ensemble", extra);
  std::cout << os.str();
  return 0;
}

std::map<long, int> load_predictions_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open predictions file: " + path);
  std::string header;
  std::getline(in, header);
  std::map<long, int> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("predictions line " + std::to_string(line_no) +
                       ": expected essay_id, item, predicted_score");
    }
    out[std::stol(fields[0])] = std::stoi(fields[2]);
  }
  return out;
}

int cmd_evaluate(RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  if (cfg.pred_path.empty()) throw ValueError("--pred is required for evaluate");
  auto preds = load_predictions_tsv(cfg.pred_path);
  bool literal = cfg.qwk_variant == "paper-literal";
  if (!literal && cfg.qwk_variant != "standard") {
    throw ValueError("qwk-variant must be standard or paper-literal");
  }
  ensure_out_dir(cfg);
  std::ostringstream os;
  if (literal) {
    os << "item\tn\tqwk_engine_paper_literal\tqwk_human_paper_literal\tacc_engine\tacc_human\n";
  } else {
    os << engine_human_tsv_header() << '\n';
  }
  for (const auto& spec : corpus.items) {
    std::vector<int> initial, reliability, predicted;
    for (const auto& e : corpus.essays) {
      if (e.item != spec.item) continue;
      auto it = preds.find(e.essay_id);
      if (it == preds.end()) continue;  // unscored essays are skipped
      initial.push_back(e.rater1 - spec.min_score);
      reliability.push_back(e.rater2 - spec.min_score);
      predicted.push_back(it->second - spec.min_score);
    }
    if (initial.empty()) continue;
    std::size_t k = spec.label_count();
    if (literal) {
      ConfusionMatrix engine = confusion(predicted, initial, k);
      ConfusionMatrix human = confusion(reliability, initial, k);
      os << spec.item << '\t' << initial.size() << '\t' << fmt(qwk_paper_literal(engine))
         << '\t' << fmt(qwk_paper_literal(human)) << '\t' << fmt(exact_agreement(engine))
         << '\t' << fmt(exact_agreement(human)) << '\n';
    } else {
      EngineHumanReport r = compare_engine_to_human(initial, reliability, predicted, k);
      os << engine_human_tsv_row(spec.item, r) << '\n';
    }
  }
  write_file(cfg.out_dir + "/metrics.tsv", os.str());
  write_manifest(cfg, "evaluate", {{"data_hash", file_hash_hex(cfg.data_path)},
                                   {"pred_hash", file_hash_hex(cfg.pred_path)}});
  std::cout << os.str();
  return 0;
}

// Compact oracle/property sweep, exit 0 only if everything holds.
int cmd_selftest(RunConfig& cfg) {
  (void)cfg;
  int failures = 0;
  auto check = [&failures](bool ok, const std::string& name) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  {  // Kappa statistics vs an independent recomputation from score sequences.
    Rng rng = make_rng(99);
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
      std::size_t k = 2 + rand_index(rng, 5);
      std::size_t n = 20 + rand_index(rng, 60);
      std::vector<int> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<int>(rand_index(rng, k));
        b[i] = static_cast<int>(rand_index(rng, k));
      }
      double wo = 0.0;
      std::vector<double> ca(k, 0.0), cb(k, 0.0);
      double denom = static_cast<double>((k - 1) * (k - 1));
      for (std::size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        wo += d * d / denom / static_cast<double>(n);
        ca[static_cast<std::size_t>(a[i])] += 1.0 / static_cast<double>(n);
        cb[static_cast<std::size_t>(b[i])] += 1.0 / static_cast<double>(n);
      }
      double we = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          double d = static_cast<double>(i) - static_cast<double>(j);
          we += d * d / denom * ca[i] * cb[j];
        }
      if (we <= 0.0) continue;
      double expected = 1.0 - wo / we;
      double got = qwk(confusion(a, b, k));
      ok = std::abs(expected - got) < 1e-12;
    }
    check(ok, "qwk matches sequence-level recomputation");
  }
  {  // Reverse-mode gradients vs central differences on a 2-layer net.
    ParamStore store;
    Rng rng = make_rng(5);
    store.add("w1", rand_normal_tensor(rng, Shape{4, 3}, 0.0, 0.5));
    store.add("b1", rand_normal_tensor(rng, Shape{4}, 0.0, 0.5));
    store.add("w2", rand_normal_tensor(rng, Shape{2, 4}, 0.0, 0.5));
    store.add("b2", rand_normal_tensor(rng, Shape{2}, 0.0, 0.5));
    Tensor x = rand_normal_tensor(rng, Shape{3, 3}, 0.0, 1.0);
    auto objective = [&x](Graph& g, Bindings& b) {
      Var h = dense(g.constant(x), b("w1"), b("b1"), Activation::tanh);
      Var out = dense(h, b("w2"), b("b2"), Activation::gelu);
      return mean_all(softmax_rows(out));
    };
    auto res = grad_check(objective, store, 1e-5);
    check(res.max_rel_err < 1e-6, "dense/tanh/gelu/softmax gradients (rel err " +
                                      std::to_string(res.max_rel_err) + ")");
  }
  {  // rel_shift against the exhaustive gather oracle.
    Rng rng = make_rng(17);
    bool ok = true;
    for (std::size_t q = 1; q <= 4 && ok; ++q) {
      for (std::size_t r = q; r <= 6 && ok; ++r) {
        Tensor in = rand_normal_tensor(rng, Shape{q, r}, 0.0, 1.0);
        Tensor shifted = rel_shift_tensor(in);
        for (std::size_t i = 0; i < q && ok; ++i) {
          for (std::size_t j = 0; j < r && ok; ++j) {
            std::size_t f = i * r + j + q;
            double expect = (f % (r + 1) == 0) ? 0.0 : in[(f / (r + 1)) * r + f % (r + 1) - 1];
            ok = shifted.at(i, j) == expect;
          }
        }
      }
    }
    check(ok, "rel_shift equals index-gather oracle");
  }
  {  // Sliding-window offsets.
    bool ok = sliding_windows(510, 510) ==
                  std::vector<std::pair<std::size_t, std::size_t>>{{0, 510}} &&
              sliding_windows(600, 510) ==
                  std::vector<std::pair<std::size_t, std::size_t>>{{0, 510}, {90, 600}} &&
              sliding_windows(1200, 510) ==
                  std::vector<std::pair<std::size_t, std::size_t>>{
                      {0, 510}, {510, 1020}, {690, 1200}};
    check(ok, "sliding windows follow the back-shift rule");
  }
  {  // Softmax rows sum to one; masked keys get no weight.
    Rng rng = make_rng(3);
    Tensor logits = rand_normal_tensor(rng, Shape{8, 8}, 0.0, 3.0);
    for (std::size_t i = 0; i < 8; ++i) logits.at(i, 7) += kMaskBlocked;
    Tensor probs = softmax_rows_tensor(logits);
    bool ok = true;
    for (std::size_t i = 0; i < 8; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 8; ++j) sum += probs.at(i, j);
      ok = ok && std::abs(sum - 1.0) < 1e-12 && probs.at(i, 7) < 1e-12;
    }
    check(ok, "softmax rows are probability vectors; blocked keys vanish");
  }
  std::cout << (failures ? "selftest: FAILED\n" : "selftest: all checks passed\n");
  return failures ? 1 : 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  RunConfig cfg;
  if (const char* env_seed = std::getenv("AESF_SEED")) {
    try {
      cfg.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      std::cerr << "error: AESF_SEED is not an integer\n";
      return 2;
    }
  }

  // A config file provides defaults; explicit flags override it.
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      try {
        load_config_file(cfg, args[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"aesc: desk-scale automated essay scoring engine"};
  app.require_subcommand(0, 1);
  std::string config_path;
  bool print_config = false;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  std::vector<CLI::App*> subs;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path);
    sub->add_flag("--print-config", print_config);
    sub->add_option("--data", cfg.data_path, "input essays TSV");
    sub->add_option("--spec", cfg.spec_path, "item score-range sidecar TSV");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "run seed (fallback: AESF_SEED)");
    sub->add_option("--item", cfg.item, "essay-set id (default: first in data)");
    sub->add_option("--fold", cfg.fold, "fold index in [0,5)");
    sub->add_option("--jobs", cfg.jobs, "concurrent fold workers");
    subs.push_back(sub);
    return sub;
  };
  auto add_model_opts = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "bow | lstm | bert | xlnet");
    sub->add_option("--vocab-size", cfg.vocab_size, "subword vocabulary target size");
    sub->add_option("--tfidf-cutoff", cfg.tfidf_cutoff, "BOW document-frequency cutoff");
    sub->add_option("--embed-dim", cfg.enc.embed_dim, "encoder embedding dim R");
    sub->add_option("--heads", cfg.enc.heads, "attention heads L");
    sub->add_option("--layers", cfg.enc.layers, "encoder layers");
    sub->add_option("--ffn-dim", cfg.enc.ffn_dim, "feed-forward inner dim R'");
    sub->add_option("--max-len", cfg.enc.max_len, "maximum sequence length");
    sub->add_option("--mem-len", cfg.enc.mem_len, "XLNet memory length");
    sub->add_option("--dropout", cfg.enc.dropout, "dropout probability");
    sub->add_option("--pos-denominator", cfg.enc.pos_denominator,
                    "relative positional frequency denominator (0 = R)");
    sub->add_option("--lstm-embed", cfg.lstm_embed);
    sub->add_option("--lstm-hidden", cfg.lstm_hidden);
    sub->add_option("--lstm-layers", cfg.lstm_layers);
    sub->add_flag("--lstm-mean-pool", cfg.lstm_mean_pool);
    sub->add_option("--lstm-window-cap", cfg.lstm_window_cap);
    sub->add_option("--epochs", cfg.plan.epochs);
    sub->add_option("--lr", cfg.plan.base_lr);
    sub->add_option("--lr-variant", cfg.lr_variant, "fixed | discriminative");
    sub->add_option("--xi", cfg.plan.xi, "discriminative decay factor");
    sub->add_option("--unfreeze", cfg.unfreeze, "off | gradual");
    sub->add_option("--dropout-override", cfg.plan.dropout_override);
    sub->add_option("--layer-limit", cfg.plan.layer_limit, "use only the first N layers");
    sub->add_flag("--remove-stopwords", cfg.plan.remove_stopwords);
    sub->add_option("--stopword-file", cfg.stopword_file);
    sub->add_option("--batch-size", cfg.plan.batch_size);
    sub->add_option("--window", cfg.plan.window, "sliding-window token count");
    sub->add_flag("--prob-average", cfg.plan.prob_average,
                  "average window probabilities instead of labels");
    sub->add_flag("--warmup", cfg.plan.warmup);
    sub->add_option("--warmup-steps", cfg.plan.warmup_steps);
    return sub;
  };

  auto* c_ingest = add_common(app.add_subcommand("ingest", "validate and summarize a TSV"));
  auto* c_vocab = add_common(app.add_subcommand("vocab", "build a subword vocabulary"));
  c_vocab->add_option("--vocab-size", cfg.vocab_size);
  auto* c_train = add_model_opts(add_common(
      app.add_subcommand("train", "train one model on one fold")));
  auto* c_kfold = add_model_opts(add_common(
      app.add_subcommand("kfold", "5-fold cross-validation loop")));
  auto* c_grid = add_model_opts(add_common(
      app.add_subcommand("grid", "fine-tuning experiment grid")));
  auto* c_ensemble = add_common(app.add_subcommand("ensemble", "combine trained models"));
  c_ensemble->add_option("--checkpoints", cfg.checkpoints, "member checkpoint files")
      ->expected(-1);
  c_ensemble->add_option("--mode", cfg.ensemble_mode, "mean | majority");
  c_ensemble->add_option("--best-member", cfg.best_member, "tie-breaking member index");
  auto* c_score = add_common(app.add_subcommand("score", "predict scores for new essays"));
  c_score->add_option("--checkpoint", cfg.checkpoints, "trained model checkpoint");
  auto* c_evaluate = add_common(
      app.add_subcommand("evaluate", "engine-vs-human agreement report"));
  c_evaluate->add_option("--pred", cfg.pred_path, "predictions TSV");
  c_evaluate->add_option("--qwk-variant", cfg.qwk_variant, "standard | paper-literal");
  auto* c_selftest = app.add_subcommand("selftest", "run the oracle/property suites");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    finalize_plan(cfg);
    if (print_config) {
      std::cout << effective_config(cfg);
      return 0;
    }
    if (c_ingest->parsed()) return cmd_ingest(cfg);
    if (c_vocab->parsed()) return cmd_vocab(cfg);
    if (c_train->parsed()) return cmd_train(cfg);
    if (c_kfold->parsed()) return cmd_kfold(cfg);
    if (c_grid->parsed()) return cmd_grid(cfg);
    if (c_ensemble->parsed()) return cmd_ensemble(cfg);
    if (c_score->parsed()) return cmd_score(cfg);
    if (c_evaluate->parsed()) return cmd_evaluate(cfg);
    if (c_selftest->parsed()) return cmd_selftest(cfg);
    std::cout << app.help();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace aes
