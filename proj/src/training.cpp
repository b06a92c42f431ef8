#include "aes/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aes/metrics.hpp"
#include "aes/ops.hpp"

namespace aes {

void TrainPlan::validate() const {
  if (base_lr <= 0.0) throw ValueError("train plan: base_lr must be positive");
  if (xi <= 0.0 || xi > 1.0) throw ValueError("train plan: xi must be in (0, 1]");
  if (epochs == 0) throw ValueError("train plan: epochs must be >= 1");
  if (batch_size == 0) throw ValueError("train plan: batch_size must be >= 1");
}

std::vector<double> discriminative_lrs(double base_lr, double xi, std::size_t layer_count) {
  // The top layer gets base_lr; each layer below follows the recurrence
  // lr[m] = xi * lr[m+1], so consecutive ratios are exactly xi.
  std::vector<double> lrs(layer_count, base_lr);
  for (std::size_t i = layer_count; i-- > 1;) {
    lrs[i - 1] = xi * lrs[i];
  }
  return lrs;
}

TrainableSet gradual_unfreeze(std::size_t epoch, std::size_t n_layers) {
  if (epoch < 1) throw ValueError("gradual_unfreeze: epochs are 1-based");
  TrainableSet s;
  s.head = true;
  s.top_layers = std::min(epoch - 1, n_layers);
  s.embeddings = epoch >= n_layers + 2;
  return s;
}

GroupInfo param_group(const std::string& name) {
  GroupInfo info;
  if (name.rfind("embed", 0) == 0) {
    info.group = ParamGroup::embedding;
    return info;
  }
  for (const char* prefix : {"layer.", "lstm."}) {
    std::string p(prefix);
    if (name.rfind(p, 0) == 0) {
      std::size_t dot = name.find('.', p.size());
      info.group = ParamGroup::layer;
      info.layer = static_cast<std::size_t>(std::stoul(name.substr(p.size(), dot - p.size())));
      return info;
    }
  }
  for (const char* prefix : {"mlm.", "nsp.", "qstream.", "permlm."}) {
    if (name.rfind(prefix, 0) == 0) {
      info.group = ParamGroup::pretrain;
      return info;
    }
  }
  info.group = ParamGroup::head;  // pooler, cls, head.*
  return info;
}

void apply_trainable(ParamStore& store, const TrainableSet& set, std::size_t n_layers) {
  for (const auto& name : store.names()) {
    if (store.locked(name)) continue;
    GroupInfo info = param_group(name);
    bool t = false;
    switch (info.group) {
      case ParamGroup::head: t = set.head; break;
      case ParamGroup::layer: t = info.layer + set.top_layers >= n_layers; break;
      case ParamGroup::embedding: t = set.embeddings; break;
      case ParamGroup::pretrain: t = false; break;  // replaced by the class head
    }
    store.set_trainable(name, t);
  }
}

std::map<std::string, double> per_param_lrs(const ParamStore& store, double base_lr,
                                            double xi, std::size_t n_layers) {
  auto lrs = discriminative_lrs(base_lr, xi, n_layers);
  std::map<std::string, double> out;
  for (const auto& name : store.names()) {
    GroupInfo info = param_group(name);
    switch (info.group) {
      case ParamGroup::head: out[name] = base_lr; break;
      case ParamGroup::pretrain: out[name] = base_lr; break;
      case ParamGroup::layer: out[name] = lrs.at(std::min(info.layer, n_layers - 1)); break;
      case ParamGroup::embedding: out[name] = lrs.front(); break;  // bottom layer's lr
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> sliding_windows(std::size_t token_count,
                                                                 std::size_t window) {
  if (token_count < 1 || window < 1) {
    throw ValueError("sliding_windows: token_count and window must be >= 1");
  }
  if (token_count <= window) return {{0, token_count}};
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t full = token_count / window;  // complete stride-sized windows
  for (std::size_t i = 0; i < full; ++i) out.emplace_back(i * window, (i + 1) * window);
  if (full * window == token_count) return out;
  // The last window is back-shifted to full length so it overlaps its
  // predecessor instead of carrying padding.
  out.emplace_back(token_count - window, token_count);
  return out;
}

std::size_t combine_window_labels(const std::vector<std::size_t>& labels, std::size_t k) {
  if (labels.empty()) throw ValueError("combine_window_labels: no labels");
  double mean = 0.0;
  for (std::size_t v : labels) mean += static_cast<double>(v);
  mean /= static_cast<double>(labels.size());
  long rounded = std::llround(mean);  // half away from zero
  if (rounded < 0) rounded = 0;
  if (rounded >= static_cast<long>(k)) rounded = static_cast<long>(k) - 1;
  return static_cast<std::size_t>(rounded);
}

TransformerScorer::TransformerScorer(EncoderConfig cfg, Variant variant,
                                     std::size_t classes, Rng& rng)
    : encoder_(cfg, variant), classes_(classes) {
  encoder_.init_params(store_, rng);
  add_classification_head(store_, cfg.embed_dim, classes, rng);
}

Var TransformerScorer::class_logits(Ctx& ctx, const EncodedSeq& seq,
                                    std::size_t layer_limit) {
  EncoderOut out = encoder_.encode(ctx, seq, nullptr, layer_limit);
  return classification_head(ctx, out.pooled);
}

LstmScorer::LstmScorer(LstmConfig cfg, std::size_t window_cap, Rng& rng)
    : model_(cfg), window_cap_(window_cap) {
  model_.init_params(store_, rng);
}

Var LstmScorer::class_logits(Ctx& ctx, const EncodedSeq& seq, std::size_t layer_limit) {
  (void)layer_limit;  // the LSTM stack has no truncation variant
  std::vector<std::size_t> real(seq.ids.begin(),
                                seq.ids.begin() + static_cast<long>(seq.true_length));
  return model_.logits(ctx, real);
}

Var classification_head(Ctx& ctx, const Var& pooled) {
  return dense(pooled, ctx.p("cls.w"), ctx.p("cls.b"), Activation::identity);
}

void add_classification_head(ParamStore& store, std::size_t in_dim, std::size_t k, Rng& rng) {
  if (k < 2) throw ValueError("classification head needs k >= 2 labels");
  store.add("cls.w", rand_normal_tensor(rng, Shape{k, in_dim}, 0.0,
                                        1.0 / std::sqrt(static_cast<double>(in_dim))));
  store.add("cls.b", Tensor(Shape{k}));
}

std::vector<double> predict_window_probs(Scorer& scorer, const EncodedSeq& seq,
                                         std::size_t layer_limit) {
  Graph g;
  Bindings b(g, scorer.store());
  Rng rng = make_rng(0);  // eval mode: never consulted
  Ctx ctx{g, b, RunMode::eval, &rng, 0.0};
  Var logits = scorer.class_logits(ctx, seq, layer_limit);
  Tensor probs = softmax_rows_tensor(logits.value());
  return std::vector<double>(probs.raw().begin(), probs.raw().end());
}

std::size_t predict_window(Scorer& scorer, const EncodedSeq& seq, std::size_t layer_limit) {
  auto probs = predict_window_probs(scorer, seq, layer_limit);
  return static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::size_t predict_essay(Scorer& scorer, const std::string& text, const Vocab& vocab,
                          const TrainPlan& plan) {
  std::size_t window = plan.window ? plan.window : scorer.max_len() - 2;
  auto body = piece_ids(text, vocab);
  auto spans = sliding_windows(std::max<std::size_t>(1, body.size()), window);
  std::size_t k = scorer.classes();
  if (plan.prob_average) {
    std::vector<double> mean_probs(k, 0.0);
    for (auto [lo, hi] : spans) {
      std::vector<std::size_t> ids(body.begin() + lo, body.begin() + std::min(hi, body.size()));
      EncodedSeq seq = wrap_ids(ids, vocab, window + 2, scorer.placement());
      auto probs = predict_window_probs(scorer, seq, plan.layer_limit);
      for (std::size_t c = 0; c < k; ++c) mean_probs[c] += probs[c];
    }
    return static_cast<std::size_t>(
        std::max_element(mean_probs.begin(), mean_probs.end()) - mean_probs.begin());
  }
  std::vector<std::size_t> labels;
  for (auto [lo, hi] : spans) {
    std::vector<std::size_t> ids(body.begin() + lo, body.begin() + std::min(hi, body.size()));
    EncodedSeq seq = wrap_ids(ids, vocab, window + 2, scorer.placement());
    labels.push_back(predict_window(scorer, seq, plan.layer_limit));
  }
  return combine_window_labels(labels, k);
}

namespace {

struct WindowSample {
  EncodedSeq seq;
  std::size_t label;
};

std::vector<WindowSample> expand_windows(const std::vector<LabeledText>& data,
                                         const Vocab& vocab, std::size_t window,
                                         ClsPlacement placement) {
  std::vector<WindowSample> out;
  for (const auto& [text, label] : data) {
    auto body = piece_ids(text, vocab);
    for (auto [lo, hi] : sliding_windows(std::max<std::size_t>(1, body.size()), window)) {
      std::vector<std::size_t> ids(body.begin() + lo,
                                   body.begin() + std::min(hi, body.size()));
      out.push_back({wrap_ids(ids, vocab, window + 2, placement), label});
    }
  }
  return out;
}

double dev_qwk_or_nan(Scorer& scorer, const Vocab& vocab,
                      const std::vector<LabeledText>& dev, const TrainPlan& plan) {
  if (dev.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<int> truth, pred;
  for (const auto& [text, label] : dev) {
    truth.push_back(static_cast<int>(label));
    pred.push_back(static_cast<int>(predict_essay(scorer, text, vocab, plan)));
  }
  try {
    return qwk(confusion(pred, truth, scorer.classes()));
  } catch (const UndefinedKappaError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double train_accuracy(Scorer& scorer, const std::vector<WindowSample>& samples,
                      std::size_t layer_limit) {
  std::size_t hit = 0;
  for (const auto& s : samples) {
    if (predict_window(scorer, s.seq, layer_limit) == s.label) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

}  // namespace

FinetuneResult finetune(Scorer& scorer, const Vocab& vocab,
                        const std::vector<LabeledText>& train,
                        const std::vector<LabeledText>& dev, const TrainPlan& plan) {
  plan.validate();
  if (train.empty()) throw ValueError("finetune: empty training set");
  if (plan.layer_limit > scorer.n_layers() && scorer.kind() != "lstm") {
    throw ValueError("finetune: layer_limit exceeds layer count");
  }
  std::size_t window = plan.window ? plan.window : scorer.max_len() - 2;
  auto samples = expand_windows(train, vocab, window, scorer.placement());
  // Fine-tuning replaces the pretraining output layers with the class head.
  for (const auto& name : scorer.store().names()) {
    if (param_group(name).group == ParamGroup::pretrain) {
      scorer.store().set_trainable(name, false);
    }
  }
  double drop = plan.dropout_override >= 0.0 ? plan.dropout_override
                                             : scorer.configured_dropout();
  Rng rng = make_rng(plan.seed);
  std::map<std::string, double> lr_map;
  if (plan.lr_variant == LrVariant::discriminative) {
    lr_map = per_param_lrs(scorer.store(), plan.base_lr, plan.xi, scorer.n_layers());
  }
  std::size_t total_steps =
      plan.epochs * ((samples.size() + plan.batch_size - 1) / plan.batch_size);
  std::size_t warmup_steps = plan.warmup
                                 ? (plan.warmup_steps ? plan.warmup_steps
                                                      : std::max<std::size_t>(1, total_steps / 10))
                                 : 0;

  FinetuneResult result;
  result.best_dev_qwk = -std::numeric_limits<double>::infinity();
  std::map<std::string, Tensor> best_values;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    if (plan.unfreeze == UnfreezeMode::gradual) {
      apply_trainable(scorer.store(), gradual_unfreeze(epoch, scorer.n_layers()),
                      scorer.n_layers());
    }
    shuffle_vec(order, rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      std::size_t end = std::min(order.size(), start + plan.batch_size);
      Graph g;
      Bindings b(g, scorer.store());
      Ctx ctx{g, b, RunMode::train, &rng, drop};
      std::vector<Var> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        Var logits = scorer.class_logits(ctx, s.seq, plan.layer_limit);
        losses.push_back(cross_entropy_rows(logits, {s.label}));
      }
      Var loss = scale(add_scalars(losses), 1.0 / static_cast<double>(losses.size()));
      g.backward(loss);
      ++step;
      double lr_factor = warmup_steps
                             ? std::min(1.0, static_cast<double>(step) /
                                                 static_cast<double>(warmup_steps))
                             : 1.0;
      std::map<std::string, double> scaled = lr_map;
      for (auto& [k, v] : scaled) v *= lr_factor;
      adam_step(scorer.store(), b.grads(), plan.base_lr * lr_factor, scaled);
      epoch_loss += loss.value().scalar_value();
      ++batches;
    }
    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = epoch_loss / static_cast<double>(batches);
    stat.dev_qwk = dev_qwk_or_nan(scorer, vocab, dev, plan);
    result.history.push_back(stat);
    if (!std::isnan(stat.dev_qwk) && stat.dev_qwk > result.best_dev_qwk) {
      result.best_dev_qwk = stat.dev_qwk;
      result.best_epoch = epoch;
      best_values = scorer.store().snapshot_values();
    }
    if (plan.stop_train_acc > 0.0 &&
        train_accuracy(scorer, samples, plan.layer_limit) >= plan.stop_train_acc) {
      break;
    }
  }
  if (!best_values.empty()) {
    scorer.store().restore_values(best_values);
  } else {
    result.best_epoch = result.history.size();
    result.best_dev_qwk = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

EnsembleMode ensemble_mode_from_string(const std::string& s) {
  if (s == "mean" || s == "mean-round") return EnsembleMode::mean_round;
  if (s == "majority") return EnsembleMode::majority;
  throw ValueError("unknown ensemble mode: " + s);
}

std::size_t ensemble_combine(const std::vector<std::size_t>& member_labels,
                             EnsembleMode mode, std::size_t best_index, std::size_t k) {
  if (member_labels.empty()) throw ValueError("ensemble_combine: no members");
  if (best_index >= member_labels.size()) {
    throw ValueError("ensemble_combine: best member index out of range");
  }
  if (mode == EnsembleMode::mean_round) {
    return combine_window_labels(member_labels, k);
  }
  std::map<std::size_t, std::size_t> votes;
  for (std::size_t l : member_labels) votes[l] += 1;
  std::size_t best_count = 0;
  for (const auto& [label, count] : votes) {
    (void)label;
    best_count = std::max(best_count, count);
  }
  std::vector<std::size_t> modal;
  for (const auto& [label, count] : votes) {
    if (count == best_count) modal.push_back(label);
  }
  if (modal.size() == 1) return modal[0];
  return member_labels[best_index];  // the designated best model breaks ties
}

}  // namespace aes
