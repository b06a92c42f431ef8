#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/lstm.hpp"
#include "aes/param_store.hpp"
#include "aes/tokenizer.hpp"
#include "aes/transformer.hpp"

namespace aes {

enum class LrVariant { fixed, discriminative };
enum class UnfreezeMode { off, gradual };

struct TrainPlan {
  std::size_t epochs = 12;
  double base_lr = 1e-3;
  LrVariant lr_variant = LrVariant::fixed;
  double xi = 0.95;
  UnfreezeMode unfreeze = UnfreezeMode::off;
  double dropout_override = -1.0;  // < 0 keeps the model's configured rate
  std::size_t layer_limit = 0;     // 0 = all layers
  bool remove_stopwords = false;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  std::size_t window = 0;  // tokens per sliding window; 0 = model max_len - 2
  bool prob_average = false;  // average window probability vectors, not labels
  bool warmup = false;
  std::size_t warmup_steps = 0;  // 0 = auto when warmup is on
  double stop_train_acc = 0.0;   // > 0 stops once train accuracy reaches it

  void validate() const;
};

// --- schedules ---------------------------------------------------------------

// Per-layer learning rates, bottom → top. The topmost layer gets base_lr and
// each layer below it is scaled by xi.
std::vector<double> discriminative_lrs(double base_lr, double xi, std::size_t layer_count);

struct TrainableSet {
  bool head = true;
  std::size_t top_layers = 0;
  bool embeddings = false;
};

// Epoch 1 trains the classification head only; each later epoch unfreezes one
// more encoder layer from last to first, and the embeddings come last.
TrainableSet gradual_unfreeze(std::size_t epoch, std::size_t n_layers);

// pretrain covers the heads that fine-tuning replaces (MLM, NSP, the
// permutation-LM query vector and bias); schedules keep them frozen.
enum class ParamGroup { embedding, layer, head, pretrain };
struct GroupInfo {
  ParamGroup group = ParamGroup::head;
  std::size_t layer = 0;
};
GroupInfo param_group(const std::string& name);

void apply_trainable(ParamStore& store, const TrainableSet& set, std::size_t n_layers);

// name -> learning rate map realizing the discriminative schedule.
std::map<std::string, double> per_param_lrs(const ParamStore& store, double base_lr,
                                            double xi, std::size_t n_layers);

// --- sliding windows ---------------------------------------------------------

// Non-overlapping stride-sized windows; the final window is back-shifted to
// full length so it overlaps its predecessor instead of being padded.
std::vector<std::pair<std::size_t, std::size_t>> sliding_windows(std::size_t token_count,
                                                                 std::size_t window);

// round-half-away-from-zero of the window label mean, clamped to [0, k).
std::size_t combine_window_labels(const std::vector<std::size_t>& labels, std::size_t k);

// --- scorers -----------------------------------------------------------------

// One trainable essay-scoring model (transformer or LSTM) behind a uniform
// surface for fine-tuning, prediction and checkpointing.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string kind() const = 0;
  virtual Var class_logits(Ctx& ctx, const EncodedSeq& seq, std::size_t layer_limit) = 0;
  virtual std::size_t n_layers() const = 0;
  virtual std::size_t max_len() const = 0;
  virtual double configured_dropout() const = 0;
  virtual ClsPlacement placement() const = 0;
  virtual std::size_t classes() const = 0;
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

 protected:
  ParamStore store_;
};

class TransformerScorer : public Scorer {
 public:
  TransformerScorer(EncoderConfig cfg, Variant variant, std::size_t classes, Rng& rng);
  std::string kind() const override { return variant_to_string(encoder_.variant()); }
  Var class_logits(Ctx& ctx, const EncodedSeq& seq, std::size_t layer_limit) override;
  std::size_t n_layers() const override { return encoder_.n_layers(); }
  std::size_t max_len() const override { return encoder_.config().max_len; }
  double configured_dropout() const override { return encoder_.config().dropout; }
  ClsPlacement placement() const override { return encoder_.cls_placement(); }
  std::size_t classes() const override { return classes_; }
  const Encoder& encoder() const { return encoder_; }

 private:
  Encoder encoder_;
  std::size_t classes_;
};

class LstmScorer : public Scorer {
 public:
  LstmScorer(LstmConfig cfg, std::size_t window_cap, Rng& rng);
  std::string kind() const override { return "lstm"; }
  Var class_logits(Ctx& ctx, const EncodedSeq& seq, std::size_t layer_limit) override;
  std::size_t n_layers() const override { return model_.n_layers(); }
  std::size_t max_len() const override { return window_cap_; }
  double configured_dropout() const override { return 0.0; }
  ClsPlacement placement() const override { return ClsPlacement::bert; }
  std::size_t classes() const override { return model_.config().classes; }
  const LstmModel& model() const { return model_; }

 private:
  LstmModel model_;
  std::size_t window_cap_;
};

// dense R→k on the pooled representation; params "cls.w"/"cls.b".
Var classification_head(Ctx& ctx, const Var& pooled);
void add_classification_head(ParamStore& store, std::size_t in_dim, std::size_t k, Rng& rng);

// --- prediction ----------------------------------------------------------------

std::vector<double> predict_window_probs(Scorer& scorer, const EncodedSeq& seq,
                                         std::size_t layer_limit = 0);
std::size_t predict_window(Scorer& scorer, const EncodedSeq& seq,
                           std::size_t layer_limit = 0);

// Sliding-window prediction over the whole essay: per-window argmax labels
// averaged and rounded half away from zero (or averaged probability vectors
// behind the prob_average flag).
std::size_t predict_essay(Scorer& scorer, const std::string& text, const Vocab& vocab,
                          const TrainPlan& plan);

// --- fine-tuning ----------------------------------------------------------------

struct EpochStat {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_qwk = 0.0;  // NaN when undefined on the dev set
};

struct FinetuneResult {
  std::vector<EpochStat> history;
  double best_dev_qwk = 0.0;
  std::size_t best_epoch = 0;
};

using LabeledText = std::pair<std::string, std::size_t>;  // essay text, label

// Mini-batch Adam over shuffled training windows with the plan's schedules;
// evaluates dev QWK each epoch and leaves the store at the best-dev weights.
FinetuneResult finetune(Scorer& scorer, const Vocab& vocab,
                        const std::vector<LabeledText>& train,
                        const std::vector<LabeledText>& dev, const TrainPlan& plan);

// --- ensembles -------------------------------------------------------------------

enum class EnsembleMode { mean_round, majority };
EnsembleMode ensemble_mode_from_string(const std::string& s);

// mean_round: round-half-away-from-zero of the member mean. majority: modal
// label; on a tie the designated best member decides.
std::size_t ensemble_combine(const std::vector<std::size_t>& member_labels,
                             EnsembleMode mode, std::size_t best_index, std::size_t k);

}  // namespace aes
