#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aes/param_store.hpp"

namespace aes {

struct LstmConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t hidden = 16;
  std::size_t classes = 2;
  std::size_t layers = 1;      // "Multiple LSTM can be cascaded"
  bool mean_pool = false;      // mean-over-time instead of final hidden state
};

// CEC-gated LSTM over learned word embeddings. The cell's recurrent weight is
// the identity with a linear transfer and is excluded from the trainable set;
// the forget-gate bias starts at all ones.
class LstmModel {
 public:
  explicit LstmModel(LstmConfig cfg) : cfg_(cfg) {}
  const LstmConfig& config() const { return cfg_; }

  void init_params(ParamStore& store, Rng& rng) const;

  struct State {
    Var cell;
    Var hidden;
  };
  State zero_state(Ctx& ctx) const;

  // One gated update: i, f, o logistic gates on (x_t, previous hidden); the
  // cell carries through the identity CEC and the Hadamard-gated candidate.
  State cell_step(Ctx& ctx, std::size_t layer, const Var& x_t, const State& prev) const;

  // Embed the ids, run the cells over time from zero state, classify from the
  // final (or mean-pooled) gated output.
  Var logits(Ctx& ctx, const std::vector<std::size_t>& ids) const;

  std::size_t n_layers() const { return cfg_.layers; }

 private:
  LstmConfig cfg_;
};

}  // namespace aes
