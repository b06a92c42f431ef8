#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aes/param_store.hpp"
#include "aes/tokenizer.hpp"

namespace aes {

struct EncoderConfig {
  std::size_t embed_dim = 32;   // R
  std::size_t heads = 4;        // L
  std::size_t layers = 2;
  std::size_t ffn_dim = 64;     // R'
  std::size_t vocab_size = 2000;
  std::size_t max_len = 64;
  std::size_t mem_len = 16;
  double dropout = 0.1;
  double pos_denominator = 0.0;  // 0 -> embed_dim
  double norm_eps = 1e-12;

  std::size_t head_dim() const;
  double pos_denom() const { return pos_denominator > 0.0 ? pos_denominator
                                                          : static_cast<double>(embed_dim); }
};

enum class Variant { bert, xlnet };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// Base-model constants (768/12/3072/30522/512); a preset for shape tests, far
// too large to train here.
EncoderConfig paper_base_config();

// Cached previous-sequence hidden states per layer (inputs of each layer),
// detached from gradient flow; at most mem_len rows each.
using Memory = std::vector<Tensor>;

// Additive attention bias: 0 = attend, -10000 = blocked.
constexpr double kMaskBlocked = -10000.0;
Tensor padding_mask(std::size_t q_rows, const std::vector<int>& key_keep);
Tensor combine_masks(const Tensor& a, const Tensor& b);  // blocked if either blocks

enum class Stream { content, query };

// Factorization-order mask: with rank(i) the position of token i in the
// permutation, the content stream allows (q,k) iff rank(k) <= rank(q) and the
// query stream iff rank(k) < rank(q).
Tensor perm_mask(const std::vector<std::size_t>& permutation, std::size_t seq_len,
                 Stream stream);

// Fixed sinusoid table over relative distances [mem+seq .. -seq+1]; shape
// (2*seq_len + mem_len) × R; not trainable.
Tensor rel_pos_encoding(std::size_t seq_len, std::size_t mem_len, std::size_t embed_dim,
                        double denominator);

// Per-layer memory roll: last mem_len rows of concat(old, current).
Memory update_memory(const std::vector<Tensor>& layer_hiddens, const Memory& memory,
                     std::size_t mem_len);

// Same-segment indicator per (query row, key row); memory rows of the same
// document count as same-segment. Values index the 2-column segment scores.
std::vector<std::vector<std::size_t>> segment_same_bits(
    const std::vector<std::size_t>& segment_ids, std::size_t seq_len,
    std::size_t mem_rows);

struct EncoderOut {
  Var hidden;  // S×R per-token representations
  Var pooled;  // 1×R pooler output at the [CLS] convention of the variant
  Memory new_memory;
};

class Encoder {
 public:
  Encoder(EncoderConfig cfg, Variant variant);
  const EncoderConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  ClsPlacement cls_placement() const {
    return variant_ == Variant::bert ? ClsPlacement::bert : ClsPlacement::xlnet;
  }

  void init_params(ParamStore& store, Rng& rng) const;

  // Word + positional + segment lookup, added elementwise (BERT input).
  Var embed_input(Ctx& ctx, const std::vector<std::size_t>& ids,
                  const std::vector<std::size_t>& segment_ids) const;

  // Full-projection attention: Q,K,V = X·Wᵀ (R×R), split into L column
  // blocks, attended per block with d_k = R/L, concatenated back.
  Var multi_head_bert(Ctx& ctx, const Var& x, const Tensor& mask, std::size_t layer) const;

  Var bert_layer(Ctx& ctx, const Var& x, const Tensor& mask, std::size_t layer) const;

  // Per-head projections; keys/values read concat(memory, current) while the
  // queries come from q_in. Content, shifted-positional and segment scores
  // are summed, scaled by 1/sqrt(d_k), masked and softmaxed; per-head outputs
  // are mapped back to R and added up.
  Var multi_head_xlnet(Ctx& ctx, const Var& q_in, const Var& kv_in, const Var& pos_enc,
                       const std::vector<std::vector<std::size_t>>& seg_bits,
                       const Tensor& mask, std::size_t layer) const;

  // Residual + norm around the attention, then the BERT feed-forward block;
  // there is no post-attention R×R dense (the per-head output maps play that
  // role).
  Var xlnet_layer(Ctx& ctx, const Var& q_in, const Var& kv_in, const Var& pos_enc,
                  const std::vector<std::vector<std::size_t>>& seg_bits,
                  const Tensor& mask, std::size_t layer) const;

  Var pooler_out(Ctx& ctx, const Var& h_row) const;  // tanh(dense R→R)

  // layer_limit == 0 runs all layers; a positive value truncates the stack to
  // its first min(layer_limit, layers) layers before the pooler.
  EncoderOut encode(Ctx& ctx, const EncodedSeq& seq, const Memory* memory = nullptr,
                    std::size_t layer_limit = 0) const;

  // Masked-LM loss over target positions; the decoder weight is the same
  // tensor as the input word embedding, plus a separate output bias.
  Var mlm_loss(Ctx& ctx, const Var& hidden, const MlmMask& mask) const;

  // Next-sentence head on the pooled output (toy objective).
  Var nsp_loss(Ctx& ctx, const Var& pooled, std::size_t label) const;
  Var nsp_logits(Ctx& ctx, const Var& pooled) const;

  // Permutation-LM with parallel content and query streams; predicts the last
  // ceil(S/6) tokens in factorization order.
  Var two_stream_loss(Ctx& ctx, const std::vector<std::size_t>& ids,
                      const std::vector<std::size_t>& permutation) const;
  std::vector<std::size_t> permlm_targets(const std::vector<std::size_t>& permutation,
                                          std::size_t seq_len) const;

  std::size_t n_layers() const { return cfg_.layers; }

 private:
  std::string lp(std::size_t layer, const std::string& part) const;
  Var ffn_block(Ctx& ctx, const Var& h1, std::size_t layer) const;

  EncoderConfig cfg_;
  Variant variant_;
};

}  // namespace aes
