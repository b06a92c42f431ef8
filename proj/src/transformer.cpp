#include "aes/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "aes/ops.hpp"

namespace aes {

std::size_t EncoderConfig::head_dim() const {
  if (heads == 0 || embed_dim % heads != 0) {
    throw ValueError("embed_dim " + std::to_string(embed_dim) +
                     " not divisible by heads " + std::to_string(heads));
  }
  return embed_dim / heads;
}

Variant variant_from_string(const std::string& s) {
  if (s == "bert") return Variant::bert;
  if (s == "xlnet") return Variant::xlnet;
  throw ValueError("unknown encoder variant: " + s);
}

std::string variant_to_string(Variant v) {
  return v == Variant::bert ? "bert" : "xlnet";
}

EncoderConfig paper_base_config() {
  EncoderConfig cfg;
  cfg.embed_dim = 768;
  cfg.heads = 12;
  cfg.layers = 12;
  cfg.ffn_dim = 3072;
  cfg.vocab_size = 30522;
  cfg.max_len = 512;
  cfg.mem_len = 10;
  cfg.dropout = 0.1;
  return cfg;
}

Tensor padding_mask(std::size_t q_rows, const std::vector<int>& key_keep) {
  Tensor m(Shape{q_rows, key_keep.size()});
  for (std::size_t i = 0; i < q_rows; ++i)
    for (std::size_t j = 0; j < key_keep.size(); ++j)
      m.at(i, j) = key_keep[j] ? 0.0 : kMaskBlocked;
  return m;
}

Tensor combine_masks(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("combine_masks: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b[i]);
  return out;
}

Tensor perm_mask(const std::vector<std::size_t>& permutation, std::size_t seq_len,
                 Stream stream) {
  if (permutation.size() != seq_len) {
    throw ValueError("perm_mask: permutation length " + std::to_string(permutation.size()) +
                     " != seq_len " + std::to_string(seq_len));
  }
  std::vector<std::size_t> rank(seq_len, seq_len);
  for (std::size_t t = 0; t < seq_len; ++t) {
    if (permutation[t] >= seq_len || rank[permutation[t]] != seq_len) {
      throw ValueError("perm_mask: not a permutation of [0, seq_len)");
    }
    rank[permutation[t]] = t;
  }
  Tensor m(Shape{seq_len, seq_len});
  for (std::size_t q = 0; q < seq_len; ++q) {
    for (std::size_t k = 0; k < seq_len; ++k) {
      bool allowed = (stream == Stream::content) ? rank[k] <= rank[q] : rank[k] < rank[q];
      m.at(q, k) = allowed ? 0.0 : kMaskBlocked;
    }
  }
  return m;
}

Tensor rel_pos_encoding(std::size_t seq_len, std::size_t mem_len, std::size_t embed_dim,
                        double denominator) {
  if (embed_dim % 2 != 0) {
    throw ValueError("rel_pos_encoding: embedding dimension must be even, got " +
                     std::to_string(embed_dim));
  }
  std::size_t rows = 2 * seq_len + mem_len;
  std::size_t half = embed_dim / 2;
  std::vector<double> e_inv(half);
  for (std::size_t i = 0; i < half; ++i) {
    e_inv[i] = 1.0 / std::pow(10000.0, static_cast<double>(2 * i) / denominator);
  }
  Tensor out(Shape{rows, embed_dim});
  for (std::size_t t = 0; t < rows; ++t) {
    double p = static_cast<double>(mem_len + seq_len) - static_cast<double>(t);
    for (std::size_t i = 0; i < half; ++i) {
      out.at(t, i) = std::sin(p * e_inv[i]);
      out.at(t, half + i) = std::cos(p * e_inv[i]);
    }
  }
  return out;
}

Memory update_memory(const std::vector<Tensor>& layer_hiddens, const Memory& memory,
                     std::size_t mem_len) {
  Memory out;
  out.reserve(layer_hiddens.size());
  for (std::size_t l = 0; l < layer_hiddens.size(); ++l) {
    const Tensor& cur = layer_hiddens[l];
    if (mem_len == 0) {
      out.emplace_back();
      continue;
    }
    std::size_t c = cur.cols();
    std::size_t old_rows = (l < memory.size() && !memory[l].empty()) ? memory[l].rows() : 0;
    std::size_t total = old_rows + cur.rows();
    std::size_t keep = std::min(mem_len, total);
    Tensor m(Shape{keep, c});
    for (std::size_t i = 0; i < keep; ++i) {
      std::size_t src = total - keep + i;
      const double* row = src < old_rows ? memory[l].data() + src * c
                                         : cur.data() + (src - old_rows) * c;
      std::copy(row, row + c, m.data() + i * c);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::vector<std::size_t>> segment_same_bits(
    const std::vector<std::size_t>& segment_ids, std::size_t seq_len,
    std::size_t mem_rows) {
  std::vector<std::vector<std::size_t>> bits(seq_len,
                                             std::vector<std::size_t>(mem_rows + seq_len));
  for (std::size_t i = 0; i < seq_len; ++i) {
    for (std::size_t j = 0; j < mem_rows; ++j) bits[i][j] = 1;  // same document
    for (std::size_t j = 0; j < seq_len; ++j)
      bits[i][mem_rows + j] = (segment_ids[i] == segment_ids[j]) ? 1 : 0;
  }
  return bits;
}

Encoder::Encoder(EncoderConfig cfg, Variant variant) : cfg_(cfg), variant_(variant) {
  cfg_.head_dim();  // validate divisibility up front
  if (cfg_.max_len < 2) throw ValueError("encoder max_len must be >= 2");
}

std::string Encoder::lp(std::size_t layer, const std::string& part) const {
  return "layer." + std::to_string(layer) + "." + part;
}

void Encoder::init_params(ParamStore& store, Rng& rng) const {
  std::size_t R = cfg_.embed_dim, Rp = cfg_.ffn_dim, d = cfg_.head_dim();
  auto ws = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  store.add("embed.word", rand_normal_tensor(rng, Shape{cfg_.vocab_size, R}, 0.0, 0.1));
  if (variant_ == Variant::bert) {
    store.add("embed.pos", rand_normal_tensor(rng, Shape{cfg_.max_len, R}, 0.0, 0.1));
    store.add("embed.seg", rand_normal_tensor(rng, Shape{2, R}, 0.0, 0.1));
  }
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    if (variant_ == Variant::bert) {
      store.add(lp(l, "attn.wq"), rand_normal_tensor(rng, Shape{R, R}, 0.0, ws(R)));
      store.add(lp(l, "attn.wk"), rand_normal_tensor(rng, Shape{R, R}, 0.0, ws(R)));
      store.add(lp(l, "attn.wv"), rand_normal_tensor(rng, Shape{R, R}, 0.0, ws(R)));
      store.add(lp(l, "attn.wo"), rand_normal_tensor(rng, Shape{R, R}, 0.0, ws(R)));
      store.add(lp(l, "attn.bo"), Tensor(Shape{R}));
    } else {
      for (std::size_t h = 0; h < cfg_.heads; ++h) {
        std::string hp = lp(l, "head." + std::to_string(h) + ".");
        store.add(hp + "wq", rand_normal_tensor(rng, Shape{d, R}, 0.0, ws(R)));
        store.add(hp + "wk", rand_normal_tensor(rng, Shape{d, R}, 0.0, ws(R)));
        store.add(hp + "wv", rand_normal_tensor(rng, Shape{d, R}, 0.0, ws(R)));
        store.add(hp + "wo", rand_normal_tensor(rng, Shape{R, d}, 0.0, ws(d)));
        store.add(hp + "wkp", rand_normal_tensor(rng, Shape{d, R}, 0.0, ws(R)));
        store.add(hp + "bqp", Tensor(Shape{d}));
        store.add(hp + "bqs", Tensor(Shape{d}));
        store.add(hp + "wseg", rand_normal_tensor(rng, Shape{2, d}, 0.0, ws(d)));
      }
    }
    store.add(lp(l, "norm1.gamma"), Tensor(Shape{R}, 1.0));
    store.add(lp(l, "norm1.beta"), Tensor(Shape{R}));
    store.add(lp(l, "ffn.w1"), rand_normal_tensor(rng, Shape{Rp, R}, 0.0, ws(R)));
    store.add(lp(l, "ffn.b1"), Tensor(Shape{Rp}));
    store.add(lp(l, "ffn.w2"), rand_normal_tensor(rng, Shape{R, Rp}, 0.0, ws(Rp)));
    store.add(lp(l, "ffn.b2"), Tensor(Shape{R}));
    store.add(lp(l, "norm2.gamma"), Tensor(Shape{R}, 1.0));
    store.add(lp(l, "norm2.beta"), Tensor(Shape{R}));
  }
  store.add("pooler.w", rand_normal_tensor(rng, Shape{R, R}, 0.0, ws(R)));
  store.add("pooler.b", Tensor(Shape{R}));
  if (variant_ == Variant::bert) {
    store.add("mlm.bias", Tensor(Shape{cfg_.vocab_size}));
    store.add("nsp.w", rand_normal_tensor(rng, Shape{2, R}, 0.0, ws(R)));
    store.add("nsp.b", Tensor(Shape{2}));
  } else {
    store.add("qstream.g", rand_normal_tensor(rng, Shape{1, R}, 0.0, 0.1));
    store.add("permlm.bias", Tensor(Shape{cfg_.vocab_size}));
  }
}

Var Encoder::embed_input(Ctx& ctx, const std::vector<std::size_t>& ids,
                         const std::vector<std::size_t>& segment_ids) const {
  if (ids.size() > cfg_.max_len) {
    throw ValueError("embed_input: sequence length " + std::to_string(ids.size()) +
                     " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  Var words = embed_rows(ctx.p("embed.word"), ids);
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i;
  Var pos = embed_rows(ctx.p("embed.pos"), positions);
  Var seg = embed_rows(ctx.p("embed.seg"), segment_ids);
  return add(add(words, pos), seg);
}

Var Encoder::multi_head_bert(Ctx& ctx, const Var& x, const Tensor& mask,
                             std::size_t layer) const {
  std::size_t d = cfg_.head_dim();
  Var q = matmul_nt(x, ctx.p(lp(layer, "attn.wq")));
  Var k = matmul_nt(x, ctx.p(lp(layer, "attn.wk")));
  Var v = matmul_nt(x, ctx.p(lp(layer, "attn.wv")));
  std::vector<Var> heads;
  heads.reserve(cfg_.heads);
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    Var qh = slice_cols(q, h * d, (h + 1) * d);
    Var kh = slice_cols(k, h * d, (h + 1) * d);
    Var vh = slice_cols(v, h * d, (h + 1) * d);
    heads.push_back(self_attention(qh, kh, vh, mask, d));
  }
  return heads.size() == 1 ? heads[0] : concat_cols(heads);
}

Var Encoder::bert_layer(Ctx& ctx, const Var& x, const Tensor& mask,
                        std::size_t layer) const {
  Var attn = multi_head_bert(ctx, x, mask, layer);
  Var proj = dense(attn, ctx.p(lp(layer, "attn.wo")), ctx.p(lp(layer, "attn.bo")),
                   Activation::identity);
  Var h1 = feature_norm(add(x, dropout(proj, ctx.dropout, ctx.mode, *ctx.rng)),
                        ctx.p(lp(layer, "norm1.gamma")), ctx.p(lp(layer, "norm1.beta")),
                        cfg_.norm_eps);
  return ffn_block(ctx, h1, layer);
}

Var Encoder::ffn_block(Ctx& ctx, const Var& h1, std::size_t layer) const {
  Var inner = dense(h1, ctx.p(lp(layer, "ffn.w1")), ctx.p(lp(layer, "ffn.b1")),
                    Activation::gelu);
  Var outer = dense(inner, ctx.p(lp(layer, "ffn.w2")), ctx.p(lp(layer, "ffn.b2")),
                    Activation::identity);
  return feature_norm(add(h1, dropout(outer, ctx.dropout, ctx.mode, *ctx.rng)),
                      ctx.p(lp(layer, "norm2.gamma")), ctx.p(lp(layer, "norm2.beta")),
                      cfg_.norm_eps);
}

Var Encoder::multi_head_xlnet(Ctx& ctx, const Var& q_in, const Var& kv_in,
                              const Var& pos_enc,
                              const std::vector<std::vector<std::size_t>>& seg_bits,
                              const Tensor& mask, std::size_t layer) const {
  std::size_t d = cfg_.head_dim();
  std::size_t s = q_in.rows();
  std::size_t klen = kv_in.rows();
  if (pos_enc.rows() < klen) {
    throw ShapeError("multi_head_xlnet: positional table has " +
                     std::to_string(pos_enc.rows()) + " rows for klen " +
                     std::to_string(klen));
  }
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Var out;
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    std::string hp = lp(layer, "head." + std::to_string(h) + ".");
    Var qh = matmul_nt(q_in, ctx.p(hp + "wq"));   // S×d
    Var kh = matmul_nt(kv_in, ctx.p(hp + "wk"));  // klen×d
    Var vh = matmul_nt(kv_in, ctx.p(hp + "wv"));
    Var content = matmul_nt(qh, kh);  // S×klen

    Var pos_keys = matmul_nt(pos_enc, ctx.p(hp + "wkp"));  // pos_rows×d
    Var pos_queries = add_rowvec(qh, ctx.p(hp + "bqp"));
    Var pos_raw = matmul_nt(pos_queries, pos_keys);  // S×pos_rows
    Var pos_scores = slice_cols(rel_shift(pos_raw), 0, klen);

    Var seg_queries = add_rowvec(qh, ctx.p(hp + "bqs"));
    Var seg_pair = matmul_nt(seg_queries, ctx.p(hp + "wseg"));  // S×2
    Var seg_scores = select_cols_by_index(seg_pair, seg_bits);  // S×klen

    Var scores = scale(add(add(content, pos_scores), seg_scores), inv_sqrt_d);
    Var weights = softmax_rows(add_tensor(scores, mask));
    Var head_out = matmul(weights, vh);                     // S×d
    Var mapped = matmul_nt(head_out, ctx.p(hp + "wo"));     // S×R
    out = (h == 0) ? mapped : add(out, mapped);
  }
  (void)s;
  return out;
}

Var Encoder::xlnet_layer(Ctx& ctx, const Var& q_in, const Var& kv_in, const Var& pos_enc,
                         const std::vector<std::vector<std::size_t>>& seg_bits,
                         const Tensor& mask, std::size_t layer) const {
  Var attn = multi_head_xlnet(ctx, q_in, kv_in, pos_enc, seg_bits, mask, layer);
  Var h1 = feature_norm(add(q_in, dropout(attn, ctx.dropout, ctx.mode, *ctx.rng)),
                        ctx.p(lp(layer, "norm1.gamma")), ctx.p(lp(layer, "norm1.beta")),
                        cfg_.norm_eps);
  return ffn_block(ctx, h1, layer);
}

Var Encoder::pooler_out(Ctx& ctx, const Var& h_row) const {
  return dense(h_row, ctx.p("pooler.w"), ctx.p("pooler.b"), Activation::tanh);
}

EncoderOut Encoder::encode(Ctx& ctx, const EncodedSeq& seq, const Memory* memory,
                           std::size_t layer_limit) const {
  std::size_t s = seq.ids.size();
  if (s == 0 || seq.true_length == 0) throw ValueError("encode: empty sequence");
  if (s > cfg_.max_len) {
    throw ValueError("encode: sequence length exceeds max_len");
  }
  std::size_t run_layers = cfg_.layers;
  if (layer_limit > 0) run_layers = std::min(layer_limit, cfg_.layers);

  EncoderOut out;
  if (variant_ == Variant::bert) {
    Tensor mask = padding_mask(s, seq.attention_keep);
    Var h = embed_input(ctx, seq.ids, seq.segment_ids);
    for (std::size_t l = 0; l < run_layers; ++l) h = bert_layer(ctx, h, mask, l);
    out.hidden = h;
  } else {
    std::size_t mem_rows = 0;
    if (memory && !memory->empty() && !(*memory)[0].empty()) mem_rows = (*memory)[0].rows();
    if (mem_rows > cfg_.mem_len) {
      throw ValueError("encode: memory has " + std::to_string(mem_rows) +
                       " rows, limit is " + std::to_string(cfg_.mem_len));
    }
    std::vector<int> key_keep(mem_rows, 1);
    key_keep.insert(key_keep.end(), seq.attention_keep.begin(), seq.attention_keep.end());
    Tensor mask = padding_mask(s, key_keep);
    // The positional and segment inputs are computed once and feed every
    // layer unchanged; only the hidden states evolve.
    Var pos = ctx.g.constant(rel_pos_encoding(s, mem_rows, cfg_.embed_dim, cfg_.pos_denom()));
    auto seg_bits = segment_same_bits(seq.segment_ids, s, mem_rows);
    Var h = embed_rows(ctx.p("embed.word"), seq.ids);
    std::vector<Tensor> layer_inputs;
    for (std::size_t l = 0; l < run_layers; ++l) {
      Tensor real_rows(Shape{seq.true_length, cfg_.embed_dim});
      std::copy(h.value().data(), h.value().data() + seq.true_length * cfg_.embed_dim,
                real_rows.data());
      layer_inputs.push_back(std::move(real_rows));  // detached copy for memory
      Var kv = h;
      if (mem_rows > 0) {
        kv = concat_rows(ctx.g.constant((*memory)[l]), h);
      }
      h = xlnet_layer(ctx, h, kv, pos, seg_bits, mask, l);
    }
    out.hidden = h;
    if (cfg_.mem_len > 0) {
      out.new_memory = update_memory(layer_inputs, memory ? *memory : Memory{}, cfg_.mem_len);
    }
  }
  Var cls_row = slice_rows(out.hidden, seq.cls_index(), seq.cls_index() + 1);
  out.pooled = pooler_out(ctx, cls_row);
  return out;
}

Var Encoder::mlm_loss(Ctx& ctx, const Var& hidden, const MlmMask& mask) const {
  if (mask.target_positions.empty()) throw ValueError("mlm_loss: no target positions");
  Var rows = pick_rows(hidden, mask.target_positions);
  // Tied decoder: the same embedding tensor serves both lookup and output.
  Var logits = add_rowvec(matmul_nt(rows, ctx.p("embed.word")), ctx.p("mlm.bias"));
  return cross_entropy_rows(logits, mask.target_ids);
}

Var Encoder::nsp_logits(Ctx& ctx, const Var& pooled) const {
  return dense(pooled, ctx.p("nsp.w"), ctx.p("nsp.b"), Activation::identity);
}

Var Encoder::nsp_loss(Ctx& ctx, const Var& pooled, std::size_t label) const {
  if (label > 1) throw ValueError("nsp_loss: label must be 0 or 1");
  return cross_entropy_rows(nsp_logits(ctx, pooled), {label});
}

std::vector<std::size_t> Encoder::permlm_targets(const std::vector<std::size_t>& permutation,
                                                 std::size_t seq_len) const {
  std::size_t n_targets = (seq_len + 5) / 6;  // ceil(seq_len / 6), minimum 1
  std::vector<std::size_t> targets(permutation.end() - static_cast<long>(n_targets),
                                   permutation.end());
  std::sort(targets.begin(), targets.end());
  return targets;
}

Var Encoder::two_stream_loss(Ctx& ctx, const std::vector<std::size_t>& ids,
                             const std::vector<std::size_t>& permutation) const {
  std::size_t s = ids.size();
  if (s < 6) {
    throw ValueError("two_stream_loss: sequence length must be >= 6, got " + std::to_string(s));
  }
  Tensor content_mask = perm_mask(permutation, s, Stream::content);
  Tensor query_mask = perm_mask(permutation, s, Stream::query);
  Var pos = ctx.g.constant(rel_pos_encoding(s, 0, cfg_.embed_dim, cfg_.pos_denom()));
  auto seg_bits = segment_same_bits(std::vector<std::size_t>(s, 0), s, 0);

  Var content = embed_rows(ctx.p("embed.word"), ids);
  // Every target's query starts from the same learnable vector; only its
  // position distinguishes it.
  Var query = repeat_row(ctx.p("qstream.g"), s);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Var next_query = xlnet_layer(ctx, query, content, pos, seg_bits, query_mask, l);
    Var next_content = xlnet_layer(ctx, content, content, pos, seg_bits, content_mask, l);
    query = next_query;
    content = next_content;
  }
  auto targets = permlm_targets(permutation, s);
  Var rows = pick_rows(query, targets);
  Var logits = add_rowvec(matmul_nt(rows, ctx.p("embed.word")), ctx.p("permlm.bias"));
  std::vector<std::size_t> target_ids;
  for (std::size_t t : targets) target_ids.push_back(ids[t]);
  return cross_entropy_rows(logits, target_ids);
}

}  // namespace aes
