#pragma once

#include <cstddef>
#include <vector>

#include "aes/graph.hpp"
#include "aes/rng.hpp"

namespace aes {

enum class RunMode { train, eval };

enum class Activation { identity, tanh, sigmoid, gelu };

// --- elementwise / linear algebra -----------------------------------------

Var matmul(const Var& a, const Var& b);     // a · b
Var matmul_nt(const Var& a, const Var& b);  // a · bᵀ
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_rowvec(const Var& m, const Var& row);   // row broadcast over rows of m
Var add_tensor(const Var& a, const Tensor& t);  // constant additive bias (masks)

// --- activations ------------------------------------------------------------

Var softmax_rows(const Var& a);  // stable, max-subtracted, per row
Var gelu(const Var& a);          // exact erf form
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var activate(const Var& a, Activation f);

// Per-row normalization over the feature axis, then gamma/beta.
Var feature_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

// Inverted dropout: eval mode is the identity; train mode zeroes each element
// with probability p and scales survivors by 1/(1-p).
Var dropout(const Var& x, double p, RunMode mode, Rng& rng);

// --- shape surgery ----------------------------------------------------------

Var embed_rows(const Var& table, const std::vector<std::size_t>& ids);
Var concat_rows(const Var& a, const Var& b);
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var concat_cols(const std::vector<Var>& parts);
Var pick_rows(const Var& a, const std::vector<std::size_t>& rows);
Var repeat_row(const Var& row, std::size_t n);

// Pad one zero column in front of each row, reinterpret the q×(r+1) buffer as
// (r+1)×q, drop the first row, reinterpret back as q×r.
Var rel_shift(const Var& scores);

// out[i][j] = a[i][col_index[i][j]]; used to contract per-row 2-column scores
// against a same/different-segment encoding.
Var select_cols_by_index(const Var& a, const std::vector<std::vector<std::size_t>>& col_index);

// --- reductions / losses ----------------------------------------------------

Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var add_scalars(const std::vector<Var>& vs);

// Mean softmax cross-entropy of logit rows against integer targets.
Var cross_entropy_rows(const Var& logits, const std::vector<std::size_t>& targets);

// f(x · wᵀ + b), b broadcast over rows; w is (out × in).
Var dense(const Var& x, const Var& w, const Var& b, Activation f);

// softmax((q · kᵀ)/√d_k + mask) · v. mask is an additive 0/-10000 tensor of
// shape rows(q) × rows(k).
Var self_attention(const Var& q, const Var& k, const Var& v, const Tensor& mask,
                   std::size_t d_k);

// Plain-tensor reference paths (also used by oracles and eval-only code).
Tensor softmax_rows_tensor(const Tensor& a);
Tensor rel_shift_tensor(const Tensor& scores);
double gelu_scalar(double x);

}  // namespace aes
