#include "aes/ops.hpp"

#include <algorithm>
#include <cmath>

namespace aes {

namespace {

Graph* same_graph(const Var& a, const Var& b) {
  if (a.graph() != b.graph()) throw ConsistencyError("operands from different graphs");
  return a.graph();
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value().shape()) +
                     " vs " + shape_str(b.value().shape()));
  }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Tensor softmax_rows_tensor(const Tensor& a) {
  std::size_t r = a.rows(), c = a.cols();
  Tensor y = a;
  for (std::size_t i = 0; i < r; ++i) {
    double* row = y.data() + i * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return y;
}

Tensor rel_shift_tensor(const Tensor& scores) {
  std::size_t q = scores.rows(), r = scores.cols();
  if (r < q) {
    throw ShapeError("rel_shift needs cols >= rows, got " + shape_str(scores.shape()));
  }
  Tensor out(Shape{q, r});
  for (std::size_t t = 0; t < q * r; ++t) {
    std::size_t f = t + q;  // skip the dropped first row of the (r+1)×q view
    std::size_t col = f % (r + 1);
    if (col == 0) continue;  // the padded zero column
    out[t] = scores[(f / (r + 1)) * r + (col - 1)];
  }
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  Tensor c = mat_mul(a.value(), b.value());
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(std::move(c), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, mat_mul_nt(self.grad, bn->value));
    if (bn->requires_grad) t_axpy(bn->grad, 1.0, mat_mul_tn(an->value, self.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  Tensor c = mat_mul_nt(a.value(), b.value());
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(std::move(c), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, mat_mul(self.grad, bn->value));
    if (bn->requires_grad) t_axpy(bn->grad, 1.0, mat_mul_tn(self.grad, an->value));
  });
}

Var add(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  check_same_shape(a, b, "add");
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(t_add(a.value(), b.value()), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, self.grad);
    if (bn->requires_grad) t_axpy(bn->grad, 1.0, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  check_same_shape(a, b, "sub");
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(t_sub(a.value(), b.value()), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, self.grad);
    if (bn->requires_grad) t_axpy(bn->grad, -1.0, self.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  check_same_shape(a, b, "hadamard");
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(t_mul(a.value(), b.value()), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, t_mul(self.grad, bn->value));
    if (bn->requires_grad) t_axpy(bn->grad, 1.0, t_mul(self.grad, an->value));
  });
}

Var scale(const Var& a, double s) {
  Node* an = a.node();
  return a.graph()->make(t_scale(a.value(), s), {an}, [an, s](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, s, self.grad);
  });
}

Var add_rowvec(const Var& m, const Var& row) {
  Graph* g = same_graph(m, row);
  std::size_t r = m.rows(), c = m.cols();
  if (row.value().size() != c) {
    throw ShapeError("add_rowvec: row length " + shape_str(row.value().shape()) +
                     " vs matrix " + shape_str(m.value().shape()));
  }
  Tensor out = m.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += row.value()[j];
  Node* mn = m.node();
  Node* rn = row.node();
  return g->make(std::move(out), {mn, rn}, [mn, rn, r, c](Node& self) {
    if (mn->requires_grad) t_axpy(mn->grad, 1.0, self.grad);
    if (rn->requires_grad) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) rn->grad[j] += self.grad[i * c + j];
    }
  });
}

Var add_tensor(const Var& a, const Tensor& t) {
  if (!a.value().same_shape(t)) {
    throw ShapeError("add_tensor: shape mismatch " + shape_str(a.value().shape()) +
                     " vs " + shape_str(t.shape()));
  }
  Node* an = a.node();
  return a.graph()->make(t_add(a.value(), t), {an}, [an](Node& self) {
    if (an->requires_grad) t_axpy(an->grad, 1.0, self.grad);
  });
}

Var softmax_rows(const Var& a) {
  Tensor y = softmax_rows_tensor(a.value());
  Node* an = a.node();
  std::size_t r = a.value().rows(), c = a.value().cols();
  return a.graph()->make(std::move(y), {an}, [an, r, c](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double* yrow = self.value.data() + i * c;
      const double* drow = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += yrow[j] * drow[j];
      double* grow = an->grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) grow[j] += yrow[j] * (drow[j] - dot);
    }
  });
}

Var gelu(const Var& a) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = gelu_scalar(y[i]);
  Node* an = a.node();
  return a.graph()->make(std::move(y), {an}, [an](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double x = an->value[i];
      double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                 x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += d * self.grad[i];
    }
  });
}

Var tanh_op(const Var& a) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  Node* an = a.node();
  return a.graph()->make(std::move(y), {an}, [an](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += (1.0 - self.value[i] * self.value[i]) * self.grad[i];
  });
}

Var sigmoid_op(const Var& a) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  Node* an = a.node();
  return a.graph()->make(std::move(y), {an}, [an](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.value[i] * (1.0 - self.value[i]) * self.grad[i];
  });
}

Var activate(const Var& a, Activation f) {
  switch (f) {
    case Activation::identity: return a;
    case Activation::tanh: return tanh_op(a);
    case Activation::sigmoid: return sigmoid_op(a);
    case Activation::gelu: return gelu(a);
  }
  throw ValueError("unknown activation");
}

Var feature_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  std::size_t r = x.rows(), c = x.cols();
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw ShapeError("feature_norm: gamma/beta length must equal feature count " +
                     std::to_string(c));
  }
  Tensor y(Shape{r, c});
  Tensor xhat(Shape{r, c});
  Tensor inv_sd(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.value().data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      double h = (xr[j] - mean) * inv;
      xhat[i * c + j] = h;
      y[i * c + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  Node* xn = x.node();
  Node* gn = gamma.node();
  Node* bn = beta.node();
  Graph* g = same_graph(x, gamma);
  return g->make(std::move(y), {xn, gn, bn},
                 [xn, gn, bn, r, c, xhat = std::move(xhat),
                  inv_sd = std::move(inv_sd)](Node& self) {
    for (std::size_t i = 0; i < r; ++i) {
      const double* dy = self.grad.data() + i * c;
      const double* xh = xhat.data() + i * c;
      if (gn->requires_grad)
        for (std::size_t j = 0; j < c; ++j) gn->grad[j] += dy[j] * xh[j];
      if (bn->requires_grad)
        for (std::size_t j = 0; j < c; ++j) bn->grad[j] += dy[j];
      if (xn->requires_grad) {
        double sum_dh = 0.0, sum_dh_xh = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          double dh = dy[j] * gn->value[j];
          sum_dh += dh;
          sum_dh_xh += dh * xh[j];
        }
        double n = static_cast<double>(c);
        double* gx = xn->grad.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) {
          double dh = dy[j] * gn->value[j];
          gx[j] += inv_sd[i] * (dh - sum_dh / n - xh[j] * sum_dh_xh / n);
        }
      }
    }
  });
}

Var dropout(const Var& x, double p, RunMode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ValueError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == RunMode::eval || p == 0.0) return x;
  double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(x.value().shape());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = (rand_unit(rng) < p) ? 0.0 : keep_scale;
  Node* xn = x.node();
  Tensor dropped = t_mul(x.value(), mask);  // before the closure takes the mask
  return x.graph()->make(std::move(dropped), {xn},
                         [xn, mask = std::move(mask)](Node& self) {
    if (xn->requires_grad) t_axpy(xn->grad, 1.0, t_mul(self.grad, mask));
  });
}

Var embed_rows(const Var& table, const std::vector<std::size_t>& ids) {
  std::size_t v = table.rows(), e = table.cols();
  Tensor out(Shape{ids.size(), e});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= v) {
      throw ValueError("embedding id " + std::to_string(ids[t]) + " out of range " +
                       std::to_string(v));
    }
    const double* src = table.value().data() + ids[t] * e;
    std::copy(src, src + e, out.data() + t * e);
  }
  Node* tn = table.node();
  return table.graph()->make(std::move(out), {tn}, [tn, ids, e](Node& self) {
    if (!tn->requires_grad) return;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const double* d = self.grad.data() + t * e;
      double* dst = tn->grad.data() + ids[t] * e;
      for (std::size_t j = 0; j < e; ++j) dst[j] += d[j];
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  Graph* g = same_graph(a, b);
  std::size_t c = a.cols();
  if (b.cols() != c) {
    throw ShapeError("concat_rows: column mismatch " + shape_str(a.value().shape()) +
                     " vs " + shape_str(b.value().shape()));
  }
  std::size_t ra = a.rows(), rb = b.rows();
  Tensor out(Shape{ra + rb, c});
  std::copy(a.value().data(), a.value().data() + ra * c, out.data());
  std::copy(b.value().data(), b.value().data() + rb * c, out.data() + ra * c);
  Node* an = a.node();
  Node* bn = b.node();
  return g->make(std::move(out), {an, bn}, [an, bn, ra, rb, c](Node& self) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < ra * c; ++i) an->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < rb * c; ++i) bn->grad[i] += self.grad[ra * c + i];
  });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  std::size_t c = a.cols();
  if (r1 > a.rows() || r0 > r1) throw ShapeError("slice_rows: bad range");
  Tensor out(Shape{r1 - r0, c});
  std::copy(a.value().data() + r0 * c, a.value().data() + r1 * c, out.data());
  Node* an = a.node();
  return a.graph()->make(std::move(out), {an}, [an, r0, r1, c](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < (r1 - r0) * c; ++i) an->grad[r0 * c + i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
  std::size_t r = a.rows(), c = a.cols();
  if (c1 > c || c0 > c1) throw ShapeError("slice_cols: bad range");
  std::size_t w = c1 - c0;
  Tensor out(Shape{r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy(a.value().data() + i * c + c0, a.value().data() + i * c + c1,
              out.data() + i * w);
  Node* an = a.node();
  return a.graph()->make(std::move(out), {an}, [an, r, c, c0, w](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j)
        an->grad[i * c + c0 + j] += self.grad[i * w + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no parts");
  Graph* g = parts[0].graph();
  std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
    total += p.cols();
  }
  Tensor out(Shape{r, total});
  std::vector<Node*> nodes;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.value().data() + i * w, p.value().data() + (i + 1) * w,
                out.data() + i * total + off);
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += w;
  }
  return g->make(std::move(out), nodes, [nodes, offsets, r, total](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      Node* pn = nodes[k];
      if (!pn->requires_grad) continue;
      std::size_t w = pn->value.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j)
          pn->grad[i * w + j] += self.grad[i * total + offsets[k] + j];
    }
  });
}

Var pick_rows(const Var& a, const std::vector<std::size_t>& rows) {
  std::size_t c = a.cols(), n = a.rows();
  Tensor out(Shape{rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("pick_rows: row index out of range");
    std::copy(a.value().data() + rows[i] * c, a.value().data() + (rows[i] + 1) * c,
              out.data() + i * c);
  }
  Node* an = a.node();
  return a.graph()->make(std::move(out), {an}, [an, rows, c](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j)
        an->grad[rows[i] * c + j] += self.grad[i * c + j];
  });
}

Var repeat_row(const Var& row, std::size_t n) {
  std::size_t c = row.value().size();
  Tensor out(Shape{n, c});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(row.value().data(), row.value().data() + c, out.data() + i * c);
  Node* rn = row.node();
  return row.graph()->make(std::move(out), {rn}, [rn, n, c](Node& self) {
    if (!rn->requires_grad) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) rn->grad[j] += self.grad[i * c + j];
  });
}

Var rel_shift(const Var& scores) {
  Tensor out = rel_shift_tensor(scores.value());
  std::size_t q = scores.rows(), r = scores.cols();
  Node* sn = scores.node();
  return scores.graph()->make(std::move(out), {sn}, [sn, q, r](Node& self) {
    if (!sn->requires_grad) return;
    for (std::size_t t = 0; t < q * r; ++t) {
      std::size_t f = t + q;
      std::size_t col = f % (r + 1);
      if (col == 0) continue;
      sn->grad[(f / (r + 1)) * r + (col - 1)] += self.grad[t];
    }
  });
}

Var select_cols_by_index(const Var& a,
                         const std::vector<std::vector<std::size_t>>& col_index) {
  std::size_t r = a.rows(), c = a.cols();
  if (col_index.size() != r) throw ShapeError("select_cols_by_index: row count mismatch");
  std::size_t w = col_index.empty() ? 0 : col_index[0].size();
  Tensor out(Shape{r, w});
  for (std::size_t i = 0; i < r; ++i) {
    if (col_index[i].size() != w) throw ShapeError("select_cols_by_index: ragged index");
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t idx = col_index[i][j];
      if (idx >= c) throw ShapeError("select_cols_by_index: column out of range");
      out[i * w + j] = a.value()[i * c + idx];
    }
  }
  Node* an = a.node();
  return a.graph()->make(std::move(out), {an}, [an, col_index, r, c, w](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j)
        an->grad[i * c + col_index[i][j]] += self.grad[i * w + j];
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
  Node* an = a.node();
  return a.graph()->make(Tensor::scalar(s), {an}, [an](Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0];
  });
}

Var mean_all(const Var& a) {
  double s = 0.0;
  std::size_t n = a.value().size();
  for (std::size_t i = 0; i < n; ++i) s += a.value()[i];
  Node* an = a.node();
  return a.graph()->make(Tensor::scalar(s / static_cast<double>(n)), {an},
                         [an, n](Node& self) {
    if (!an->requires_grad) return;
    double d = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += d;
  });
}

Var add_scalars(const std::vector<Var>& vs) {
  if (vs.empty()) throw ValueError("add_scalars: empty");
  Var acc = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
  return acc;
}

Var cross_entropy_rows(const Var& logits, const std::vector<std::size_t>& targets) {
  std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(r) + " rows");
  }
  Tensor probs = softmax_rows_tensor(logits.value());
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) throw ValueError("cross_entropy: target out of range");
    const double* row = logits.value().data() + i * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - m);
    loss += m + std::log(sum) - row[targets[i]];
  }
  loss /= static_cast<double>(r);
  Node* ln = logits.node();
  return logits.graph()->make(Tensor::scalar(loss), {ln},
                              [ln, targets, probs = std::move(probs), r, c](Node& self) {
    if (!ln->requires_grad) return;
    double d = self.grad[0] / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ln->grad[i * c + j] += d * probs[i * c + j];
      ln->grad[i * c + targets[i]] -= d;
    }
  });
}

Var dense(const Var& x, const Var& w, const Var& b, Activation f) {
  return activate(add_rowvec(matmul_nt(x, w), b), f);
}

Var self_attention(const Var& q, const Var& k, const Var& v, const Tensor& mask,
                   std::size_t d_k) {
  if (k.rows() != v.rows()) {
    throw ShapeError("self_attention: key rows " + std::to_string(k.rows()) +
                     " != value rows " + std::to_string(v.rows()));
  }
  if (mask.rows() != q.rows() || mask.cols() != k.rows()) {
    throw ShapeError("self_attention: mask " + shape_str(mask.shape()) +
                     " does not cover " + std::to_string(q.rows()) + "x" +
                     std::to_string(k.rows()));
  }
  Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_k)));
  Var weights = softmax_rows(add_tensor(scores, mask));
  return matmul(weights, v);
}

}  // namespace aes
