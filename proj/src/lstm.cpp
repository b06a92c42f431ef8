#include "aes/lstm.hpp"

#include <cmath>

#include "aes/ops.hpp"

namespace aes {

namespace {
const char* kGates[] = {"in", "forget", "out", "cand"};

std::string pname(std::size_t layer, const char* gate, const char* part) {
  return "lstm." + std::to_string(layer) + "." + gate + "." + part;
}
}  // namespace

void LstmModel::init_params(ParamStore& store, Rng& rng) const {
  auto wscale = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  store.add("embed", rand_normal_tensor(rng, Shape{cfg_.vocab_size, cfg_.embed_dim}, 0.0, 0.1));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    std::size_t in_dim = (l == 0) ? cfg_.embed_dim : cfg_.hidden;
    for (const char* gate : kGates) {
      store.add(pname(l, gate, "iw"),
                rand_normal_tensor(rng, Shape{cfg_.hidden, in_dim}, 0.0, wscale(in_dim)));
      store.add(pname(l, gate, "lw"),
                rand_normal_tensor(rng, Shape{cfg_.hidden, cfg_.hidden}, 0.0, wscale(cfg_.hidden)));
      // Forget-gate bias starts at all ones so early memories survive.
      store.add(pname(l, gate, "b"),
                Tensor(Shape{cfg_.hidden}, std::string(gate) == "forget" ? 1.0 : 0.0));
    }
    store.add("lstm." + std::to_string(l) + ".cec", Tensor::identity(cfg_.hidden),
              /*trainable=*/false, /*locked=*/true);
  }
  store.add("head.w", rand_normal_tensor(rng, Shape{cfg_.classes, cfg_.hidden}, 0.0,
                                         wscale(cfg_.hidden)));
  store.add("head.b", Tensor(Shape{cfg_.classes}));
}

LstmModel::State LstmModel::zero_state(Ctx& ctx) const {
  State s;
  s.cell = ctx.g.constant(Tensor(Shape{1, cfg_.hidden}));
  s.hidden = ctx.g.constant(Tensor(Shape{1, cfg_.hidden}));
  return s;
}

LstmModel::State LstmModel::cell_step(Ctx& ctx, std::size_t layer, const Var& x_t,
                                      const State& prev) const {
  auto gate_net = [&](const char* gate) {
    Var net = add_rowvec(add(matmul_nt(x_t, ctx.p(pname(layer, gate, "iw"))),
                             matmul_nt(prev.hidden, ctx.p(pname(layer, gate, "lw")))),
                         ctx.p(pname(layer, gate, "b")));
    return net;
  };
  Var i = sigmoid_op(gate_net("in"));
  Var f = sigmoid_op(gate_net("forget"));
  Var o = sigmoid_op(gate_net("out"));
  Var cand = tanh_op(gate_net("cand"));
  // The CEC self-connection: identity weight, linear transfer.
  Var carried = matmul(prev.cell, ctx.p("lstm." + std::to_string(layer) + ".cec"));
  State next;
  next.cell = add(hadamard(f, carried), hadamard(i, cand));
  next.hidden = hadamard(o, tanh_op(next.cell));
  return next;
}

Var LstmModel::logits(Ctx& ctx, const std::vector<std::size_t>& ids) const {
  if (ids.empty()) throw ValueError("lstm forward: empty token sequence");
  Var embedded = embed_rows(ctx.p("embed"), ids);
  std::vector<Var> layer_inputs;
  layer_inputs.reserve(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t)
    layer_inputs.push_back(slice_rows(embedded, t, t + 1));

  Var pooled;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    State state = zero_state(ctx);
    std::vector<Var> outputs;
    outputs.reserve(layer_inputs.size());
    for (const Var& x_t : layer_inputs) {
      state = cell_step(ctx, l, x_t, state);
      outputs.push_back(state.hidden);
    }
    if (l + 1 == cfg_.layers) {
      if (cfg_.mean_pool) {
        Var sum = outputs[0];
        for (std::size_t t = 1; t < outputs.size(); ++t) sum = add(sum, outputs[t]);
        pooled = scale(sum, 1.0 / static_cast<double>(outputs.size()));
      } else {
        pooled = state.hidden;
      }
    } else {
      layer_inputs = std::move(outputs);
    }
  }
  return dense(pooled, ctx.p("head.w"), ctx.p("head.b"), Activation::identity);
}

}  // namespace aes
