#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "aes/graph.hpp"
#include "aes/ops.hpp"
#include "aes/rng.hpp"
#include "aes/tensor.hpp"

namespace aes {

// Named parameter tensors with per-tensor trainable flags and Adam moment
// state. Iteration order is insertion order, so runs are deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
    bool locked = false;  // permanently fixed (e.g. the CEC identity weight)
    Tensor m;
    Tensor v;
    long steps = 0;
  };

  Tensor& add(const std::string& name, Tensor init, bool trainable = true,
              bool locked = false);
  bool has(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  bool trainable(const std::string& name) const;
  bool locked(const std::string& name) const;
  // No-op on locked entries.
  void set_trainable(const std::string& name, bool t);
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  // Deep snapshot of values only (for best-checkpoint tracking).
  std::map<std::string, Tensor> snapshot_values() const;
  void restore_values(const std::map<std::string, Tensor>& values);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> entries_;
};

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction per entry's step counter. Non-trainable
// entries are untouched. lr_override lets individual parameters use their own
// learning rate (the discriminative fine-tuning hook).
void adam_step(ParamStore& store, const GradMap& grads, double base_lr,
               const std::map<std::string, double>& lr_override = {},
               const AdamConfig& cfg = {});

// Serves graph leaves for named parameters. Repeated lookups return the same
// leaf, so tied weights (e.g. an embedding table reused as a decoder) share
// one node and their gradients accumulate together.
class Bindings {
 public:
  Bindings(Graph& g, ParamStore& s) : graph_(&g), store_(&s) {}

  Var operator()(const std::string& name);
  GradMap grads() const;
  ParamStore& store() { return *store_; }
  Graph& graph() { return *graph_; }

 private:
  Graph* graph_;
  ParamStore* store_;
  std::map<std::string, Var> bound_;
};

// Everything a forward pass needs besides its inputs.
struct Ctx {
  Graph& g;
  Bindings& p;
  RunMode mode = RunMode::eval;
  Rng* rng = nullptr;
  double dropout = 0.0;
};

// A scalar objective built on demand; used for training steps and for
// finite-difference verification.
using Objective = std::function<Var(Graph&, Bindings&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  bool pass(double tol) const { return max_rel_err < tol; }
};

// Compares the reverse-mode gradient of f against central differences
// (f(θ+h)-f(θ-h))/2h per coordinate of every trainable parameter.
// Relative error uses a small floor so coordinates with near-zero gradient
// are judged on the absolute scale. max_coords_per_param == 0 checks all
// coordinates; otherwise a deterministic sample of that size per parameter.
GradCheckResult grad_check(const Objective& f, ParamStore& store, double h,
                           std::size_t max_coords_per_param = 0,
                           std::uint64_t sample_seed = 7);

}  // namespace aes
