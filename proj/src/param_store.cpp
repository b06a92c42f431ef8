#include "aes/param_store.hpp"

#include <cmath>

namespace aes {

Tensor& ParamStore::add(const std::string& name, Tensor init, bool trainable,
                        bool locked) {
  if (entries_.count(name)) throw ConsistencyError("duplicate parameter: " + name);
  Entry e;
  e.m = Tensor(init.shape());
  e.v = Tensor(init.shape());
  e.value = std::move(init);
  e.trainable = trainable && !locked;
  e.locked = locked;
  order_.push_back(name);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) > 0; }

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConsistencyError("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConsistencyError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
bool ParamStore::trainable(const std::string& name) const { return entry(name).trainable; }
bool ParamStore::locked(const std::string& name) const { return entry(name).locked; }

void ParamStore::set_trainable(const std::string& name, bool t) {
  Entry& e = entry(name);
  if (e.locked) return;
  e.trainable = t;
}

std::map<std::string, Tensor> ParamStore::snapshot_values() const {
  std::map<std::string, Tensor> out;
  for (const auto& n : order_) out.emplace(n, entry(n).value);
  return out;
}

void ParamStore::restore_values(const std::map<std::string, Tensor>& values) {
  for (const auto& [name, tensor] : values) entry(name).value = tensor;
}

void adam_step(ParamStore& store, const GradMap& grads, double base_lr,
               const std::map<std::string, double>& lr_override,
               const AdamConfig& cfg) {
  for (const auto& name : store.names()) {
    auto& e = store.entry(name);
    if (!e.trainable) continue;
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw ConsistencyError("missing gradient for trainable parameter: " + name);
    }
    const Tensor& g = git->second;
    if (!g.same_shape(e.value)) {
      throw ShapeError("gradient shape mismatch for " + name + ": " +
                       shape_str(g.shape()) + " vs " + shape_str(e.value.shape()));
    }
    double lr = base_lr;
    if (auto lit = lr_override.find(name); lit != lr_override.end()) lr = lit->second;
    e.steps += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.steps));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.steps));
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = e.m[i] / bc1;
      double vhat = e.v[i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Var Bindings::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const auto& e = store_->entry(name);
  Var v = e.trainable ? graph_->leaf(e.value) : graph_->constant(e.value);
  bound_.emplace(name, v);
  return v;
}

GradMap Bindings::grads() const {
  GradMap out;
  for (const auto& [name, var] : bound_) {
    if (var.requires_grad()) out.emplace(name, var.grad());
  }
  return out;
}

GradCheckResult grad_check(const Objective& f, ParamStore& store, double h,
                           std::size_t max_coords_per_param,
                           std::uint64_t sample_seed) {
  // Analytic pass.
  GradMap analytic;
  {
    Graph g;
    Bindings b(g, store);
    Var loss = f(g, b);
    g.backward(loss);
    analytic = b.grads();
  }
  auto eval = [&]() {
    Graph g;
    Bindings b(g, store);
    return f(g, b).value().scalar_value();
  };

  GradCheckResult res;
  Rng rng = make_rng(sample_seed);
  for (const auto& name : store.names()) {
    auto& e = store.entry(name);
    if (!e.trainable) continue;
    auto ait = analytic.find(name);
    std::size_t n = e.value.size();
    // A parameter the objective never bound has an identically-zero gradient;
    // spot-check a couple of coordinates instead of the full sweep.
    bool untouched = (ait == analytic.end());
    Tensor zeros;
    if (untouched) zeros = Tensor(e.value.shape());
    const Tensor& agrad = untouched ? zeros : ait->second;
    std::size_t budget = untouched ? std::min<std::size_t>(2, n) : max_coords_per_param;
    std::vector<std::size_t> coords;
    if (!untouched && (budget == 0 || budget >= n)) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      if (budget == 0) budget = std::min<std::size_t>(2, n);
      for (std::size_t i = 0; i < budget; ++i) coords.push_back(rand_index(rng, n));
    }
    for (std::size_t i : coords) {
      double saved = e.value[i];
      e.value[i] = saved + h;
      double fp = eval();
      e.value[i] = saved - h;
      double fm = eval();
      e.value[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double a = agrad[i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-2});
      double rel = std::abs(a - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_name = name;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace aes
