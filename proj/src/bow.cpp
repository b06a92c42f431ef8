#include "aes/bow.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "aes/ops.hpp"
#include "aes/text.hpp"

namespace aes {

TfidfModel fit_tfidf(const std::vector<std::string>& docs, double cutoff) {
  if (docs.empty()) throw ValueError("fit_tfidf: empty corpus");
  if (cutoff <= 0.0 || cutoff > 1.0) {
    throw ValueError("fit_tfidf: cutoff must be in (0,1], got " + std::to_string(cutoff));
  }
  double n = static_cast<double>(docs.size());
  std::map<std::string, long> df;
  for (const auto& doc : docs) {
    std::set<std::string> seen;
    for (const auto& w : split_words_lower(doc)) seen.insert(w);
    for (const auto& w : seen) df[w] += 1;
  }
  TfidfModel model;
  model.high_freq_cutoff = cutoff;
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [word, count] : df) {
    if (static_cast<double>(count) <= cutoff * n) kept.emplace_back(word, count);
  }
  if (kept.empty()) {
    throw ValueError("fit_tfidf: every word exceeds the high-frequency cutoff; empty vocabulary");
  }
  // ln(N/df) would hit zero for df == N; switch to the smoothed form then.
  for (const auto& [word, count] : kept) {
    (void)word;
    if (count == static_cast<long>(docs.size())) model.smoothed = true;
  }
  model.idf.reserve(kept.size());
  for (const auto& [word, count] : kept) {  // std::map order: lexicographic columns
    model.vocabulary[word] = model.idf.size();
    double idf = model.smoothed
                     ? std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0
                     : std::log(n / static_cast<double>(count));
    model.idf.push_back(idf);
  }
  return model;
}

Tensor vectorize(const std::string& doc, const TfidfModel& model) {
  Tensor v(Shape{1, model.dim()});
  auto words = split_words_lower(doc);
  if (words.empty()) return v;
  std::map<std::string, long> counts;
  long max_count = 0;
  for (const auto& w : words) max_count = std::max(max_count, ++counts[w]);
  bool any = false;
  for (const auto& [word, count] : counts) {
    auto it = model.vocabulary.find(word);
    if (it == model.vocabulary.end()) continue;
    double tf = static_cast<double>(count) / static_cast<double>(max_count);
    v[it->second] = tf * model.idf[it->second];
    any = true;
  }
  if (!any) return v;  // all-zero vector stays unnormalized
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) norm += v[i] * v[i];
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= norm;
  }
  return v;
}

BowTrainResult train_bow_classifier(BowClassifier& clf, const std::vector<Tensor>& x,
                                    const std::vector<std::size_t>& labels,
                                    std::size_t epochs, double lr, Rng& rng,
                                    std::size_t batch_size) {
  if (x.size() != labels.size()) throw ShapeError("train_bow_classifier: X/labels size mismatch");
  if (x.empty()) throw ValueError("train_bow_classifier: empty training set");
  if (clf.classes < 2) throw ValueError("train_bow_classifier: need k >= 2 classes");
  std::size_t dim = clf.features.dim();
  for (const auto& t : x) {
    if (t.size() != dim) {
      throw ShapeError("train_bow_classifier: feature size " + std::to_string(t.size()) +
                       " vs model dim " + std::to_string(dim));
    }
  }
  if (!clf.params.has("bow.w")) {
    clf.params.add("bow.w", rand_normal_tensor(rng, Shape{clf.classes, dim}, 0.0, 0.01));
    clf.params.add("bow.b", Tensor(Shape{clf.classes}));
  }

  BowTrainResult result;
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle_vec(order, rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::size_t end = std::min(order.size(), start + batch_size);
      Graph g;
      Bindings b(g, clf.params);
      // Stack the batch rows into one matrix.
      Tensor batch(Shape{end - start, dim});
      std::vector<std::size_t> batch_labels;
      for (std::size_t i = start; i < end; ++i) {
        const Tensor& row = x[order[i]];
        std::copy(row.data(), row.data() + dim, batch.data() + (i - start) * dim);
        batch_labels.push_back(labels[order[i]]);
      }
      Var logits = dense(g.constant(std::move(batch)), b("bow.w"), b("bow.b"),
                         Activation::identity);
      Var loss = cross_entropy_rows(logits, batch_labels);
      g.backward(loss);
      adam_step(clf.params, b.grads(), lr);
      epoch_loss += loss.value().scalar_value();
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return result;
}

std::vector<double> bow_predict_probs(const BowClassifier& clf, const Tensor& features) {
  Tensor logits = mat_mul_nt(features, clf.params.value("bow.w"));
  for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += clf.params.value("bow.b")[j];
  Tensor probs = softmax_rows_tensor(logits);
  return std::vector<double>(probs.raw().begin(), probs.raw().end());
}

std::size_t bow_predict(const BowClassifier& clf, const Tensor& features) {
  auto probs = bow_predict_probs(clf, features);
  return static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace aes
