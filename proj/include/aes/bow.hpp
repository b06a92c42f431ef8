#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "aes/param_store.hpp"
#include "aes/rng.hpp"
#include "aes/tensor.hpp"

namespace aes {

// TF-IDF feature extractor: vocabulary of words whose document frequency is
// at most cutoff*N, idf = ln(N/df) (smoothed variant when any retained df
// equals N), tf = count/max-count per document, L2-normalized vectors.
struct TfidfModel {
  std::map<std::string, std::size_t> vocabulary;  // word -> column (lexicographic)
  std::vector<double> idf;
  double high_freq_cutoff = 0.9;
  bool smoothed = false;
  std::size_t dim() const { return idf.size(); }
};

TfidfModel fit_tfidf(const std::vector<std::string>& docs, double cutoff);

Tensor vectorize(const std::string& doc, const TfidfModel& model);  // shape {1, dim}

struct BowClassifier {
  TfidfModel features;
  ParamStore params;  // "bow.w" (k×dim), "bow.b" (k)
  std::size_t classes = 0;
};

struct BowTrainResult {
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
};

// Multinomial logistic regression (dense + softmax + cross-entropy) by Adam.
BowTrainResult train_bow_classifier(BowClassifier& clf, const std::vector<Tensor>& x,
                                    const std::vector<std::size_t>& labels,
                                    std::size_t epochs, double lr, Rng& rng,
                                    std::size_t batch_size = 16);

std::size_t bow_predict(const BowClassifier& clf, const Tensor& features);
std::vector<double> bow_predict_probs(const BowClassifier& clf, const Tensor& features);

}  // namespace aes
