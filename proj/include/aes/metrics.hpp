#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aes/errors.hpp"

namespace aes {

// k×k nonnegative count table between two score sequences;
// counts[i][j] = occurrences of (rater-A score i, rater-B score j).
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<long> counts;  // row-major k×k
  long total = 0;

  long& at(std::size_t i, std::size_t j) { return counts[i * k + j]; }
  long at(std::size_t i, std::size_t j) const { return counts[i * k + j]; }
};

ConfusionMatrix confusion(const std::vector<int>& a, const std::vector<int>& b,
                          std::size_t k);

double exact_agreement(const ConfusionMatrix& m);

// (p_o - p_e)/(1 - p_e); throws UndefinedKappaError when p_e == 1.
double cohen_kappa(const ConfusionMatrix& m);

// Standard quadratic weighted kappa: 1 - Σ wO / Σ wE with disagreement
// weights w_ij = (i-j)²/(k-1)², observed proportions O and expected E from
// the marginal outer product. Throws UndefinedKappaError when the expected
// weighted disagreement is zero.
double qwk(const ConfusionMatrix& m);

// Nonstandard study variant with agreement-style weights
// w_ij = 1 - (i-j)²/(k-1)² and m_ij = x_ij(1 - x_ij); exposed behind the
// --qwk-variant=paper-literal flag and clearly labeled as such. It does NOT
// evaluate to 1 under complete agreement.
double qwk_paper_literal(const ConfusionMatrix& m);

struct EngineHumanReport {
  std::size_t n = 0;
  double qwk_engine = 0.0;   // qwk(predicted, initial)
  double qwk_human = 0.0;    // qwk(reliability, initial)
  double acc_engine = 0.0;
  double acc_human = 0.0;
  bool engine_at_least_human = false;
};

// Agreement of engine predictions vs. the second human rater, both measured
// against the initial scores.
EngineHumanReport compare_engine_to_human(const std::vector<int>& initial,
                                          const std::vector<int>& reliability,
                                          const std::vector<int>& predicted,
                                          std::size_t k);

// TSV row: item, n, qwk_engine, qwk_human, acc_engine, acc_human.
std::string engine_human_tsv_header();
std::string engine_human_tsv_row(int item, const EngineHumanReport& r);

}  // namespace aes
