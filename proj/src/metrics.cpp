#include "aes/metrics.hpp"

#include <cmath>
#include <sstream>

namespace aes {

ConfusionMatrix confusion(const std::vector<int>& a, const std::vector<int>& b,
                          std::size_t k) {
  if (a.size() != b.size()) {
    throw ShapeError("confusion: sequence lengths differ, " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw ValueError("confusion: empty score sequences");
  if (k < 1) throw ValueError("confusion: k must be >= 1");
  ConfusionMatrix m;
  m.k = k;
  m.counts.assign(k * k, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0 || a[i] >= static_cast<int>(k) || b[i] >= static_cast<int>(k)) {
      throw ValueError("confusion: score out of range [0," + std::to_string(k) +
                       ") at position " + std::to_string(i));
    }
    m.at(static_cast<std::size_t>(a[i]), static_cast<std::size_t>(b[i])) += 1;
  }
  m.total = static_cast<long>(a.size());
  return m;
}

static void check_nonempty(const ConfusionMatrix& m, const char* who) {
  if (m.total <= 0 || m.k == 0) throw ValueError(std::string(who) + ": empty confusion matrix");
}

double exact_agreement(const ConfusionMatrix& m) {
  check_nonempty(m, "exact_agreement");
  long diag = 0;
  for (std::size_t i = 0; i < m.k; ++i) diag += m.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(m.total);
}

double cohen_kappa(const ConfusionMatrix& m) {
  check_nonempty(m, "cohen_kappa");
  double n = static_cast<double>(m.total);
  double po = exact_agreement(m);
  double pe = 0.0;
  for (std::size_t i = 0; i < m.k; ++i) {
    long row = 0, col = 0;
    for (std::size_t j = 0; j < m.k; ++j) {
      row += m.at(i, j);
      col += m.at(j, i);
    }
    pe += (static_cast<double>(row) / n) * (static_cast<double>(col) / n);
  }
  if (pe >= 1.0) {
    throw UndefinedKappaError("cohen_kappa: chance agreement is 1 (degenerate marginals)");
  }
  return (po - pe) / (1.0 - pe);
}

double qwk(const ConfusionMatrix& m) {
  check_nonempty(m, "qwk");
  if (m.k < 2) throw ValueError("qwk: needs at least 2 score classes");
  double n = static_cast<double>(m.total);
  double denom = static_cast<double>((m.k - 1) * (m.k - 1));
  std::vector<double> row_marg(m.k, 0.0), col_marg(m.k, 0.0);
  for (std::size_t i = 0; i < m.k; ++i)
    for (std::size_t j = 0; j < m.k; ++j) {
      row_marg[i] += static_cast<double>(m.at(i, j)) / n;
      col_marg[j] += static_cast<double>(m.at(i, j)) / n;
    }
  double observed = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < m.k; ++i) {
    for (std::size_t j = 0; j < m.k; ++j) {
      double d = static_cast<double>(i) - static_cast<double>(j);
      double w = d * d / denom;
      observed += w * static_cast<double>(m.at(i, j)) / n;
      expected += w * row_marg[i] * col_marg[j];
    }
  }
  if (expected <= 0.0) {
    throw UndefinedKappaError("qwk: zero expected disagreement (degenerate marginals)");
  }
  return 1.0 - observed / expected;
}

double qwk_paper_literal(const ConfusionMatrix& m) {
  check_nonempty(m, "qwk_paper_literal");
  if (m.k < 2) throw ValueError("qwk_paper_literal: needs at least 2 score classes");
  double n = static_cast<double>(m.total);
  double denom = static_cast<double>((m.k - 1) * (m.k - 1));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < m.k; ++i) {
    for (std::size_t j = 0; j < m.k; ++j) {
      double x = static_cast<double>(m.at(i, j)) / n;
      double d = static_cast<double>(i) - static_cast<double>(j);
      double w = 1.0 - d * d / denom;
      num += w * x;
      den += x * (1.0 - x) * x;
    }
  }
  if (den == 0.0) {
    throw UndefinedKappaError("qwk_paper_literal: zero weighted denominator");
  }
  return 1.0 - num / den;
}

EngineHumanReport compare_engine_to_human(const std::vector<int>& initial,
                                          const std::vector<int>& reliability,
                                          const std::vector<int>& predicted,
                                          std::size_t k) {
  if (initial.size() != reliability.size() || initial.size() != predicted.size()) {
    throw ShapeError("compare_engine_to_human: sequence lengths differ");
  }
  EngineHumanReport r;
  r.n = initial.size();
  ConfusionMatrix engine = confusion(predicted, initial, k);
  ConfusionMatrix human = confusion(reliability, initial, k);
  r.qwk_engine = qwk(engine);
  r.qwk_human = qwk(human);
  r.acc_engine = exact_agreement(engine);
  r.acc_human = exact_agreement(human);
  r.engine_at_least_human = r.qwk_engine >= r.qwk_human;
  return r;
}

std::string engine_human_tsv_header() {
  return "item\tn\tqwk_engine\tqwk_human\tacc_engine\tacc_human";
}

std::string engine_human_tsv_row(int item, const EngineHumanReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << item << '\t' << r.n << '\t' << r.qwk_engine << '\t' << r.qwk_human << '\t'
     << r.acc_engine << '\t' << r.acc_human;
  return os.str();
}

}  // namespace aes
