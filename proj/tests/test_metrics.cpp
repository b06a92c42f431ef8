#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "aes/metrics.hpp"
#include "aes/rng.hpp"

using namespace aes;

namespace {

// Brute-force recomputation straight from the definitions, structured
// independently of the library path (explicit weight/expected matrices,
// long double accumulation).
long double oracle_qwk(const ConfusionMatrix& m) {
  std::size_t k = m.k;
  long double n = static_cast<long double>(m.total);
  std::vector<std::vector<long double>> w(k, std::vector<long double>(k));
  std::vector<std::vector<long double>> O(k, std::vector<long double>(k));
  std::vector<std::vector<long double>> E(k, std::vector<long double>(k));
  std::vector<long double> rowm(k, 0.0L), colm(k, 0.0L);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      long double d = static_cast<long double>(i) - static_cast<long double>(j);
      w[i][j] = d * d / static_cast<long double>((k - 1) * (k - 1));
      O[i][j] = static_cast<long double>(m.at(i, j)) / n;
    }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      rowm[i] += O[i][j];
      colm[j] += O[i][j];
    }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) E[i][j] = rowm[i] * colm[j];
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      num += w[i][j] * O[i][j];
      den += w[i][j] * E[i][j];
    }
  return 1.0L - num / den;
}

long double oracle_kappa(const ConfusionMatrix& m) {
  std::size_t k = m.k;
  long double n = static_cast<long double>(m.total);
  long double po = 0.0L, pe = 0.0L;
  for (std::size_t i = 0; i < k; ++i) po += static_cast<long double>(m.at(i, i)) / n;
  for (std::size_t i = 0; i < k; ++i) {
    long double r = 0.0L, c = 0.0L;
    for (std::size_t j = 0; j < k; ++j) {
      r += static_cast<long double>(m.at(i, j));
      c += static_cast<long double>(m.at(j, i));
    }
    pe += (r / n) * (c / n);
  }
  return (po - pe) / (1.0L - pe);
}

ConfusionMatrix random_matrix(Rng& rng, std::size_t k) {
  ConfusionMatrix m;
  m.k = k;
  m.counts.assign(k * k, 0);
  for (std::size_t i = 0; i < k * k; ++i) {
    m.counts[i] = static_cast<long>(rand_index(rng, 21));
    m.total += m.counts[i];
  }
  return m;
}

bool degenerate(const ConfusionMatrix& m) {
  if (m.total == 0) return true;
  // zero expected disagreement: all row mass and all column mass on one class
  std::size_t rnz = 0, cnz = 0;
  for (std::size_t i = 0; i < m.k; ++i) {
    long r = 0, c = 0;
    for (std::size_t j = 0; j < m.k; ++j) {
      r += m.at(i, j);
      c += m.at(j, i);
    }
    if (r) ++rnz;
    if (c) ++cnz;
  }
  return rnz <= 1 && cnz <= 1;
}

}  // namespace

TEST_CASE("confusion tally") {
  auto m = confusion({0, 1, 2}, {0, 1, 2}, 3);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.at(2, 2) == 1);
  CHECK(m.total == 3);

  auto h = confusion({0, 0, 1, 1, 0, 1}, {0, 1, 1, 0, 0, 1}, 2);
  CHECK(h.at(0, 0) == 2);
  CHECK(h.at(0, 1) == 1);
  CHECK(h.at(1, 0) == 1);
  CHECK(h.at(1, 1) == 2);

  CHECK_THROWS_AS(confusion({0}, {5}, 3), ValueError);
  CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), ShapeError);
  CHECK_THROWS_AS(confusion({}, {}, 2), ValueError);
}

TEST_CASE("exact agreement") {
  CHECK(exact_agreement(confusion({0, 1, 2}, {0, 1, 2}, 3)) == doctest::Approx(1.0));
  CHECK(exact_agreement(confusion({0, 0, 1, 1, 0, 1}, {0, 1, 1, 0, 0, 1}, 2)) ==
        doctest::Approx(4.0 / 6.0));
  CHECK(exact_agreement(confusion({0, 0}, {1, 1}, 2)) == 0.0);
}

TEST_CASE("cohen kappa examples") {
  CHECK(cohen_kappa(confusion({0, 0, 1, 1}, {0, 0, 1, 1}, 2)) == doctest::Approx(1.0));
  CHECK(cohen_kappa(confusion({0, 0, 1, 1, 0, 1}, {0, 1, 1, 0, 0, 1}, 2)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(cohen_kappa(confusion({0, 0, 0}, {0, 0, 0}, 2)), UndefinedKappaError);
}

TEST_CASE("qwk examples") {
  // complete agreement -> exactly 1
  CHECK(qwk(confusion({0, 1, 2, 1}, {0, 1, 2, 1}, 3)) == 1.0);
  CHECK(qwk(confusion({0, 0, 1, 1, 0, 1}, {0, 1, 1, 0, 0, 1}, 2)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // maximal reversal: b = k-1-a, balanced -> negative, matches the oracle
  std::vector<int> a, b;
  for (int rep = 0; rep < 4; ++rep)
    for (int s = 0; s < 4; ++s) {
      a.push_back(s);
      b.push_back(3 - s);
    }
  auto m = confusion(a, b, 4);
  double v = qwk(m);
  CHECK(v < 0.0);
  CHECK(v == doctest::Approx(static_cast<double>(oracle_qwk(m))).epsilon(1e-12));
  CHECK_THROWS_AS(qwk(confusion({1, 1}, {1, 1}, 3)), UndefinedKappaError);
}

TEST_CASE("qwk and kappa match the oracle on random matrices") {
  Rng rng = make_rng(12345);
  int done = 0;
  while (done < 1000) {
    std::size_t k = 2 + rand_index(rng, 5);  // 2..6
    ConfusionMatrix m = random_matrix(rng, k);
    if (degenerate(m)) continue;
    ++done;
    CHECK(std::abs(qwk(m) - static_cast<double>(oracle_qwk(m))) < 1e-12);
    CHECK(std::abs(cohen_kappa(m) - static_cast<double>(oracle_kappa(m))) < 1e-12);
  }
}

TEST_CASE("qwk properties") {
  Rng rng = make_rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t k = 2 + rand_index(rng, 5);
    ConfusionMatrix m = random_matrix(rng, k);
    if (degenerate(m)) continue;

    // symmetry under transpose
    ConfusionMatrix t = m;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) t.at(i, j) = m.at(j, i);
    CHECK(std::abs(qwk(m) - qwk(t)) < 1e-12);
    CHECK(std::abs(cohen_kappa(m) - cohen_kappa(t)) < 1e-12);

    // invariance under uniform count scaling
    ConfusionMatrix s = m;
    for (auto& c : s.counts) c *= 3;
    s.total *= 3;
    CHECK(std::abs(qwk(m) - qwk(s)) < 1e-12);

    // qwk <= 1, equality iff all mass diagonal
    double v = qwk(m);
    CHECK(v <= 1.0 + 1e-15);
    long off = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) off += m.at(i, j);
    if (off > 0) CHECK(v < 1.0);
    if (off == 0) CHECK(v == 1.0);
  }
}

TEST_CASE("k=2 qwk equals cohen kappa") {
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionMatrix m = random_matrix(rng, 2);
    if (degenerate(m)) continue;
    bool kappa_defined = true;
    double ck = 0.0;
    try {
      ck = cohen_kappa(m);
    } catch (const UndefinedKappaError&) {
      kappa_defined = false;
    }
    if (!kappa_defined) continue;
    CHECK(std::abs(qwk(m) - ck) < 1e-12);
  }
}

TEST_CASE("metrics invariant under paired permutation") {
  Rng rng = make_rng(17);
  std::vector<int> a, b;
  for (int i = 0; i < 60; ++i) {
    a.push_back(static_cast<int>(rand_index(rng, 4)));
    b.push_back(static_cast<int>(rand_index(rng, 4)));
  }
  std::vector<std::size_t> perm(a.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  shuffle_vec(perm, rng);
  std::vector<int> ap, bp;
  for (std::size_t i : perm) {
    ap.push_back(a[static_cast<std::size_t>(i)]);
    bp.push_back(b[static_cast<std::size_t>(i)]);
  }
  CHECK(qwk(confusion(a, b, 4)) == doctest::Approx(qwk(confusion(ap, bp, 4))).epsilon(1e-15));
  CHECK(exact_agreement(confusion(a, b, 4)) ==
        doctest::Approx(exact_agreement(confusion(ap, bp, 4))));
}

TEST_CASE("paper-literal variant is exposed but nonstandard") {
  // Complete agreement does NOT give 1 under the literal reading; that is the
  // documented reason the standard QWK is the default.
  auto m = confusion({0, 1, 0, 1}, {0, 1, 0, 1}, 2);
  double literal = qwk_paper_literal(m);
  CHECK(literal != doctest::Approx(1.0));
  CHECK(qwk(m) == 1.0);
  // and on a fully concentrated matrix the denominator vanishes
  CHECK_THROWS_AS(qwk_paper_literal(confusion({0, 0}, {0, 0}, 2)), UndefinedKappaError);
}

TEST_CASE("compare engine to human") {
  std::vector<int> initial = {0, 1, 2, 2, 1, 0, 2, 1};
  std::vector<int> reliability = {0, 1, 1, 2, 1, 0, 2, 2};
  auto r = compare_engine_to_human(initial, reliability, initial, 3);
  CHECK(r.qwk_engine == 1.0);
  CHECK(r.engine_at_least_human);

  auto r2 = compare_engine_to_human(initial, reliability, reliability, 3);
  CHECK(r2.qwk_engine == doctest::Approx(r2.qwk_human).epsilon(1e-12));

  // randomized triple, verified against independent recomputation
  Rng rng = make_rng(55);
  std::vector<int> pred;
  for (std::size_t i = 0; i < initial.size(); ++i)
    pred.push_back(static_cast<int>(rand_index(rng, 3)));
  auto r3 = compare_engine_to_human(initial, reliability, pred, 3);
  CHECK(r3.qwk_engine ==
        doctest::Approx(static_cast<double>(oracle_qwk(confusion(pred, initial, 3))))
            .epsilon(1e-12));
  CHECK(r3.qwk_human ==
        doctest::Approx(static_cast<double>(oracle_qwk(confusion(reliability, initial, 3))))
            .epsilon(1e-12));
}

TEST_CASE("report TSV schema") {
  CHECK(engine_human_tsv_header() == "item\tn\tqwk_engine\tqwk_human\tacc_engine\tacc_human");
  EngineHumanReport r;
  r.n = 4;
  r.qwk_engine = 1.0;
  auto row = engine_human_tsv_row(3, r);
  CHECK(row.substr(0, 2) == "3\t");
  CHECK(row.find("1.000000") != std::string::npos);
}
