#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "aes/corpus.hpp"

using namespace aes;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path("/tmp/aes_test_" + name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

const char* kGoodTsv =
    "essay_id\tessay_set\tessay\trater1_domain1\trater2_domain1\tdomain1_score\n"
    "1\t1\tthe cat sat on the mat\t2\t3\t2\n"
    "2\t1\ta dog ran far away\t4\t4\t4\n"
    "3\t2\tshort answer here\t1\t0\t1\n";

}  // namespace

TEST_CASE("load_tsv well-formed") {
  TempFile f("good.tsv", kGoodTsv);
  Corpus c = load_tsv(f.path);
  REQUIRE(c.essays.size() == 3);
  CHECK(c.essays[0].essay_id == 1);
  CHECK(c.essays[0].item == 1);
  CHECK(c.essays[0].rater1 == 2);
  CHECK(c.essays[0].rater2 == 3);
  CHECK(c.essays[0].resolved == 2);
  REQUIRE(c.items.size() == 2);
  // ranges observed from the data, over all three score columns
  CHECK(c.spec_for(1).min_score == 2);
  CHECK(c.spec_for(1).max_score == 4);
  CHECK(c.spec_for(2).min_score == 0);
  CHECK(c.spec_for(2).max_score == 1);
}

TEST_CASE("load_tsv row-level errors carry line numbers") {
  TempFile bad_score("bad_score.tsv",
                     "essay_id\tessay_set\tessay\trater1_domain1\trater2_domain1\tdomain1_score\n"
                     "1\t1\tfine essay\t2\t3\t2\n"
                     "2\t1\tanother essay\tabc\t3\t2\n");
  try {
    load_tsv(bad_score.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  TempFile empty_essay("empty_essay.tsv",
                       "essay_id\tessay_set\tessay\trater1_domain1\trater2_domain1\tdomain1_score\n"
                       "1\t1\t \t2\t3\t2\n");
  CHECK_THROWS_AS(load_tsv(empty_essay.path), ParseError);

  TempFile missing_col("missing_col.tsv", "essay_id\tessay\n1\thello\n");
  CHECK_THROWS_AS(load_tsv(missing_col.path), ParseError);
}

TEST_CASE("load after emit is the identity") {
  TempFile f("roundtrip.tsv", kGoodTsv);
  Corpus c = load_tsv(f.path);
  emit_tsv(c, "/tmp/aes_test_roundtrip_out.tsv");
  Corpus c2 = load_tsv("/tmp/aes_test_roundtrip_out.tsv");
  REQUIRE(c2.essays.size() == c.essays.size());
  for (std::size_t i = 0; i < c.essays.size(); ++i) {
    CHECK(c2.essays[i].essay_id == c.essays[i].essay_id);
    CHECK(c2.essays[i].item == c.essays[i].item);
    CHECK(c2.essays[i].text == c.essays[i].text);
    CHECK(c2.essays[i].rater1 == c.essays[i].rater1);
    CHECK(c2.essays[i].rater2 == c.essays[i].rater2);
    CHECK(c2.essays[i].resolved == c.essays[i].resolved);
  }
  std::remove("/tmp/aes_test_roundtrip_out.tsv");
}

TEST_CASE("sidecar spec validates ranges") {
  TempFile f("sidecar_data.tsv", kGoodTsv);
  std::vector<ItemSpec> side = {{1, 0, 6}, {2, 0, 3}};
  Corpus c = load_tsv(f.path, side);
  CHECK(c.spec_for(1).max_score == 6);
  std::vector<ItemSpec> narrow = {{1, 0, 3}, {2, 0, 3}};  // item 1 has a 4
  CHECK_THROWS_AS(load_tsv(f.path, narrow), ValueError);

  TempFile spec_file("spec.tsv", "item\tmin_score\tmax_score\n1\t0\t6\n2\t0\t3\n");
  auto loaded = load_item_spec_tsv(spec_file.path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].max_score == 6);
}

TEST_CASE("to_labels maps score range to contiguous labels") {
  Corpus c;
  c.essays.push_back({10, 1, "text a", 2, 2, 2});
  c.essays.push_back({11, 1, "text b", 12, 12, 12});
  ItemSpec spec{1, 2, 12};
  auto labeled = to_labels(c, {0, 1}, spec);
  CHECK(labeled[0].label == 0);
  CHECK(labeled[1].label == 10);
  CHECK(label_to_score(0, spec) == 2);
  CHECK(label_to_score(10, spec) == 12);
  // round trip on the whole range
  for (int s = spec.min_score; s <= spec.max_score; ++s) {
    std::size_t label = static_cast<std::size_t>(s - spec.min_score);
    CHECK(label_to_score(label, spec) == s);
  }
  // ordering preserved
  CHECK(labeled[0].label < labeled[1].label);
  c.essays.push_back({12, 1, "text c", 13, 13, 13});
  CHECK_THROWS_AS(to_labels(c, {2}, spec), ValueError);
}

TEST_CASE("kfold geometry on 10 essays") {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < 10; ++i) ids.push_back(i);
  auto folds = kfold_splits(ids, 42);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.train.size() == 6);
    CHECK(f.test.size() == 2);
    CHECK(f.validation.size() == 2);
    // partition: no overlaps, full coverage
    std::set<std::size_t> all;
    for (auto v : f.train) all.insert(v);
    for (auto v : f.test) all.insert(v);
    for (auto v : f.validation) all.insert(v);
    CHECK(all.size() == 10);
  }
}

TEST_CASE("kfold determinism and validation tiling") {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < 23; ++i) ids.push_back(i * 7);
  auto a = kfold_splits(ids, 9);
  auto b = kfold_splits(ids, 9);
  for (int f = 0; f < 5; ++f) {
    CHECK(a[f].train == b[f].train);
    CHECK(a[f].test == b[f].test);
    CHECK(a[f].validation == b[f].validation);
  }
  // the five validation folds tile the corpus with no duplicates
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& f : a) {
    for (auto v : f.validation) seen.insert(v);
    total += f.validation.size();
  }
  CHECK(total == ids.size());
  CHECK(seen.size() == ids.size());
  // sizes within rounding of 60/20/20
  for (const auto& f : a) {
    CHECK(f.validation.size() >= 4);
    CHECK(f.validation.size() <= 5);
    CHECK(f.train.size() + f.test.size() + f.validation.size() == ids.size());
  }
  CHECK_THROWS_AS(kfold_splits({1, 2, 3, 4}, 1), ValueError);
}

TEST_CASE("remove_stopwords") {
  std::set<std::string> the = {"the"};
  CHECK(remove_stopwords("the cat sat", the) == "cat sat");
  CHECK(remove_stopwords("cat   sat", the) == "cat sat");  // whitespace collapsed
  CHECK(remove_stopwords("The THE the", the) == "");
  CHECK(remove_stopwords("the cat, the hat.", the) == "cat , hat .");
  CHECK(builtin_stopwords().size() == 127);
  CHECK(builtin_stopwords().count("the") == 1);
}
