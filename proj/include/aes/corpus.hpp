#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "aes/errors.hpp"
#include "aes/rng.hpp"

namespace aes {

struct ScoredEssay {
  long essay_id = 0;
  int item = 0;  // prompt / essay-set id
  std::string text;
  int rater1 = 0;    // initial score
  int rater2 = 0;    // reliability score
  int resolved = 0;  // resolved (gold) score
};

struct ItemSpec {
  int item = 0;
  int min_score = 0;
  int max_score = 0;
  std::size_t label_count() const { return static_cast<std::size_t>(max_score - min_score + 1); }
};

struct Corpus {
  std::vector<ScoredEssay> essays;
  std::vector<ItemSpec> items;

  const ItemSpec& spec_for(int item) const;
  std::vector<std::size_t> indices_of_item(int item) const;
  std::vector<int> item_ids() const;
};

// ASAP-style TSV with one header row and columns essay_id, essay_set, essay,
// rater1_domain1, rater2_domain1, domain1_score (any column order). Score
// ranges are inferred per item from the data unless a sidecar spec is given.
Corpus load_tsv(const std::string& path);
Corpus load_tsv(const std::string& path, const std::vector<ItemSpec>& sidecar);

// Unscored variant for new essays: only essay_id, essay_set and essay are
// required; absent rater/resolved columns read as zero.
Corpus load_tsv_unscored(const std::string& path);

// Sidecar TSV: item, min_score, max_score.
std::vector<ItemSpec> load_item_spec_tsv(const std::string& path);

void emit_tsv(const Corpus& corpus, const std::string& path);

// Contiguous training labels for one item: label = resolved - min_score.
struct LabeledEssay {
  std::size_t corpus_index = 0;
  std::size_t label = 0;
};
std::vector<LabeledEssay> to_labels(const Corpus& corpus,
                                    const std::vector<std::size_t>& essay_indices,
                                    const ItemSpec& spec);
int label_to_score(std::size_t label, const ItemSpec& spec);

// Deterministic 60/20/20 split: the seeded shuffle is chunked into 5 equal
// pieces; validation fold v is chunk v, the test (development) fold is chunk
// (v+1) mod 5, training is the remaining three chunks.
struct FoldSplit {
  int fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;        // development set
  std::vector<std::size_t> validation;  // held-out evaluation set
};
std::vector<FoldSplit> kfold_splits(const std::vector<std::size_t>& essay_indices,
                                    std::uint64_t seed);

// Deletes tokens whose lowercase form is in the stoplist; remaining tokens
// are re-joined with single spaces (punctuation kept as separate tokens).
std::string remove_stopwords(const std::string& text,
                             const std::set<std::string>& stoplist);

// Built-in list of 127 common English function words.
const std::set<std::string>& builtin_stopwords();
std::set<std::string> load_stopwords(const std::string& path);

}  // namespace aes
