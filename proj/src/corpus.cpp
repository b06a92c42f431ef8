#include "aes/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "aes/text.hpp"

namespace aes {

const ItemSpec& Corpus::spec_for(int item) const {
  for (const auto& s : items) {
    if (s.item == item) return s;
  }
  throw ValueError("no item spec for item " + std::to_string(item));
}

std::vector<std::size_t> Corpus::indices_of_item(int item) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < essays.size(); ++i) {
    if (essays[i].item == item) out.push_back(i);
  }
  return out;
}

std::vector<int> Corpus::item_ids() const {
  std::vector<int> out;
  for (const auto& s : items) out.push_back(s.item);
  return out;
}

namespace {

long parse_long(const std::string& s, std::size_t line_no, const std::string& column) {
  std::string t = trim(s);
  if (t.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty " + column);
  }
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(t, &pos);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": non-integer " + column +
                     " value '" + t + "'");
  }
  if (pos != t.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": non-integer " + column +
                     " value '" + t + "'");
  }
  return v;
}

Corpus load_tsv_impl(const std::string& path, const std::vector<ItemSpec>* sidecar,
                     bool require_scores) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open TSV file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty TSV file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  auto cols = split(header, '\t');
  std::map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < cols.size(); ++i) col_of[trim(cols[i])] = i;
  std::vector<std::string> required = {"essay_id", "essay_set", "essay"};
  if (require_scores) {
    required.insert(required.end(),
                    {"rater1_domain1", "rater2_domain1", "domain1_score"});
  }
  for (const auto& name : required) {
    if (!col_of.count(name)) {
      throw ParseError("missing column '" + name + "' in " + path);
    }
  }
  bool has_scores = col_of.count("rater1_domain1") && col_of.count("rater2_domain1") &&
                    col_of.count("domain1_score");

  Corpus corpus;
  std::map<int, std::pair<int, int>> observed;  // item -> (min, max) over all scores
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != cols.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(cols.size()) + " columns, got " +
                       std::to_string(fields.size()));
    }
    ScoredEssay e;
    e.essay_id = parse_long(fields[col_of["essay_id"]], line_no, "essay_id");
    e.item = static_cast<int>(parse_long(fields[col_of["essay_set"]], line_no, "essay_set"));
    e.text = fields[col_of["essay"]];
    if (trim(e.text).empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty essay text");
    }
    if (has_scores) {
      e.rater1 = static_cast<int>(parse_long(fields[col_of["rater1_domain1"]], line_no, "rater1_domain1"));
      e.rater2 = static_cast<int>(parse_long(fields[col_of["rater2_domain1"]], line_no, "rater2_domain1"));
      e.resolved = static_cast<int>(parse_long(fields[col_of["domain1_score"]], line_no, "domain1_score"));
    }
    auto it = observed.find(e.item);
    int lo = std::min({e.rater1, e.rater2, e.resolved});
    int hi = std::max({e.rater1, e.rater2, e.resolved});
    if (it == observed.end()) {
      observed[e.item] = {lo, hi};
    } else {
      it->second.first = std::min(it->second.first, lo);
      it->second.second = std::max(it->second.second, hi);
    }
    corpus.essays.push_back(std::move(e));
  }
  if (sidecar) {
    corpus.items = *sidecar;
    for (const auto& [item, mm] : observed) {
      (void)mm;
      bool found = false;
      for (const auto& s : corpus.items) found = found || s.item == item;
      if (!found) throw ValueError("item " + std::to_string(item) + " missing from spec sidecar");
    }
    for (const auto& e : corpus.essays) {
      const ItemSpec& s = corpus.spec_for(e.item);
      for (int score : {e.rater1, e.rater2, e.resolved}) {
        if (score < s.min_score || score > s.max_score) {
          throw ValueError("essay " + std::to_string(e.essay_id) + ": score " +
                           std::to_string(score) + " outside declared range [" +
                           std::to_string(s.min_score) + "," + std::to_string(s.max_score) + "]");
        }
      }
    }
  } else {
    for (const auto& [item, mm] : observed) {
      ItemSpec s;
      s.item = item;
      s.min_score = mm.first;
      s.max_score = mm.second;
      if (s.max_score == s.min_score) s.max_score = s.min_score + 1;  // degenerate single-score item
      corpus.items.push_back(s);
    }
  }
  std::sort(corpus.items.begin(), corpus.items.end(),
            [](const ItemSpec& a, const ItemSpec& b) { return a.item < b.item; });
  return corpus;
}

}  // namespace

Corpus load_tsv(const std::string& path) { return load_tsv_impl(path, nullptr, true); }

Corpus load_tsv(const std::string& path, const std::vector<ItemSpec>& sidecar) {
  return load_tsv_impl(path, &sidecar, true);
}

Corpus load_tsv_unscored(const std::string& path) {
  return load_tsv_impl(path, nullptr, false);
}

std::vector<ItemSpec> load_item_spec_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open item spec file: " + path);
  std::string header;
  std::getline(in, header);
  std::vector<ItemSpec> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(line_no) + ": expected item, min_score, max_score");
    }
    ItemSpec s;
    s.item = static_cast<int>(parse_long(fields[0], line_no, "item"));
    s.min_score = static_cast<int>(parse_long(fields[1], line_no, "min_score"));
    s.max_score = static_cast<int>(parse_long(fields[2], line_no, "max_score"));
    if (s.max_score <= s.min_score) {
      throw ValueError("line " + std::to_string(line_no) + ": max_score must exceed min_score");
    }
    out.push_back(s);
  }
  return out;
}

void emit_tsv(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write TSV file: " + path);
  out << "essay_id\tessay_set\tessay\trater1_domain1\trater2_domain1\tdomain1_score\n";
  for (const auto& e : corpus.essays) {
    out << e.essay_id << '\t' << e.item << '\t' << e.text << '\t' << e.rater1 << '\t'
        << e.rater2 << '\t' << e.resolved << '\n';
  }
}

std::vector<LabeledEssay> to_labels(const Corpus& corpus,
                                    const std::vector<std::size_t>& essay_indices,
                                    const ItemSpec& spec) {
  std::vector<LabeledEssay> out;
  out.reserve(essay_indices.size());
  for (std::size_t idx : essay_indices) {
    const auto& e = corpus.essays.at(idx);
    if (e.resolved < spec.min_score || e.resolved > spec.max_score) {
      throw ValueError("essay " + std::to_string(e.essay_id) + ": resolved score " +
                       std::to_string(e.resolved) + " outside range [" +
                       std::to_string(spec.min_score) + "," +
                       std::to_string(spec.max_score) + "]");
    }
    out.push_back({idx, static_cast<std::size_t>(e.resolved - spec.min_score)});
  }
  return out;
}

int label_to_score(std::size_t label, const ItemSpec& spec) {
  return spec.min_score + static_cast<int>(label);
}

std::vector<FoldSplit> kfold_splits(const std::vector<std::size_t>& essay_indices,
                                    std::uint64_t seed) {
  std::size_t n = essay_indices.size();
  if (n < 5) {
    throw ValueError("kfold_splits: need at least 5 essays, got " + std::to_string(n));
  }
  std::vector<std::size_t> order = essay_indices;
  Rng rng = make_rng(seed);
  shuffle_vec(order, rng);
  auto chunk_begin = [n](std::size_t c) { return c * n / 5; };
  std::vector<FoldSplit> folds;
  for (int v = 0; v < 5; ++v) {
    FoldSplit f;
    f.fold = v;
    std::size_t t = static_cast<std::size_t>((v + 1) % 5);
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t i = chunk_begin(c); i < chunk_begin(c + 1); ++i) {
        if (c == static_cast<std::size_t>(v)) {
          f.validation.push_back(order[i]);
        } else if (c == t) {
          f.test.push_back(order[i]);
        } else {
          f.train.push_back(order[i]);
        }
      }
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

std::string remove_stopwords(const std::string& text,
                             const std::set<std::string>& stoplist) {
  auto tokens = split_tokens(text);
  std::vector<std::string> kept;
  for (auto& t : tokens) {
    if (!stoplist.count(to_lower_ascii(t))) kept.push_back(std::move(t));
  }
  return join(kept, " ");
}

const std::set<std::string>& builtin_stopwords() {
  static const std::set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
      "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
      "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does",
      "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
      "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
      "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
      "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
      "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out",
      "over", "own", "same", "she", "should", "so", "some", "such", "than", "that",
      "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
      "those", "through", "to", "too", "under", "until", "up", "very", "was", "we",
      "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
      "with", "would", "you", "your", "yours", "yourself", "yourselves"};
  return words;
}

std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open stop-word file: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string w = trim(line);
    if (!w.empty()) out.insert(to_lower_ascii(w));
  }
  return out;
}

}  // namespace aes
