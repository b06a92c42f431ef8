#include "aes/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "aes/text.hpp"

namespace aes {

namespace {

const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool is_continuation(const std::string& piece) {
  return piece.size() > 2 && piece[0] == '#' && piece[1] == '#';
}

std::string surface(const std::string& piece) {
  return is_continuation(piece) ? piece.substr(2) : piece;
}

}  // namespace

void Vocab::add_piece(const std::string& piece) {
  if (ids_.count(piece)) return;
  ids_[piece] = pieces_.size();
  pieces_.push_back(piece);
}

std::size_t Vocab::id_of(const std::string& piece) const {
  auto it = ids_.find(piece);
  if (it == ids_.end()) throw ValueError("unknown piece: " + piece);
  return it->second;
}

const std::string& Vocab::piece(std::size_t id) const {
  if (id >= pieces_.size()) throw ValueError("piece id out of range: " + std::to_string(id));
  return pieces_[id];
}

Vocab Vocab::from_pieces(const std::vector<std::string>& pieces) {
  Vocab v;
  for (const char* r : kReserved) v.add_piece(r);
  for (const auto& p : pieces) v.add_piece(p);
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t target_size) {
  if (corpus.empty()) throw ValueError("build_vocab: empty corpus");

  // Word frequencies over the lowercased corpus.
  std::map<std::string, long> word_freq;
  for (const auto& doc : corpus) {
    for (const auto& tok : split_tokens(to_lower_ascii(doc))) word_freq[tok] += 1;
  }
  if (word_freq.empty()) throw ValueError("build_vocab: corpus has no tokens");

  // Working decomposition: first symbol plain, the rest continuation-marked.
  std::vector<std::pair<std::vector<std::string>, long>> words;
  std::set<std::string> alphabet;
  for (const auto& [word, freq] : word_freq) {
    std::vector<std::string> syms;
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string c(1, word[i]);
      alphabet.insert(c);
      syms.push_back(i == 0 ? c : continuation_marker + c);
    }
    words.emplace_back(std::move(syms), freq);
  }

  if (target_size < reserved_count + alphabet.size()) {
    throw ValueError("build_vocab: target size " + std::to_string(target_size) +
                     " below reserved + alphabet (" +
                     std::to_string(reserved_count + alphabet.size()) + ")");
  }

  Vocab v;
  for (const char* r : kReserved) v.add_piece(r);
  for (const auto& c : alphabet) v.add_piece(c);

  while (v.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const auto& [syms, freq] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        pair_freq[{syms[i], syms[i + 1]}] += freq;
      }
    }
    if (pair_freq.empty()) break;
    // Highest frequency; ties go to the lexicographically smallest pair
    // (std::map iteration order makes the first maximal entry exactly that).
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto& [left, right] = best->first;
    std::string merged = left + surface(right);
    for (auto& [syms, freq] : words) {
      (void)freq;
      std::vector<std::string> out;
      out.reserve(syms.size());
      std::size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(out);
    }
    v.add_piece(merged);  // no-op if an equal string was produced by an earlier merge
  }
  return v;
}

std::vector<std::string> Vocab::lines() const { return pieces_; }

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write vocab file: " + path);
  for (const auto& p : pieces_) out << p << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < reserved_count) {
      if (line != kReserved[line_no]) {
        throw ParseError("vocab line " + std::to_string(line_no + 1) +
                         ": expected reserved token " + kReserved[line_no]);
      }
    }
    v.add_piece(line);
    ++line_no;
  }
  if (v.size() < reserved_count) throw ParseError("vocab file too short: " + path);
  return v;
}

std::vector<std::size_t> segment_word(const std::string& word, const Vocab& vocab) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  bool at_start = true;
  while (pos < word.size()) {
    std::size_t best_len = 0;
    std::size_t best_id = Vocab::unk_id;
    for (std::size_t len = word.size() - pos; len >= 1; --len) {
      std::string cand = word.substr(pos, len);
      if (!at_start) cand = Vocab::continuation_marker + cand;
      if (vocab.has(cand)) {
        best_len = len;
        best_id = vocab.id_of(cand);
        break;
      }
      // Continuation positions fall back to the plain single-character piece.
      if (!at_start && len == 1 && vocab.has(word.substr(pos, 1))) {
        best_len = 1;
        best_id = vocab.id_of(word.substr(pos, 1));
        break;
      }
    }
    if (best_len == 0) {
      out.push_back(Vocab::unk_id);  // character never seen in training
      pos += 1;
    } else {
      out.push_back(best_id);
      pos += best_len;
    }
    at_start = false;
  }
  return out;
}

std::vector<std::size_t> piece_ids(const std::string& text, const Vocab& vocab) {
  std::vector<std::size_t> out;
  for (const auto& word : split_tokens(to_lower_ascii(text))) {
    auto ids = segment_word(word, vocab);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::vector<std::string> piece_strings(const std::string& text, const Vocab& vocab) {
  std::vector<std::string> out;
  for (const auto& word : split_tokens(to_lower_ascii(text))) {
    auto ids = segment_word(word, vocab);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::string& p = vocab.piece(ids[i]);
      if (i > 0 && !is_continuation(p) && ids[i] != Vocab::unk_id) {
        out.push_back(Vocab::continuation_marker + p);  // single-char fallback
      } else {
        out.push_back(p);
      }
    }
  }
  return out;
}

EncodedSeq wrap_ids(const std::vector<std::size_t>& body, const Vocab& vocab,
                    std::size_t max_len, ClsPlacement placement) {
  (void)vocab;
  if (max_len < 2) throw ValueError("encode: max_len must be >= 2");
  std::vector<std::size_t> real = body;
  if (real.size() > max_len - 2) real.resize(max_len - 2);
  EncodedSeq seq;
  seq.placement = placement;
  if (placement == ClsPlacement::bert) {
    seq.ids.push_back(Vocab::cls_id);
    seq.ids.insert(seq.ids.end(), real.begin(), real.end());
    seq.ids.push_back(Vocab::sep_id);
  } else {
    seq.ids.insert(seq.ids.end(), real.begin(), real.end());
    seq.ids.push_back(Vocab::sep_id);
    seq.ids.push_back(Vocab::cls_id);
  }
  seq.true_length = seq.ids.size();
  seq.ids.resize(max_len, Vocab::pad_id);
  seq.attention_keep.assign(max_len, 0);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.attention_keep[i] = 1;
  seq.segment_ids.assign(max_len, 0);
  return seq;
}

EncodedSeq encode(const std::string& text, const Vocab& vocab, std::size_t max_len,
                  ClsPlacement placement) {
  return wrap_ids(piece_ids(text, vocab), vocab, max_len, placement);
}

EncodedSeq encode_pair(const std::string& a, const std::string& b, const Vocab& vocab,
                       std::size_t max_len) {
  if (max_len < 3) throw ValueError("encode_pair: max_len must be >= 3");
  auto ida = piece_ids(a, vocab);
  auto idb = piece_ids(b, vocab);
  std::size_t budget = max_len - 3;
  std::size_t take_a = std::min(ida.size(), (budget + 1) / 2);
  std::size_t take_b = std::min(idb.size(), budget - take_a);
  take_a = std::min(ida.size(), budget - take_b);  // give leftover room back to a
  EncodedSeq seq;
  seq.placement = ClsPlacement::bert;
  seq.ids.push_back(Vocab::cls_id);
  seq.ids.insert(seq.ids.end(), ida.begin(), ida.begin() + take_a);
  seq.ids.push_back(Vocab::sep_id);
  std::size_t seg1_from = seq.ids.size();
  seq.ids.insert(seq.ids.end(), idb.begin(), idb.begin() + take_b);
  seq.ids.push_back(Vocab::sep_id);
  seq.true_length = seq.ids.size();
  seq.ids.resize(max_len, Vocab::pad_id);
  seq.attention_keep.assign(max_len, 0);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.attention_keep[i] = 1;
  seq.segment_ids.assign(max_len, 0);
  for (std::size_t i = seg1_from; i < seq.true_length; ++i) seq.segment_ids[i] = 1;
  return seq;
}

std::string decode(const std::vector<std::size_t>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t id : ids) {
    if (vocab.is_special(id)) continue;
    const std::string& p = vocab.piece(id);
    if (is_continuation(p)) {
      out += surface(p);
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

MlmMask mask_for_mlm(const EncodedSeq& seq, double rate, Rng& rng) {
  if (rate <= 0.0 || rate >= 1.0) {
    throw ValueError("mask_for_mlm: rate must be in (0,1), got " + std::to_string(rate));
  }
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < seq.true_length; ++i) {
    if (seq.ids[i] >= Vocab::reserved_count) maskable.push_back(i);
  }
  if (maskable.empty()) throw ValueError("mask_for_mlm: sequence has no maskable token");
  std::size_t n_targets = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(maskable.size())));
  n_targets = std::max<std::size_t>(1, std::min(n_targets, maskable.size()));
  // Partial Fisher-Yates: the first n_targets entries become the sample.
  for (std::size_t i = 0; i < n_targets; ++i) {
    std::size_t j = i + rand_index(rng, maskable.size() - i);
    std::swap(maskable[i], maskable[j]);
  }
  MlmMask out;
  out.masked_ids = seq.ids;
  std::vector<std::size_t> chosen(maskable.begin(), maskable.begin() + n_targets);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t pos : chosen) {
    out.target_positions.push_back(pos);
    out.target_ids.push_back(seq.ids[pos]);
    out.masked_ids[pos] = Vocab::mask_id;
  }
  return out;
}

}  // namespace aes
