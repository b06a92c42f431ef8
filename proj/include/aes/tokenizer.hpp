#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "aes/errors.hpp"
#include "aes/rng.hpp"

namespace aes {

// Subword vocabulary built by greedy pair merging over the (lowercased)
// corpus. Word-internal pieces carry the "##" continuation prefix in their
// entry string, so piece ids distinguish word starts from continuations.
class Vocab {
 public:
  static constexpr std::size_t pad_id = 0;
  static constexpr std::size_t unk_id = 1;
  static constexpr std::size_t cls_id = 2;
  static constexpr std::size_t sep_id = 3;
  static constexpr std::size_t mask_id = 4;
  static constexpr std::size_t reserved_count = 5;
  static constexpr const char* continuation_marker = "##";

  // Greedy pair-merge construction until the vocabulary reaches target_size
  // (or no pair is left to merge). Deterministic: frequency ties break on the
  // lexicographically smallest (left, right) pair.
  static Vocab build(const std::vector<std::string>& corpus, std::size_t target_size);

  static Vocab from_pieces(const std::vector<std::string>& pieces);  // after the 5 reserved
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;
  std::vector<std::string> lines() const;  // one piece per line, line number = id

  std::size_t size() const { return pieces_.size(); }
  bool has(const std::string& piece) const { return ids_.count(piece) > 0; }
  std::size_t id_of(const std::string& piece) const;
  const std::string& piece(std::size_t id) const;
  bool is_special(std::size_t id) const { return id < reserved_count; }

 private:
  Vocab() = default;
  void add_piece(const std::string& piece);
  std::vector<std::string> pieces_;
  std::map<std::string, std::size_t> ids_;
};

enum class ClsPlacement {
  bert,   // [CLS] first, [SEP] terminates the real tokens
  xlnet,  // ... [SEP] [CLS]: the classification token is the last real token
};

struct EncodedSeq {
  std::vector<std::size_t> ids;       // length max_len
  std::vector<int> attention_keep;    // 1 = real token, 0 = padding
  std::vector<std::size_t> segment_ids;
  std::size_t true_length = 0;
  ClsPlacement placement = ClsPlacement::bert;

  std::size_t cls_index() const {
    return placement == ClsPlacement::bert ? 0 : true_length - 1;
  }
};

// Greedy longest-match segmentation of one lowercased word. Continuation
// positions prefer "##" entries and fall back to single-character pieces;
// characters never seen in training become [UNK].
std::vector<std::size_t> segment_word(const std::string& word, const Vocab& vocab);

// Body piece ids of a whole text (no specials, no truncation).
std::vector<std::size_t> piece_ids(const std::string& text, const Vocab& vocab);

// Rendered pieces with "##" continuation prefixes, for inspection.
std::vector<std::string> piece_strings(const std::string& text, const Vocab& vocab);

// Wrap a window of body ids with [CLS]/[SEP] per placement and pad to max_len.
EncodedSeq wrap_ids(const std::vector<std::size_t>& body, const Vocab& vocab,
                    std::size_t max_len, ClsPlacement placement);

// Full encode: segment, truncate to max_len-2, wrap, pad.
EncodedSeq encode(const std::string& text, const Vocab& vocab, std::size_t max_len,
                  ClsPlacement placement);

// Sentence-pair encode (BERT placement): [CLS] a [SEP] b [SEP] with segment
// ids 0/1; used by the next-sentence toy objective.
EncodedSeq encode_pair(const std::string& a, const std::string& b, const Vocab& vocab,
                       std::size_t max_len);

std::string decode(const std::vector<std::size_t>& ids, const Vocab& vocab);

struct MlmMask {
  std::vector<std::size_t> masked_ids;       // input with [MASK] substituted
  std::vector<std::size_t> target_positions;
  std::vector<std::size_t> target_ids;       // original ids at those positions
};

// Masks max(1, round(rate * maskable)) non-special real tokens; [CLS], [SEP]
// and [PAD] are never selected.
MlmMask mask_for_mlm(const EncodedSeq& seq, double rate, Rng& rng);

}  // namespace aes
