#pragma once

#include <string>
#include <vector>

namespace aes {

std::string to_lower_ascii(std::string s);

// Word tokens are runs of alphanumerics (plus apostrophes inside words);
// every other non-space character is its own single-character token.
std::vector<std::string> split_tokens(const std::string& text);

// Alphanumeric word tokens only, lowercased (the bag-of-words tokenizer).
std::vector<std::string> split_words_lower(const std::string& text);

std::string join(const std::vector<std::string>& parts, const std::string& sep);

std::string trim(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);

}  // namespace aes
