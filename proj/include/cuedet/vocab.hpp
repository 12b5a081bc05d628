#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cuedet/data.hpp"

namespace cuedet {

// Whitespace + punctuation tokenizer shared by every encoder stack, so token
// positions line up across the sentiment, aggression, and hate modules.
struct Vocabulary {
  static constexpr int kCls = 0;
  static constexpr int kPad = 1;
  static constexpr int kUnk = 2;
  static constexpr int kSep = 3;

  std::vector<std::string> id_to_token;  // dense ids 0..V-1, specials first
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> mask;  // 1 = real token, 0 = PAD
  int cls_index = 0;

  int length() const { return static_cast<int>(ids.size()); }
  int real_length() const {
    int n = 0;
    for (int m : mask) n += m;
    return n;
  }
};

// Splits on whitespace; ASCII punctuation becomes its own token.
std::vector<std::string> split_tokens(const std::string& text);

// Frequency-ranked vocabulary over the corpora (ties break lexicographically),
// capped at max_size entries including the four specials.
Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, int max_size);

// [CLS] + token ids (UNK for out-of-vocabulary), truncated to max_len and
// PAD-extended to exactly max_len.
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

// Same sequence without the PAD tail; predictions are padding-invariant, so
// the two forms are interchangeable and this one is cheaper to encode.
TokenSequence tokenize_tight(const std::string& text, const Vocabulary& vocab, int max_len);

// The k surface strings aligned with tokenize_tight output ("[CLS]" first).
std::vector<std::string> display_tokens(const std::string& text, int max_len);

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace cuedet
