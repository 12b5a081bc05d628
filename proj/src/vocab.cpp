#include "cuedet/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace cuedet {

namespace {
const char* kSpecials[] = {"[CLS]", "[PAD]", "[UNK]", "[SEP]"};

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
}  // namespace

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, int max_size) {
  if (corpora.empty()) throw validation_error("build_vocab: no corpora");
  if (max_size < 4) throw validation_error("build_vocab: max_size below special-token count");
  std::map<std::string, std::size_t> freq;
  for (const Corpus* c : corpora)
    for (const Record& r : c->records)
      for (const auto& tok : split_tokens(r.text)) freq[tok] += 1;

  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  for (const char* s : kSpecials) v.id_to_token.emplace_back(s);
  for (const auto& [tok, n] : items) {
    if (v.size() >= max_size) break;
    v.id_to_token.push_back(tok);
  }
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

namespace {
TokenSequence tokenize_core(const std::string& text, const Vocabulary& vocab, int max_len,
                            bool pad_to_max) {
  if (text.empty()) throw validation_error("tokenize: empty text");
  if (max_len < 1) throw validation_error("tokenize: max_len must be >= 1");
  TokenSequence seq;
  seq.cls_index = 0;
  seq.ids.push_back(Vocabulary::kCls);
  seq.mask.push_back(1);
  for (const auto& tok : split_tokens(text)) {
    if (seq.length() >= max_len) break;
    seq.ids.push_back(vocab.id_of(tok));
    seq.mask.push_back(1);
  }
  if (pad_to_max) {
    while (seq.length() < max_len) {
      seq.ids.push_back(Vocabulary::kPad);
      seq.mask.push_back(0);
    }
  }
  return seq;
}
}  // namespace

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  return tokenize_core(text, vocab, max_len, true);
}

TokenSequence tokenize_tight(const std::string& text, const Vocabulary& vocab, int max_len) {
  return tokenize_core(text, vocab, max_len, false);
}

std::vector<std::string> display_tokens(const std::string& text, int max_len) {
  std::vector<std::string> out;
  out.emplace_back("[CLS]");
  for (const auto& tok : split_tokens(text)) {
    if (static_cast<int>(out.size()) >= max_len) break;
    out.push_back(tok);
  }
  return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write vocabulary: " + path);
  for (const auto& tok : vocab.id_to_token) out << tok << "\n";
  if (!out) throw io_error("failed writing vocabulary: " + path);
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.id_to_token.push_back(line);
  }
  for (int i = 0; i < 4; ++i) {
    if (v.size() <= i || v.id_to_token[i] != kSpecials[i])
      throw io_error("vocabulary missing special tokens: " + path);
  }
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

}  // namespace cuedet
