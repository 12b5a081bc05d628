#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cuedet/common.hpp"

namespace cuedet {

// One labeled text. `label` is 0/1 for hate corpora; cue-pretraining corpora
// reuse the schema with class ids 0..n_classes-1.
struct Record {
  std::string text;
  int label = 0;
  std::string platform;
  std::optional<std::string> hate_target;
  std::optional<std::string> hate_type;
  std::optional<double> raw_score;

  bool operator==(const Record&) const = default;
};

struct Corpus {
  std::vector<Record> records;
  std::string platform;
  std::string provenance;  // "<path>#<format>" or "synthetic:<name>"
  int n_classes = 2;

  std::size_t size() const { return records.size(); }
  // Fraction of records labeled 1 (the "percent hateful" load statistic).
  double hateful_fraction() const;
  std::vector<int> labels() const;
};

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct ClassWeights {
  // weight[c] = N / (n_classes * N_c); balanced corpora give 1.0 per class.
  std::vector<double> weight;

  double non_hate() const { return weight.at(0); }
  double hate() const { return weight.at(1); }
};

enum class CorpusFormat { jsonl, csv };

struct CsvMapping {
  std::string text = "text";
  std::string label = "label";
  std::string raw_score = "raw_score";
  std::string hate_target = "hate_target";
  std::string hate_type = "hate_type";
};

struct LoadOptions {
  CsvMapping csv;
  // Accepted label arity. Hate corpora are binary; cue corpora may be wider.
  int n_classes = 2;
};

// Maps a continuous hate severity score to a binary label: 0 iff score < 0.5.
int binarize_score(double score);

// Collapses runs of whitespace to single spaces and trims the ends. Input is
// expected to be UTF-8; already-composed text passes through unchanged (no
// ICU dependency, so no recomposition of decomposed sequences).
std::string normalize_text(const std::string& text);

Corpus load_corpus(const std::string& path, CorpusFormat format,
                   const std::string& platform, const LoadOptions& opts = {});

// Writes the normalized one-record-per-line JSON form; load_corpus on the
// result reproduces the records exactly.
void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

// One-line load statistic: record count and hateful fraction.
std::string load_summary(const Corpus& corpus);

struct Splits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Deterministic stratified partition: per-class proportions in each split
// match the corpus within one record, and the three parts reassemble the
// corpus exactly.
Splits stratified_split(const Corpus& corpus, const SplitSpec& spec);

ClassWeights class_weights(const std::vector<int>& labels, int n_classes = 2);

}  // namespace cuedet
