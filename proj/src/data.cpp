#include "cuedet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace cuedet {

namespace {
using json = nlohmann::ordered_json;
}

std::string fnv1a_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

double Corpus::hateful_fraction() const {
  if (records.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& r : records) pos += (r.label == 1);
  return static_cast<double>(pos) / static_cast<double>(records.size());
}

std::vector<int> Corpus::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

int binarize_score(double score) {
  if (!std::isfinite(score)) throw validation_error("binarize_score: score must be finite");
  return score < 0.5 ? 0 : 1;
}

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

namespace {

Record record_from_fields(const std::string& text, std::optional<int> label,
                          std::optional<double> raw_score, const std::string& platform,
                          std::optional<std::string> target, std::optional<std::string> type,
                          int n_classes, std::size_t line_no) {
  Record r;
  r.text = normalize_text(text);
  if (r.text.empty())
    throw schema_error("line " + std::to_string(line_no) + ": text empty after normalization");
  if (!label && !raw_score)
    throw schema_error("line " + std::to_string(line_no) + ": record has neither label nor raw_score");
  if (raw_score) {
    r.raw_score = raw_score;
    r.label = binarize_score(*raw_score);
    if (label && *label != r.label)
      throw schema_error("line " + std::to_string(line_no) +
                         ": label disagrees with binarized raw_score");
  } else {
    r.label = *label;
  }
  if (r.label < 0 || r.label >= n_classes)
    throw schema_error("line " + std::to_string(line_no) + ": label " +
                       std::to_string(r.label) + " outside 0.." + std::to_string(n_classes - 1));
  r.platform = platform;
  r.hate_target = std::move(target);
  r.hate_type = std::move(type);
  return r;
}

Corpus load_jsonl(std::istream& in, const std::string& platform, const LoadOptions& opts) {
  Corpus corpus;
  corpus.platform = platform;
  corpus.n_classes = opts.n_classes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw schema_error("line " + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    if (!j.contains("text") || !j["text"].is_string())
      throw schema_error("line " + std::to_string(line_no) + ": missing text field");
    std::optional<int> label;
    if (j.contains("label")) {
      if (!j["label"].is_number_integer())
        throw schema_error("line " + std::to_string(line_no) + ": label must be an integer");
      label = j["label"].get<int>();
    }
    std::optional<double> raw;
    if (j.contains("raw_score")) {
      if (!j["raw_score"].is_number())
        throw schema_error("line " + std::to_string(line_no) + ": raw_score must be a number");
      raw = j["raw_score"].get<double>();
      if (!std::isfinite(*raw))
        throw schema_error("line " + std::to_string(line_no) + ": raw_score must be finite");
    }
    std::optional<std::string> target, type;
    if (j.contains("hate_target") && !j["hate_target"].is_null())
      target = j["hate_target"].get<std::string>();
    if (j.contains("hate_type") && !j["hate_type"].is_null())
      type = j["hate_type"].get<std::string>();
    corpus.records.push_back(record_from_fields(j["text"].get<std::string>(), label, raw,
                                                platform, std::move(target), std::move(type),
                                                opts.n_classes, line_no));
  }
  return corpus;
}

// RFC-4180: quoted fields may contain commas, doubled quotes, and newlines.
std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get(c);
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          row_started = false;
        }
        break;
      default:
        field.push_back(c);
        row_started = true;
        break;
    }
  }
  if (row_started || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

Corpus load_csv(std::istream& in, const std::string& platform, const LoadOptions& opts) {
  auto rows = parse_csv(in);
  if (rows.empty()) throw schema_error("csv: missing header row");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int text_col = col(opts.csv.text);
  const int label_col = col(opts.csv.label);
  const int raw_col = col(opts.csv.raw_score);
  const int target_col = col(opts.csv.hate_target);
  const int type_col = col(opts.csv.hate_type);
  if (text_col < 0) throw schema_error("csv: no column named '" + opts.csv.text + "'");

  Corpus corpus;
  corpus.platform = platform;
  corpus.n_classes = opts.n_classes;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t line_no = i + 1;
    auto cell = [&](int c) -> std::string {
      return (c >= 0 && c < static_cast<int>(r.size())) ? r[c] : std::string();
    };
    std::optional<int> label;
    std::optional<double> raw;
    if (!cell(label_col).empty()) {
      try {
        label = std::stoi(cell(label_col));
      } catch (...) {
        throw schema_error("line " + std::to_string(line_no) + ": label not an integer");
      }
    }
    if (!cell(raw_col).empty()) {
      try {
        raw = std::stod(cell(raw_col));
      } catch (...) {
        throw schema_error("line " + std::to_string(line_no) + ": raw_score not a number");
      }
      if (!std::isfinite(*raw))
        throw schema_error("line " + std::to_string(line_no) + ": raw_score must be finite");
    }
    std::optional<std::string> target, type;
    if (!cell(target_col).empty()) target = cell(target_col);
    if (!cell(type_col).empty()) type = cell(type_col);
    corpus.records.push_back(record_from_fields(cell(text_col), label, raw, platform,
                                                std::move(target), std::move(type),
                                                opts.n_classes, line_no));
  }
  return corpus;
}

}  // namespace

Corpus load_corpus(const std::string& path, CorpusFormat format,
                   const std::string& platform, const LoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open corpus file: " + path);
  Corpus corpus = format == CorpusFormat::jsonl ? load_jsonl(in, platform, opts)
                                                : load_csv(in, platform, opts);
  if (corpus.records.empty()) throw validation_error("empty corpus: " + path);
  corpus.provenance = path + "#" + (format == CorpusFormat::jsonl ? "jsonl" : "csv");
  return corpus;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write corpus file: " + path);
  for (const auto& r : corpus.records) {
    json j;
    j["text"] = r.text;
    if (r.raw_score)
      j["raw_score"] = *r.raw_score;
    else
      j["label"] = r.label;
    j["platform"] = r.platform;
    if (r.hate_target) j["hate_target"] = *r.hate_target;
    if (r.hate_type) j["hate_type"] = *r.hate_type;
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("failed writing corpus file: " + path);
}

std::string load_summary(const Corpus& corpus) {
  std::ostringstream os;
  os << "loaded " << corpus.platform << ": " << corpus.size() << " records, hateful fraction "
     << std::fixed;
  os.precision(4);
  os << corpus.hateful_fraction();
  return os.str();
}

Splits stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  const double sum = spec.train + spec.val + spec.test;
  if (spec.train <= 0 || spec.val <= 0 || spec.test <= 0 || std::abs(sum - 1.0) > 1e-9)
    throw validation_error("split ratios must be positive and sum to 1");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < corpus.records.size(); ++i)
    by_class[corpus.records[i].label].push_back(i);
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < 10)
      throw validation_error("class " + std::to_string(label) + " has only " +
                             std::to_string(idx.size()) + " records (need >= 10)");
  }

  Rng rng = make_rng(spec.seed);
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    // Largest-remainder allocation keeps each split within one record of the
    // exact per-class proportion while using every record exactly once.
    const double n = static_cast<double>(idx.size());
    const double want[3] = {spec.train * n, spec.val * n, spec.test * n};
    std::size_t take[3];
    double rem[3];
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      take[s] = static_cast<std::size_t>(std::floor(want[s]));
      rem[s] = want[s] - std::floor(want[s]);
      used += take[s];
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int a, int b) {
      return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;
    });
    for (int s = 0; used < idx.size(); ++s) {
      take[order[s % 3]] += 1;
      ++used;
    }
    std::size_t at = 0;
    for (std::size_t i = 0; i < take[0]; ++i) train_idx.push_back(idx[at++]);
    for (std::size_t i = 0; i < take[1]; ++i) val_idx.push_back(idx[at++]);
    for (std::size_t i = 0; i < take[2]; ++i) test_idx.push_back(idx[at++]);
  }
  // Corpus order within each split keeps the output stable across class maps.
  auto collect = [&](std::vector<std::size_t>& idx, const char* tag) {
    std::sort(idx.begin(), idx.end());
    Corpus part;
    part.platform = corpus.platform;
    part.n_classes = corpus.n_classes;
    part.provenance = corpus.provenance + "#" + tag;
    part.records.reserve(idx.size());
    for (std::size_t i : idx) part.records.push_back(corpus.records[i]);
    return part;
  };
  Splits out;
  out.train = collect(train_idx, "train");
  out.val = collect(val_idx, "val");
  out.test = collect(test_idx, "test");
  return out;
}

ClassWeights class_weights(const std::vector<int>& labels, int n_classes) {
  if (labels.empty()) throw validation_error("class_weights: empty label list");
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= n_classes) throw validation_error("class_weights: label out of range");
    counts[static_cast<std::size_t>(l)] += 1;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0)
      throw validation_error("class_weights: class " + std::to_string(c) + " absent");
  }
  ClassWeights w;
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    w.weight.push_back(n / (static_cast<double>(n_classes) * static_cast<double>(counts[c])));
  return w;
}

}  // namespace cuedet
