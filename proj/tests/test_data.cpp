#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cuedet/data.hpp"
#include "cuedet/synth.hpp"

using namespace cuedet;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  static int counter = 0;
  fs::path p = fs::path("test_tmp") / ("data_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("binarize_score thresholds at 0.5") {
  CHECK(binarize_score(0.3) == 0);
  CHECK(binarize_score(0.5) == 1);
  CHECK(binarize_score(-2.7) == 0);
  CHECK(binarize_score(0.4999999) == 0);
  CHECK(binarize_score(7.0) == 1);
  CHECK_THROWS_AS(binarize_score(std::nan("")), validation_error);
  CHECK_THROWS_AS(binarize_score(std::numeric_limits<double>::infinity()), validation_error);

  // monotone non-decreasing over a sweep
  int prev = 0;
  for (double s = -3.0; s <= 3.0; s += 0.01) {
    const int b = binarize_score(s);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("normalize_text collapses whitespace") {
  CHECK(normalize_text("  hello \t world\n") == "hello world");
  CHECK(normalize_text("a\r\nb") == "a b");
  CHECK(normalize_text("   ") == "");
}

TEST_CASE("load_corpus jsonl basics") {
  auto dir = tmp_dir();
  write_file(dir / "c.jsonl",
             R"({"text":"a good day","label":0})"
             "\n"
             R"({"text":"bad stuff here","label":1})"
             "\n"
             R"({"text":"more text","raw_score":0.3})"
             "\n");
  Corpus c = load_corpus((dir / "c.jsonl").string(), CorpusFormat::jsonl, "unit");
  CHECK(c.size() == 3);
  CHECK(c.records[2].label == 0);  // raw_score 0.3 binarizes to 0
  CHECK(c.records[2].raw_score == 0.3);
  CHECK(c.hateful_fraction() == doctest::Approx(1.0 / 3.0));
  CHECK(c.platform == "unit");
  CHECK(load_summary(c).find("3 records") != std::string::npos);
}

TEST_CASE("load_corpus error paths") {
  auto dir = tmp_dir();
  CHECK_THROWS_AS(load_corpus((dir / "missing.jsonl").string(), CorpusFormat::jsonl, "x"),
                  io_error);

  write_file(dir / "bad.jsonl", R"({"text":"no label at all"})"
                                "\n");
  try {
    load_corpus((dir / "bad.jsonl").string(), CorpusFormat::jsonl, "x");
    FAIL("expected schema_error");
  } catch (const schema_error& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }

  write_file(dir / "empty.jsonl", "\n\n");
  CHECK_THROWS_AS(load_corpus((dir / "empty.jsonl").string(), CorpusFormat::jsonl, "x"),
                  validation_error);

  write_file(dir / "conflict.jsonl", R"({"text":"t","label":1,"raw_score":0.2})"
                                     "\n");
  CHECK_THROWS_AS(load_corpus((dir / "conflict.jsonl").string(), CorpusFormat::jsonl, "x"),
                  schema_error);
}

TEST_CASE("hateful fraction over a generated 1000-record file") {
  auto dir = tmp_dir();
  std::string content;
  int hateful = 0;
  for (int i = 0; i < 1000; ++i) {
    const int label = (i * 37 % 1000) < 242 ? 1 : 0;  // exactly 242 hateful
    hateful += label;
    content += R"({"text":"record number )" + std::to_string(i) + R"(","label":)" +
               std::to_string(label) + "}\n";
  }
  REQUIRE(hateful == 242);
  write_file(dir / "big.jsonl", content);
  Corpus c = load_corpus((dir / "big.jsonl").string(), CorpusFormat::jsonl, "gabshape");
  CHECK(c.size() == 1000);
  CHECK(c.hateful_fraction() == doctest::Approx(0.242).epsilon(1e-12));
}

TEST_CASE("load_corpus csv with quoting and column mapping") {
  auto dir = tmp_dir();
  write_file(dir / "c.csv",
             "body,hate,target\r\n"
             "\"hello, quoted \"\"word\"\"\",1,LGBTQ\r\n"
             "plain text,0,\r\n");
  LoadOptions opts;
  opts.csv.text = "body";
  opts.csv.label = "hate";
  opts.csv.hate_target = "target";
  Corpus c = load_corpus((dir / "c.csv").string(), CorpusFormat::csv, "csvland", opts);
  REQUIRE(c.size() == 2);
  CHECK(c.records[0].text == "hello, quoted \"word\"");
  CHECK(c.records[0].label == 1);
  CHECK(c.records[0].hate_target == "LGBTQ");
  CHECK_FALSE(c.records[1].hate_target.has_value());
}

TEST_CASE("corpus round-trips through jsonl") {
  Corpus c = gen_two_target_corpus(60, 99);
  auto dir = tmp_dir();
  const auto path = (dir / "rt.jsonl").string();
  save_corpus_jsonl(c, path);
  Corpus back = load_corpus(path, CorpusFormat::jsonl, c.platform);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.records[i] == c.records[i]);

  // and a second round trip is byte-stable
  const auto path2 = (dir / "rt2.jsonl").string();
  save_corpus_jsonl(back, path2);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

namespace {
Corpus toy_corpus(int n, int n_hateful) {
  Corpus c;
  c.platform = "toy";
  for (int i = 0; i < n; ++i) {
    Record r;
    r.text = "token number " + std::to_string(i);
    r.label = i < n_hateful ? 1 : 0;
    r.platform = "toy";
    c.records.push_back(r);
  }
  return c;
}
}  // namespace

TEST_CASE("stratified_split sizes, stratification, determinism") {
  Corpus c = toy_corpus(100, 30);
  SplitSpec spec;
  spec.seed = 7;
  Splits s = stratified_split(c, spec);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);

  int train_hateful = 0;
  for (const auto& r : s.train.records) train_hateful += r.label;
  CHECK(train_hateful >= 23);
  CHECK(train_hateful <= 25);

  Splits s2 = stratified_split(c, spec);
  CHECK(s2.train.records == s.train.records);
  CHECK(s2.val.records == s.val.records);
  CHECK(s2.test.records == s.test.records);

  SplitSpec other = spec;
  other.seed = 8;
  Splits s3 = stratified_split(c, other);
  CHECK(s3.train.records != s.train.records);
}

TEST_CASE("stratified_split partitions exactly") {
  Corpus c = gen_separable_corpus(173, 3);
  SplitSpec spec;
  spec.train = 0.6;
  spec.val = 0.2;
  spec.test = 0.2;
  spec.seed = 11;
  Splits s = stratified_split(c, spec);
  CHECK(s.train.size() + s.val.size() + s.test.size() == c.size());
  std::multiset<std::string> all, parts;
  for (const auto& r : c.records) all.insert(r.text);
  for (const Corpus* part : {&s.train, &s.val, &s.test})
    for (const auto& r : part->records) parts.insert(r.text);
  CHECK(all == parts);
}

TEST_CASE("stratified_split validation errors") {
  Corpus few = toy_corpus(15, 5);  // only 5 hateful
  CHECK_THROWS_AS(stratified_split(few, SplitSpec{}), validation_error);

  Corpus ok = toy_corpus(40, 20);
  SplitSpec bad;
  bad.train = 0.5;
  bad.val = 0.2;
  bad.test = 0.2;  // sums to 0.9
  CHECK_THROWS_AS(stratified_split(ok, bad), validation_error);
}

TEST_CASE("class_weights inverse frequency") {
  {
    std::vector<int> labels(100, 0);
    for (int i = 0; i < 50; ++i) labels[i] = 1;
    ClassWeights w = class_weights(labels);
    CHECK(w.non_hate() == doctest::Approx(1.0));
    CHECK(w.hate() == doctest::Approx(1.0));
  }
  {
    std::vector<int> labels;
    for (int i = 0; i < 25; ++i) labels.push_back(1);
    for (int i = 0; i < 75; ++i) labels.push_back(0);
    ClassWeights w = class_weights(labels);
    CHECK(w.hate() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w.non_hate() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  {
    // counts shaped like a 31,640-record corpus with 7,657 hateful
    std::vector<int> labels;
    labels.insert(labels.end(), 7657, 1);
    labels.insert(labels.end(), 31640 - 7657, 0);
    ClassWeights w = class_weights(labels);
    const double ratio = w.hate() / w.non_hate();
    CHECK(ratio == doctest::Approx(23983.0 / 7657.0).epsilon(1e-12));
    CHECK(ratio == doctest::Approx(3.13).epsilon(0.01));
    // w_c * N_c identical across classes
    CHECK(w.hate() * 7657.0 == doctest::Approx(w.non_hate() * 23983.0).epsilon(1e-12));
    // minority class gets the larger weight
    CHECK(w.hate() > w.non_hate());
  }
  CHECK_THROWS_AS(class_weights(std::vector<int>(5, 1)), validation_error);
}

TEST_CASE("class_weights is scale invariant") {
  std::vector<int> small, big;
  for (int i = 0; i < 10; ++i) small.push_back(i < 3 ? 1 : 0);
  for (int rep = 0; rep < 17; ++rep)
    for (int i = 0; i < 10; ++i) big.push_back(i < 3 ? 1 : 0);
  ClassWeights ws = class_weights(small), wb = class_weights(big);
  CHECK(ws.hate() == doctest::Approx(wb.hate()).epsilon(1e-12));
  CHECK(ws.non_hate() == doctest::Approx(wb.non_hate()).epsilon(1e-12));
}
