#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cuedet/config.hpp"
#include "cuedet/eval.hpp"
#include "json.hpp"

using namespace cuedet;

namespace {

// Independent confusion-matrix oracle over bitmask-encoded predictions.
double oracle_macro_f1(unsigned preds, unsigned labels, int n) {
  double sum = 0.0;
  for (int cls = 0; cls < 2; ++cls) {
    int tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      const bool p = ((preds >> i) & 1u) == static_cast<unsigned>(cls);
      const bool l = ((labels >> i) & 1u) == static_cast<unsigned>(cls);
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
    }
    const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    sum += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  return sum / 2.0;
}

// Label rule the oracle classifiers share: hateful iff the text carries "hot".
Corpus rule_corpus(const std::string& platform, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Corpus c;
  c.platform = platform;
  for (int i = 0; i < n; ++i) {
    Record r;
    r.label = i % 2;
    r.text = r.label ? "this text is hot number " + std::to_string(i)
                     : "this text is cold number " + std::to_string(i);
    r.platform = platform;
    if (r.label) {
      r.hate_target = (i / 2) % 2 ? "groupA" : "groupB";
      r.hate_type = (i / 2) % 3 == 0 ? "violence" : "offensive";
    }
    c.records.push_back(r);
  }
  std::shuffle(c.records.begin(), c.records.end(), rng);
  return c;
}

struct RuleClassifier : Classifier {
  int predict_label(const std::string& text) const override {
    return text.find("hot") != std::string::npos ? 1 : 0;
  }
};

ModelFactory oracle_factory() {
  return [](const std::string&, const Corpus&, const Corpus&) -> std::unique_ptr<Classifier> {
    return std::make_unique<RuleClassifier>();
  };
}

}  // namespace

TEST_CASE("macro_f1 closed-form cases") {
  CHECK(macro_f1({1, 0, 1, 0}, {1, 0, 1, 0}) == doctest::Approx(1.0));
  // tp=1 fp=1 fn=1 tn=1 -> both classes at 0.5
  CHECK(macro_f1({1, 1, 0, 0}, {1, 0, 1, 0}) == doctest::Approx(0.5));
  // all-positive predictions: F1_pos=2/3, F1_neg=0
  CHECK(macro_f1({1, 1, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(macro_f1({}, {}), validation_error);
  CHECK_THROWS_AS(macro_f1({1}, {1, 0}), validation_error);
}

TEST_CASE("macro_f1 matches the exhaustive oracle up to length 8") {
  std::vector<int> preds, labels;
  for (int n = 1; n <= 8; ++n) {
    for (unsigned p = 0; p < (1u << n); ++p) {
      for (unsigned l = 0; l < (1u << n); ++l) {
        preds.clear();
        labels.clear();
        for (int i = 0; i < n; ++i) {
          preds.push_back((p >> i) & 1u);
          labels.push_back((l >> i) & 1u);
        }
        CHECK(macro_f1(preds, labels) == oracle_macro_f1(p, l, n));
      }
    }
  }
}

TEST_CASE("macro_f1 is symmetric under class relabeling") {
  Rng rng = make_rng(2024);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> preds, labels, preds_flip, labels_flip;
    const int n = 1 + static_cast<int>(trial % 17);
    for (int i = 0; i < n; ++i) {
      preds.push_back(coin(rng));
      labels.push_back(coin(rng));
      preds_flip.push_back(1 - preds.back());
      labels_flip.push_back(1 - labels.back());
    }
    CHECK(macro_f1(preds, labels) == doctest::Approx(macro_f1(preds_flip, labels_flip)).epsilon(1e-15));
  }
}

TEST_CASE("cross_platform_eval with a perfect oracle fills the grid with ones") {
  std::map<std::string, Splits> corpora;
  SplitSpec spec;
  spec.seed = 5;
  for (const std::string p : {"p1", "p2", "p3"}) {
    corpora[p] = stratified_split(rule_corpus(p, 120, 11), spec);
  }
  EvalMatrix m = cross_platform_eval(oracle_factory(), corpora);
  REQUIRE(m.sources.size() == 3);
  REQUIRE(m.targets.size() == 3);
  for (const auto& row : m.scores)
    for (double v : row) CHECK(v == doctest::Approx(1.0));

  const std::string csv = eval_matrix_csv(m);
  CHECK(csv.find("source\\target,p1,p2,p3") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows

  // permutation equivariance
  EvalMatrix r = reorder(m, {"p3", "p1", "p2"});
  CHECK(r.at("p3", "p1") == m.at("p3", "p1"));
  CHECK(r.sources == std::vector<std::string>{"p3", "p1", "p2"});

  std::map<std::string, Splits> missing = corpora;
  missing["p4"] = Splits{};
  CHECK_THROWS_AS(cross_platform_eval(oracle_factory(), missing), validation_error);
}

TEST_CASE("cross_platform_eval is identical at any job count") {
  std::map<std::string, Splits> corpora;
  SplitSpec spec;
  spec.seed = 6;
  for (const std::string p : {"p1", "p2"}) corpora[p] = stratified_split(rule_corpus(p, 80, 3), spec);
  EvalMatrix a = cross_platform_eval(oracle_factory(), corpora, {1});
  EvalMatrix b = cross_platform_eval(oracle_factory(), corpora, {4});
  CHECK(eval_matrix_csv(a) == eval_matrix_csv(b));
}

TEST_CASE("cross_target_eval produces exactly two labeled directions") {
  Corpus c = gen_two_target_corpus(400, 77);
  SplitSpec spec;
  spec.seed = 9;
  auto scores = cross_target_eval(oracle_factory(), c, {"groupA", "groupB"}, spec);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].source == "groupA");
  CHECK(scores[0].target == "groupB");
  CHECK(scores[1].source == "groupB");
  CHECK(scores[1].target == "groupA");

  const std::string csv = directional_csv(scores);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows

  // the oracle is not perfect here (labels do not follow the "hot" rule),
  // but scores stay in range
  for (const auto& s : scores) {
    CHECK(s.macro_f1 >= 0.0);
    CHECK(s.macro_f1 <= 1.0);
  }

  Corpus no_targets = rule_corpus("x", 60, 1);
  for (auto& r : no_targets.records) r.hate_target.reset();
  CHECK_THROWS_AS(cross_target_eval(oracle_factory(), no_targets, {"groupA", "groupB"}, spec),
                  validation_error);
}

TEST_CASE("cross_target_eval with rule-following targets scores 1.0 both ways") {
  Corpus c;
  c.platform = "rules";
  for (int i = 0; i < 240; ++i) {
    Record r;
    r.label = i % 2;
    r.text = (r.label ? std::string("hot take ") : std::string("cold take ")) + std::to_string(i);
    r.platform = "rules";
    r.hate_target = (i / 2) % 2 ? "groupA" : "groupB";
    c.records.push_back(r);
  }
  SplitSpec spec;
  spec.seed = 2;
  auto scores = cross_target_eval(oracle_factory(), c, {"groupA", "groupB"}, spec);
  CHECK(scores[0].macro_f1 == doctest::Approx(1.0));
  CHECK(scores[1].macro_f1 == doctest::Approx(1.0));
}

TEST_CASE("error_breakdown counts per-group mistakes over hateful records") {
  Corpus test = rule_corpus("p", 200, 42);

  // a predictor that misses exactly the "violence" records
  auto predictor = [&](const std::string& text) {
    for (const auto& r : test.records)
      if (r.text == text) return r.hate_type && *r.hate_type == "violence" ? 1 - r.label : r.label;
    return 0;
  };
  ErrorBreakdown b = error_breakdown(predictor, test, BreakdownDimension::hate_type);
  REQUIRE(b.groups.count("violence"));
  REQUIRE(b.groups.count("offensive"));
  CHECK(b.groups["violence"].error_rate == doctest::Approx(1.0));
  CHECK(b.groups["offensive"].error_rate == doctest::Approx(0.0));

  // perfect predictor: all groups at zero
  auto perfect = [&](const std::string& text) {
    return text.find("hot") != std::string::npos ? 1 : 0;
  };
  ErrorBreakdown p = error_breakdown(perfect, test, BreakdownDimension::hate_target);
  std::size_t annotated = 0;
  for (const auto& r : test.records)
    if (r.label == 1 && r.hate_target) ++annotated;
  std::size_t counted = 0;
  for (const auto& [name, g] : p.groups) {
    CHECK(g.error_rate == doctest::Approx(0.0));
    counted += g.count;
  }
  CHECK(counted == annotated);  // groups partition the annotated records

  Corpus bare = test;
  for (auto& r : bare.records) {
    r.hate_target.reset();
    r.hate_type.reset();
  }
  CHECK_THROWS_AS(error_breakdown(perfect, bare, BreakdownDimension::hate_target),
                  validation_error);

  const std::string csv = error_breakdown_csv(b);
  CHECK(csv.find("group,count,errors,error_rate") == 0);
  const std::string js = error_breakdown_json(b);
  CHECK(js.find("\"violence\"") != std::string::npos);
}

TEST_CASE("heatmap export renders monotone shading and round-trips JSON") {
  Prediction pred;
  pred.label = 1;
  pred.probs = Vec::Zero(2);
  pred.probs << 0.25, 0.75;
  pred.attribution.tokens = {"[CLS]", "alpha", "bravo"};
  pred.attribution.sentiment = Vec::Zero(3);
  pred.attribution.sentiment << 0.1, 0.2, 0.7;
  pred.attribution.aggression = Vec::Zero(3);
  pred.attribution.aggression << 0.3, 0.3, 0.4;
  pred.attribution.fusion = Vec::Zero(3);
  pred.attribution.fusion << 0.1, 0.9, 0.5;
  pred.attribution.detector_cls = Vec::Zero(3);
  pred.attribution.detector_cls << 0.5, 0.25, 0.25;

  std::filesystem::create_directories("test_tmp");
  export_heatmap(pred, pred.attribution.tokens, "test_tmp/heat.html");
  REQUIRE(std::filesystem::exists("test_tmp/heat.html"));
  REQUIRE(std::filesystem::exists("test_tmp/heat.json"));

  std::ifstream html("test_tmp/heat.html");
  std::string page((std::istreambuf_iterator<char>(html)), std::istreambuf_iterator<char>());
  // C track: 0.9 normalizes to alpha 1.000, the darkest cell on the track
  CHECK(page.find("rgba(178,24,43,1.000)") != std::string::npos);
  CHECK(page.find("prediction: hate") != std::string::npos);

  HeatmapDoc doc = make_heatmap_doc(pred, pred.attribution.tokens);
  const std::string js = heatmap_json(doc);
  std::ifstream jf("test_tmp/heat.json");
  std::string file_js((std::istreambuf_iterator<char>(jf)), std::istreambuf_iterator<char>());
  CHECK(file_js == js + "\n");

  // re-parse reproduces the tracks bit-exactly
  auto parsed = nlohmann::json::parse(js);
  for (int i = 0; i < 3; ++i) {
    CHECK(parsed["C"][i].get<double>() == pred.attribution.fusion(i));
    CHECK(parsed["S"][i].get<double>() == pred.attribution.sentiment(i));
  }

  std::vector<std::string> wrong = {"[CLS]", "alpha"};
  CHECK_THROWS_AS(export_heatmap(pred, wrong, "test_tmp/heat2.html"), validation_error);
}

TEST_CASE("run config parses flat typed keys") {
  RunConfig cfg = RunConfig::parse(
      "schema_version = 1\n"
      "seed = 42          # trailing comment\n"
      "learning_rate = 0.001\n"
      "platforms = \"alpha, beta,gamma\"\n"
      "shuffle = true\n");
  CHECK(cfg.get_int("seed") == 42);
  CHECK(cfg.get_double("learning_rate") == doctest::Approx(0.001));
  CHECK(cfg.get_list("platforms") == std::vector<std::string>{"alpha", "beta", "gamma"});
  CHECK(cfg.get_bool("shuffle", false));
  CHECK(cfg.get_string("missing", "fallback") == "fallback");
  CHECK_THROWS_AS(cfg.get_int("platforms"), config_error);
  CHECK_THROWS_AS(RunConfig::parse("schema_version = 2\n"), config_error);
  CHECK_THROWS_AS(RunConfig::parse("just some words\n"), config_error);
}

TEST_CASE("manifest is deterministic") {
  std::filesystem::create_directories("test_tmp/m1");
  std::filesystem::create_directories("test_tmp/m2");
  write_manifest("test_tmp/m1", "eval-cross", "seed = 1\n", 1, {"matrix.csv"});
  write_manifest("test_tmp/m2", "eval-cross", "seed = 1\n", 1, {"matrix.csv"});
  std::ifstream a("test_tmp/m1/manifest.json"), b("test_tmp/m2/manifest.json");
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.find("fnv1a:") != std::string::npos);
}
