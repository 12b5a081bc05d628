#include "cuedet/eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace cuedet {

namespace {
using json = nlohmann::ordered_json;

std::string fmt_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Minimal RFC-4180 quoting; our platform names never need it, user data might.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

// Runs jobs [0, n) over a small pool; each job writes only its own slot.
void run_jobs(std::size_t n, int n_jobs, const std::function<void(std::size_t)>& job) {
  const int workers = std::max(1, std::min<int>(n_jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> predict_corpus(const Classifier& clf, const Corpus& corpus) {
  std::vector<int> preds;
  preds.reserve(corpus.size());
  for (const auto& r : corpus.records) preds.push_back(clf.predict_label(r.text));
  return preds;
}

}  // namespace

double EvalMatrix::at(const std::string& source, const std::string& target) const {
  auto si = std::find(sources.begin(), sources.end(), source);
  auto ti = std::find(targets.begin(), targets.end(), target);
  if (si == sources.end() || ti == targets.end())
    throw validation_error("EvalMatrix::at: unknown platform");
  return scores[static_cast<std::size_t>(si - sources.begin())]
               [static_cast<std::size_t>(ti - targets.begin())];
}

double EvalMatrix::off_diagonal_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (std::size_t j = 0; j < targets.size(); ++j) {
      if (sources[i] == targets[j]) continue;
      sum += scores[i][j];
      ++n;
    }
  }
  if (n == 0) throw validation_error("off_diagonal_mean: no off-diagonal entries");
  return sum / static_cast<double>(n);
}

std::string eval_matrix_csv(const EvalMatrix& m) {
  std::string out = "source\\target";
  for (const auto& t : m.targets) out += "," + csv_field(t);
  out += "\r\n";
  for (std::size_t i = 0; i < m.sources.size(); ++i) {
    out += csv_field(m.sources[i]);
    for (std::size_t j = 0; j < m.targets.size(); ++j) out += "," + fmt_score(m.scores[i][j]);
    out += "\r\n";
  }
  return out;
}

std::string eval_matrix_json(const EvalMatrix& m) {
  json j;
  j["sources"] = m.sources;
  j["targets"] = m.targets;
  j["macro_f1"] = m.scores;
  return j.dump(2);
}

EvalMatrix reorder(const EvalMatrix& m, const std::vector<std::string>& platform_order) {
  EvalMatrix out;
  out.sources = platform_order;
  out.targets = platform_order;
  out.scores.assign(platform_order.size(), std::vector<double>(platform_order.size(), 0.0));
  for (std::size_t i = 0; i < platform_order.size(); ++i)
    for (std::size_t j = 0; j < platform_order.size(); ++j)
      out.scores[i][j] = m.at(platform_order[i], platform_order[j]);
  return out;
}

EvalMatrix cross_platform_eval(const ModelFactory& factory,
                               const std::map<std::string, Splits>& corpora,
                               const HarnessOptions& opts) {
  if (corpora.size() < 2) throw validation_error("cross_platform_eval: need >= 2 platforms");
  for (const auto& [name, splits] : corpora) {
    if (splits.train.records.empty() || splits.val.records.empty() ||
        splits.test.records.empty())
      throw validation_error("cross_platform_eval: platform '" + name + "' is missing a split");
  }
  EvalMatrix m;
  for (const auto& [name, splits] : corpora) {
    m.sources.push_back(name);
    m.targets.push_back(name);
  }
  m.scores.assign(m.sources.size(), std::vector<double>(m.targets.size(), 0.0));

  run_jobs(m.sources.size(), opts.n_jobs, [&](std::size_t i) {
    const auto& source = m.sources[i];
    const Splits& s = corpora.at(source);
    std::unique_ptr<Classifier> clf = factory(source, s.train, s.val);
    for (std::size_t j = 0; j < m.targets.size(); ++j) {
      const Corpus& test = corpora.at(m.targets[j]).test;
      m.scores[i][j] = macro_f1(predict_corpus(*clf, test), test.labels());
    }
  });
  return m;
}

std::vector<DirectionalScore> cross_target_eval(const ModelFactory& factory,
                                                const Corpus& corpus,
                                                const std::pair<std::string, std::string>& targets,
                                                const SplitSpec& split,
                                                const HarnessOptions& opts) {
  auto subset = [&](const std::string& target) {
    Corpus c;
    c.platform = corpus.platform + ":" + target;
    c.provenance = corpus.provenance;
    c.n_classes = corpus.n_classes;
    for (const auto& r : corpus.records)
      if (r.hate_target && *r.hate_target == target) c.records.push_back(r);
    if (c.records.empty())
      throw validation_error("cross_target_eval: no records for target '" + target + "'");
    std::size_t pos = 0;
    for (const auto& r : c.records) pos += (r.label == 1);
    if (pos < 10 || c.records.size() - pos < 10)
      throw validation_error("cross_target_eval: target '" + target +
                             "' has fewer than 10 records in a class");
    return c;
  };
  const std::array<std::string, 2> names = {targets.first, targets.second};
  std::array<Splits, 2> splits = {stratified_split(subset(names[0]), split),
                                  stratified_split(subset(names[1]), split)};

  std::vector<DirectionalScore> out(2);
  run_jobs(2, opts.n_jobs, [&](std::size_t i) {
    const std::size_t other = 1 - i;
    std::unique_ptr<Classifier> clf = factory(names[i], splits[i].train, splits[i].val);
    const Corpus& test = splits[other].test;
    out[i] = {names[i], names[other], macro_f1(predict_corpus(*clf, test), test.labels())};
  });
  return out;
}

std::string directional_csv(const std::vector<DirectionalScore>& scores) {
  std::string out = "source,target,macro_f1\r\n";
  for (const auto& s : scores)
    out += csv_field(s.source) + "," + csv_field(s.target) + "," + fmt_score(s.macro_f1) + "\r\n";
  return out;
}

std::string directional_json(const std::vector<DirectionalScore>& scores) {
  json j = json::array();
  for (const auto& s : scores)
    j.push_back({{"source", s.source}, {"target", s.target}, {"macro_f1", s.macro_f1}});
  return j.dump(2);
}

namespace {

struct HateClassifier : Classifier {
  HateModel model;
  int predict_label(const std::string& text) const override {
    TokenSequence seq = tokenize_tight(text, model.vocab, model.config.max_len);
    Vec z = model_logits(model, seq);
    return z(1) > z(0) ? 1 : 0;
  }
};

}  // namespace

ModelFactory hate_model_factory(const VariantContext& ctx, Variant variant) {
  if (ctx.vocab == nullptr) throw config_error("hate_model_factory: missing vocabulary");
  if (variant != Variant::base && (ctx.sentiment == nullptr || ctx.aggression == nullptr))
    throw config_error("hate_model_factory: missing cue encoders");
  return [ctx, variant](const std::string& /*source*/, const Corpus& train_c,
                        const Corpus& val_c) -> std::unique_ptr<Classifier> {
    auto clf = std::make_unique<HateClassifier>();
    EncoderState sent = ctx.sentiment ? *ctx.sentiment : EncoderState{};
    EncoderState aggr = ctx.aggression ? *ctx.aggression : EncoderState{};
    clf->model = make_hate_model(ctx.config, *ctx.vocab, std::move(sent), std::move(aggr),
                                 variant, ctx.schedule.seed);
    train(clf->model, train_c, val_c, ctx.schedule);
    return clf;
  };
}

std::vector<AblationReport> ablation_run(const std::map<std::string, Splits>& corpora,
                                         const VariantContext& ctx,
                                         const HarnessOptions& opts) {
  const std::array<Variant, 4> variants = {Variant::full, Variant::sentiment_only,
                                           Variant::aggression_only, Variant::base};
  std::vector<std::string> platforms;
  for (const auto& [name, s] : corpora) platforms.push_back(name);

  // Flatten (variant x source) into one deterministic job list.
  struct Job {
    std::size_t variant_idx;
    std::size_t source_idx;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t s = 0; s < platforms.size(); ++s) jobs.push_back({v, s});

  std::vector<AblationReport> reports(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    reports[v].variant = variants[v];
    reports[v].scores.sources = platforms;
    reports[v].scores.targets = platforms;
    reports[v].scores.scores.assign(platforms.size(),
                                    std::vector<double>(platforms.size(), 0.0));
  }

  run_jobs(jobs.size(), opts.n_jobs, [&](std::size_t idx) {
    const Job& job = jobs[idx];
    const std::string& source = platforms[job.source_idx];
    ModelFactory factory = hate_model_factory(ctx, variants[job.variant_idx]);
    const Splits& s = corpora.at(source);
    std::unique_ptr<Classifier> clf = factory(source, s.train, s.val);
    for (std::size_t j = 0; j < platforms.size(); ++j) {
      const Corpus& test = corpora.at(platforms[j]).test;
      reports[job.variant_idx].scores.scores[job.source_idx][j] =
          macro_f1(predict_corpus(*clf, test), test.labels());
    }
  });

  for (auto& r : reports) r.off_diagonal_mean = r.scores.off_diagonal_mean();
  const double full_mean = reports.front().off_diagonal_mean;
  for (auto& r : reports) r.delta_vs_full = full_mean - r.off_diagonal_mean;
  return reports;
}

std::string ablation_csv(const std::vector<AblationReport>& reports) {
  std::string out = "variant,source,target,macro_f1\r\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.scores.sources.size(); ++i)
      for (std::size_t j = 0; j < r.scores.targets.size(); ++j)
        out += std::string(variant_name(r.variant)) + "," + csv_field(r.scores.sources[i]) + "," +
               csv_field(r.scores.targets[j]) + "," + fmt_score(r.scores.scores[i][j]) + "\r\n";
  }
  return out;
}

std::string ablation_json(const std::vector<AblationReport>& reports) {
  json j = json::array();
  for (const auto& r : reports) {
    j.push_back({{"variant", variant_name(r.variant)},
                 {"sources", r.scores.sources},
                 {"targets", r.scores.targets},
                 {"macro_f1", r.scores.scores},
                 {"off_diagonal_mean", r.off_diagonal_mean},
                 {"delta_vs_full", r.delta_vs_full}});
  }
  return j.dump(2);
}

ErrorBreakdown error_breakdown(const std::function<int(const std::string&)>& predictor,
                               const Corpus& test, BreakdownDimension dimension,
                               bool over_all_records) {
  ErrorBreakdown out;
  out.dimension = dimension;
  bool any = false;
  for (const auto& r : test.records) {
    if (!over_all_records && r.label != 1) continue;
    const auto& field = dimension == BreakdownDimension::hate_target ? r.hate_target : r.hate_type;
    if (!field) {
      ++out.skipped_without_field;
      continue;
    }
    any = true;
    GroupError& g = out.groups[*field];
    g.count += 1;
    g.errors += (predictor(r.text) != r.label);
  }
  if (!any) throw validation_error("error_breakdown: no records carry the requested field");
  for (auto& [name, g] : out.groups)
    g.error_rate = static_cast<double>(g.errors) / static_cast<double>(g.count);
  return out;
}

ErrorBreakdown error_breakdown(const HateModel& model, const Corpus& test,
                               BreakdownDimension dimension, bool over_all_records) {
  return error_breakdown(
      [&model](const std::string& text) { return predict(text, model).label; }, test, dimension,
      over_all_records);
}

std::string error_breakdown_csv(const ErrorBreakdown& b) {
  std::string out = "group,count,errors,error_rate\r\n";
  for (const auto& [name, g] : b.groups)
    out += csv_field(name) + "," + std::to_string(g.count) + "," + std::to_string(g.errors) +
           "," + fmt_score(g.error_rate) + "\r\n";
  return out;
}

std::string error_breakdown_json(const ErrorBreakdown& b) {
  json j;
  j["dimension"] = b.dimension == BreakdownDimension::hate_target ? "hate_target" : "hate_type";
  j["skipped_without_field"] = b.skipped_without_field;
  json groups = json::object();
  for (const auto& [name, g] : b.groups)
    groups[name] = {{"count", g.count}, {"errors", g.errors}, {"error_rate", g.error_rate}};
  j["groups"] = groups;
  return j.dump(2);
}

HeatmapDoc make_heatmap_doc(const Prediction& pred, const std::vector<std::string>& tokens) {
  const auto k = static_cast<Eigen::Index>(tokens.size());
  const auto& a = pred.attribution;
  if (a.sentiment.size() != k || a.aggression.size() != k || a.fusion.size() != k ||
      a.detector_cls.size() != k)
    throw validation_error("heatmap: token and track lengths disagree");
  HeatmapDoc doc;
  doc.tokens = tokens;
  doc.sentiment = a.sentiment;
  doc.aggression = a.aggression;
  doc.fusion = a.fusion;
  doc.model_attention = a.detector_cls;
  doc.predicted_label = pred.label;
  doc.probs = pred.probs;
  return doc;
}

std::string heatmap_json(const HeatmapDoc& doc) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["tokens"] = doc.tokens;
  j["S"] = vec(doc.sentiment);
  j["A"] = vec(doc.aggression);
  j["C"] = vec(doc.fusion);
  j["model_attention"] = vec(doc.model_attention);
  j["predicted_label"] = doc.predicted_label;
  j["probs"] = vec(doc.probs);
  return j.dump(2);
}

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void track_html(std::string& out, const std::string& name, const std::vector<std::string>& tokens,
                const Vec& values) {
  const double vmax = values.size() ? values.maxCoeff() : 0.0;
  out += "<div class=\"track\"><span class=\"trackname\">" + html_escape(name) + "</span>";
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double a = vmax > 0.0 ? values(i) / vmax : 0.0;  // monotone shade
    char style[96];
    std::snprintf(style, sizeof(style), "background:rgba(178,24,43,%.3f)", a);
    out += "<span class=\"tok\" style=\"" + std::string(style) + "\" title=\"" +
           fmt_score(values(i)) + "\">" + html_escape(tokens[static_cast<std::size_t>(i)]) +
           "</span>";
  }
  out += "</div>\n";
}

}  // namespace

std::string heatmap_html(const HeatmapDoc& doc) {
  std::string out =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>token importance</title>\n"
      "<style>body{font-family:monospace;margin:1.5em}.track{margin:4px 0}"
      ".trackname{display:inline-block;width:12em;font-weight:bold}"
      ".tok{padding:2px 4px;margin:1px;display:inline-block;border:1px solid #ddd}"
      ".verdict{margin-top:1em;font-weight:bold}</style></head><body>\n";
  out += "<h3>token importance</h3>\n";
  track_html(out, "sentiment (S)", doc.tokens, doc.sentiment);
  track_html(out, "aggression (A)", doc.tokens, doc.aggression);
  track_html(out, "fusion gate (C)", doc.tokens, doc.fusion);
  track_html(out, "detector attention", doc.tokens, doc.model_attention);
  out += "<div class=\"verdict\">prediction: " +
         std::string(doc.predicted_label ? "hate" : "non-hate") + " (p_hate=" +
         fmt_score(doc.probs(1)) + ")</div>\n";
  out += "</body></html>\n";
  return out;
}

void export_heatmap(const Prediction& pred, const std::vector<std::string>& tokens,
                    const std::string& html_path) {
  HeatmapDoc doc = make_heatmap_doc(pred, tokens);
  std::ofstream html(html_path, std::ios::binary);
  if (!html) throw io_error("cannot write heatmap: " + html_path);
  html << heatmap_html(doc);

  std::string json_path = html_path;
  const auto dot = json_path.rfind('.');
  if (dot != std::string::npos) json_path.resize(dot);
  json_path += ".json";
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw io_error("cannot write heatmap json: " + json_path);
  js << heatmap_json(doc) << "\n";
}

}  // namespace cuedet
