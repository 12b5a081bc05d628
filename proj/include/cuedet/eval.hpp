#pragma once

#include <functional>
#include <map>
#include <memory>

#include "cuedet/metrics.hpp"
#include "cuedet/model.hpp"
#include "cuedet/synth.hpp"

namespace cuedet {

// Source-platform x target-platform grid of macro-F1 scores; the diagonal is
// the in-platform score.
struct EvalMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::vector<std::vector<double>> scores;

  double at(const std::string& source, const std::string& target) const;
  // Mean of the off-diagonal entries (source != target), the cross-platform
  // summary number.
  double off_diagonal_mean() const;
};

std::string eval_matrix_csv(const EvalMatrix& m);
std::string eval_matrix_json(const EvalMatrix& m);

// Reorders rows/columns to the given platform order; scores move with their
// labels.
EvalMatrix reorder(const EvalMatrix& m, const std::vector<std::string>& platform_order);

// Anything that labels a text; lets tests drive the harness with oracle
// classifiers instead of trained models.
struct Classifier {
  virtual ~Classifier() = default;
  virtual int predict_label(const std::string& text) const = 0;
};

using ModelFactory = std::function<std::unique_ptr<Classifier>(
    const std::string& source_platform, const Corpus& train, const Corpus& val)>;

struct HarnessOptions {
  int n_jobs = 1;  // parallel (source/variant) training jobs; results are
                   // slot-indexed, so the output is identical at any job count
};

// Trains one model per source platform and scores it on every platform's test
// split, the in-platform diagonal included.
EvalMatrix cross_platform_eval(const ModelFactory& factory,
                               const std::map<std::string, Splits>& corpora,
                               const HarnessOptions& opts = {});

struct DirectionalScore {
  std::string source;
  std::string target;
  double macro_f1 = 0.0;
};

// Trains on one hate target's records and scores on the other's test split,
// both directions.
std::vector<DirectionalScore> cross_target_eval(const ModelFactory& factory,
                                                const Corpus& corpus,
                                                const std::pair<std::string, std::string>& targets,
                                                const SplitSpec& split,
                                                const HarnessOptions& opts = {});

std::string directional_csv(const std::vector<DirectionalScore>& scores);
std::string directional_json(const std::vector<DirectionalScore>& scores);

struct AblationReport {
  Variant variant = Variant::full;
  EvalMatrix scores;
  double off_diagonal_mean = 0.0;
  double delta_vs_full = 0.0;  // full's off-diagonal mean minus this variant's
};

// Everything a variant's factory needs: a shared frozen cue pair plus the
// training schedule.
struct VariantContext {
  EncoderConfig config;
  const Vocabulary* vocab = nullptr;
  const EncoderState* sentiment = nullptr;   // frozen
  const EncoderState* aggression = nullptr;  // frozen
  TrainSchedule schedule;
};

ModelFactory hate_model_factory(const VariantContext& ctx, Variant variant);

// Runs all four variants on identical splits and seeds.
std::vector<AblationReport> ablation_run(const std::map<std::string, Splits>& corpora,
                                         const VariantContext& ctx,
                                         const HarnessOptions& opts = {});

std::string ablation_csv(const std::vector<AblationReport>& reports);
std::string ablation_json(const std::vector<AblationReport>& reports);

enum class BreakdownDimension { hate_target, hate_type };

struct GroupError {
  std::size_t count = 0;
  std::size_t errors = 0;
  double error_rate = 0.0;
};

struct ErrorBreakdown {
  BreakdownDimension dimension = BreakdownDimension::hate_target;
  std::map<std::string, GroupError> groups;
  std::size_t skipped_without_field = 0;
};

// Per-group misclassification rate. By default only hateful-class records
// are scored (missed-hate framing); over_all_records widens it.
ErrorBreakdown error_breakdown(const HateModel& model, const Corpus& test,
                               BreakdownDimension dimension, bool over_all_records = false);
ErrorBreakdown error_breakdown(const std::function<int(const std::string&)>& predictor,
                               const Corpus& test, BreakdownDimension dimension,
                               bool over_all_records = false);

std::string error_breakdown_csv(const ErrorBreakdown& b);
std::string error_breakdown_json(const ErrorBreakdown& b);

// Standalone HTML heatmap of the four attribution tracks (S, A, C, detector
// attention) plus the verdict; the raw JSON lands next to it.
struct HeatmapDoc {
  std::vector<std::string> tokens;
  Vec sentiment;
  Vec aggression;
  Vec fusion;
  Vec model_attention;
  int predicted_label = 0;
  Vec probs;
};

HeatmapDoc make_heatmap_doc(const Prediction& pred, const std::vector<std::string>& tokens);
void export_heatmap(const Prediction& pred, const std::vector<std::string>& tokens,
                    const std::string& html_path);
std::string heatmap_json(const HeatmapDoc& doc);
std::string heatmap_html(const HeatmapDoc& doc);

}  // namespace cuedet
