#pragma once

#include "cuedet/cues.hpp"
#include "cuedet/data.hpp"

namespace cuedet {

// Which cue channels feed the selector. Suppressed channels are zeroed at the
// selector input; `base` bypasses the gate entirely (C == 1).
enum class Variant { full, sentiment_only, aggression_only, base };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Classification head f: d_model -> hidden -> 2 with tanh hidden.
struct ClassifierParams {
  Mat w1;  // d_model x hidden
  Mat b1;  // 1 x hidden
  Mat w2;  // hidden x 2
  Mat b2;  // 1 x 2

  int hidden() const { return static_cast<int>(w1.cols()); }
};

ClassifierParams init_classifier(int d_model, int hidden, std::uint64_t seed);

template <class Params, class Fn>
void visit_classifier_params(Params& p, Fn&& fn) {
  fn("classifier.w1", p.w1);
  fn("classifier.b1", p.b1);
  fn("classifier.w2", p.w2);
  fn("classifier.b2", p.b2);
}

struct HateModel {
  EncoderConfig config;
  Vocabulary vocab;
  EncoderState detector;             // trainable
  EncoderState sentiment;            // frozen cue encoder
  EncoderState aggression;           // frozen cue encoder
  SelectorParams selector;
  ClassifierParams classifier;
  Variant variant = Variant::full;

  bool uses_sentiment() const {
    return variant == Variant::full || variant == Variant::sentiment_only;
  }
  bool uses_aggression() const {
    return variant == Variant::full || variant == Variant::aggression_only;
  }
  bool uses_gate() const { return variant != Variant::base; }
};

// Fresh model around already-frozen cue encoders.
HateModel make_hate_model(const EncoderConfig& cfg, const Vocabulary& vocab,
                          EncoderState sentiment, EncoderState aggression,
                          Variant variant, std::uint64_t seed);

struct TokenAttribution {
  std::vector<std::string> tokens;
  Vec sentiment;       // S
  Vec aggression;      // A
  Vec fusion;          // C
  Vec detector_cls;    // the detector's own last-block CLS attention row
};

struct Prediction {
  int label = 0;
  Vec probs;  // 2 entries, sum 1
  TokenAttribution attribution;
};

struct TrainSchedule {
  double learning_rate = 2e-5;
  double dropout = 0.2;
  int batch_size = 16;
  int max_epochs = 20;
  int early_stop_patience = 3;
  // The selector head has ~65 parameters against the detector's ~10^5; at a
  // shared rate it cannot reach its operating range before the detector fits
  // the training set, so it trains with this fixed multiplier after a short
  // warm-up that lets the detector find its features first (a cold boosted
  // gate can strangle the representation before anything is learned).
  double selector_lr_scale = 20.0;
  int selector_warmup_epochs = 2;
  // Epochs with the detector held at its initialization while the selector
  // and classifier fit the gate pathway first.
  int detector_freeze_epochs = 0;
  // Weight of the auxiliary gate term: class-weighted BCE of the CLS gate
  // value against the hate label. The classification loss alone trains the
  // selector toward "scale up wherever the detector is already right", which
  // carries no class information once the detector fits its training data;
  // this term pins the gate to the cue-hatefulness score it is meant to
  // carry. 0 disables it.
  double gate_loss_weight = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_macro_f1;
  double best_val_macro_f1 = 0.0;
  int best_epoch = -1;
};

// F[t][j] = R[t][j] * C[t].
Mat fuse_representation(const Mat& r, const FusionVector& c);

// Softmax probabilities of the classification head applied to F's CLS row.
Vec classify(const Mat& fused, int cls_index, const ClassifierParams& classifier);

// w_y * -log(max(probs[y], 1e-12)).
double loss(const Vec& pred_probs, int y, const ClassWeights& weights);

// Trains detector, selector, and classifier; cue encoders must be frozen and
// stay bit-identical. Early-stops on validation macro-F1 and returns the
// best-validation checkpoint. Deterministic given schedule.seed.
TrainLog train(HateModel& model, const Corpus& train_corpus, const Corpus& val_corpus,
               const TrainSchedule& schedule);

Prediction predict(const std::string& text, const HateModel& model);

// Diagnostic forward pass; override_unit_gate forces C == 1 so the fusion
// wiring can be checked against the plain detector.
Vec model_logits(const HateModel& model, const TokenSequence& seq, bool override_unit_gate = false);

// Precomputed cue vectors for one tokenized example (what the trainer caches:
// S and A depend only on frozen weights, so they never change mid-training).
struct CueCache {
  Vec s;
  Vec a;
};

CueCache compute_cue_cache(const HateModel& model, const TokenSequence& seq);

// Enumerates the trainable tensors (detector, selector, classifier) in the
// optimizer's order; names are prefixed "detector." / "selector." /
// "classifier.".
template <class Model, class Fn>
void visit_trainable_params(Model& m, Fn&& fn) {
  visit_params(m.detector, [&](const std::string& name, Mat& t) { fn("detector." + name, t); });
  visit_selector_params(m.selector, fn);
  visit_classifier_params(m.classifier, fn);
}

// Deterministic (dropout-free) batch loss with analytic gradients, aligned
// with visit_trainable_params. Exposed for gradient checking.
struct LossProbe {
  double value = 0.0;
  std::vector<std::pair<std::string, Mat>> grads;
};

LossProbe loss_probe(const HateModel& model, const std::vector<TokenSequence>& seqs,
                     const std::vector<CueCache>& cues, const std::vector<int>& labels,
                     const ClassWeights& weights);
double loss_value(const HateModel& model, const std::vector<TokenSequence>& seqs,
                  const std::vector<CueCache>& cues, const std::vector<int>& labels,
                  const ClassWeights& weights);

// Model bundle: a directory with the three encoder checkpoints, fusion
// parameters, vocabulary, and manifest; reload reproduces predictions
// bit-exactly.
void save_bundle(const HateModel& model, const std::string& dir,
                 const std::string& manifest_extra_json = "{}");
HateModel load_bundle(const std::string& dir);

}  // namespace cuedet
