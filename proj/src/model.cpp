#include "cuedet/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cuedet/metrics.hpp"
#include "cuedet/optim.hpp"
#include "json.hpp"

namespace cuedet {

namespace {
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct ClassifierNodes {
  Node* w1;
  Node* b1;
  Node* w2;
  Node* b2;
  std::vector<Node*> flat;
};

ClassifierNodes bind_classifier(Tape& tape, const ClassifierParams& p, bool trainable) {
  ClassifierNodes c;
  c.w1 = tape.leaf(p.w1, trainable);
  c.b1 = tape.leaf(p.b1, trainable);
  c.w2 = tape.leaf(p.w2, trainable);
  c.b2 = tape.leaf(p.b2, trainable);
  c.flat = {c.w1, c.b1, c.w2, c.b2};
  return c;
}

Node* classifier_logits(Tape& tape, const ClassifierNodes& clf, Node* fcls) {
  Node* h = tape.tanh_(tape.add_rowvec(tape.matmul(fcls, clf.w1), clf.b1));
  return tape.add_rowvec(tape.matmul(h, clf.w2), clf.b2);
}

// (1 - c_cls, c_cls) as a probability row for the auxiliary gate loss.
Node* gate_prob_pair(Tape& tape, Node* gate, int cls_index) {
  Node* c = tape.row(gate, cls_index);
  Node* one = tape.leaf(Mat::Ones(1, 1), false);
  Node* not_c = tape.add(one, tape.scale(c, -1.0));
  return tape.concat_cols({not_c, c});
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::sentiment_only: return "sentiment_only";
    case Variant::aggression_only: return "aggression_only";
    case Variant::base: return "base";
  }
  return "full";
}

Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "sentiment_only") return Variant::sentiment_only;
  if (name == "aggression_only") return Variant::aggression_only;
  if (name == "base") return Variant::base;
  throw validation_error("unknown variant: " + name);
}

ClassifierParams init_classifier(int d_model, int hidden, std::uint64_t seed) {
  if (d_model < 1 || hidden < 1) throw config_error("init_classifier: bad dimensions");
  Rng rng = make_rng(seed);
  ClassifierParams p;
  auto fill = [&](Mat& m, int r, int c) {
    // Xavier scale; the 0.02 used for the encoder stalls a fresh tanh head.
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / (r + c)));
    m.resize(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = init(rng);
  };
  fill(p.w1, d_model, hidden);
  p.b1 = Mat::Zero(1, hidden);
  fill(p.w2, hidden, 2);
  p.b2 = Mat::Zero(1, 2);
  return p;
}

HateModel make_hate_model(const EncoderConfig& cfg, const Vocabulary& vocab,
                          EncoderState sentiment, EncoderState aggression,
                          Variant variant, std::uint64_t seed) {
  cfg.validate();
  HateModel m;
  m.config = cfg;
  m.vocab = vocab;
  m.variant = variant;
  if (variant != Variant::base) {
    if (!sentiment.frozen || !aggression.frozen)
      throw contract_error("make_hate_model: cue encoders must be frozen");
    if (sentiment.vocab_size != vocab.size() || aggression.vocab_size != vocab.size())
      throw config_error("make_hate_model: cue encoders use a different vocabulary");
  }
  m.sentiment = std::move(sentiment);
  m.aggression = std::move(aggression);
  m.detector = init_encoder_state(cfg, vocab.size(), 0, seed);
  m.selector = init_selector(16, seed + 1);
  m.classifier = init_classifier(cfg.d_model, std::max(1, cfg.d_model / 2), seed + 2);
  return m;
}

Mat fuse_representation(const Mat& r, const FusionVector& c) {
  if (r.rows() != c.c.size())
    throw validation_error("fuse_representation: R rows and C length disagree");
  Mat f = r;
  for (Eigen::Index t = 0; t < f.rows(); ++t) f.row(t) *= c.c(t);
  return f;
}

Vec classify(const Mat& fused, int cls_index, const ClassifierParams& classifier) {
  if (cls_index < 0 || cls_index >= fused.rows())
    throw validation_error("classify: cls_index out of range");
  if (fused.cols() != classifier.w1.rows())
    throw config_error("classify: representation width does not match classifier");
  Eigen::RowVectorXd x = fused.row(cls_index);
  Eigen::RowVectorXd h = ((x * classifier.w1 + classifier.b1.row(0)).array().tanh()).matrix();
  Eigen::RowVectorXd z = h * classifier.w2 + classifier.b2.row(0);
  const double m = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - m).exp();
  return (e / e.sum()).transpose();
}

double loss(const Vec& pred_probs, int y, const ClassWeights& weights) {
  if (y < 0 || y >= pred_probs.size()) throw validation_error("loss: label out of range");
  const double p = std::max(pred_probs(y), 1e-12);
  return weights.weight.at(static_cast<std::size_t>(y)) * -std::log(p);
}

CueCache compute_cue_cache(const HateModel& model, const TokenSequence& seq) {
  CueCache cache;
  const Eigen::Index k = seq.length();
  cache.s = Vec::Zero(k);
  cache.a = Vec::Zero(k);
  if (model.uses_sentiment()) {
    EncodeResult r = encode(seq, model.sentiment);
    cache.s = extract_cue_attention(r.attention, seq.cls_index, seq.mask);
  }
  if (model.uses_aggression()) {
    EncodeResult r = encode(seq, model.aggression);
    cache.a = extract_cue_attention(r.attention, seq.cls_index, seq.mask);
  }
  return cache;
}

void TrainSchedule::validate() const {
  if (learning_rate <= 0 || batch_size < 1 || max_epochs < 1 || early_stop_patience < 1 ||
      selector_lr_scale <= 0 || selector_warmup_epochs < 0 || detector_freeze_epochs < 0 ||
      gate_loss_weight < 0)
    throw validation_error("train schedule: values must be positive");
  if (dropout < 0 || dropout >= 1) throw validation_error("train schedule: dropout must be in [0,1)");
}

namespace {

struct ForwardOut {
  Node* logits;
  Node* gate = nullptr;
};

// One example's graph: detector forward, optional gate, classifier logits.
ForwardOut example_graph(Tape& tape, const EncoderNodes& det, const SelectorNodes* sel,
                         const ClassifierNodes& clf, const TokenSequence& seq,
                         const CueCache& cue, bool use_dropout, Rng* rng,
                         ForwardCapture capture = {}) {
  ForwardOut out;
  Node* hidden = encoder_forward(tape, det, seq, use_dropout, rng, capture);
  Node* fcls;
  if (sel != nullptr) {
    out.gate = selector_forward(tape, *sel, cue.s, cue.a, seq.mask);
    Node* fused = tape.colscale(hidden, out.gate);
    fcls = tape.row(fused, seq.cls_index);
  } else {
    fcls = tape.row(hidden, seq.cls_index);
  }
  out.logits = classifier_logits(tape, clf, fcls);
  return out;
}

Vec logits_for(const HateModel& model, const TokenSequence& seq, const CueCache* cue,
               bool unit_gate, ForwardCapture capture = {}, Vec* gate_out = nullptr) {
  Tape tape;
  EncoderNodes det = bind_encoder(tape, model.detector, false);
  ClassifierNodes clf = bind_classifier(tape, model.classifier, false);
  if (unit_gate) {
    // C forced to 1 but still routed through the fusion wiring.
    Node* hidden = encoder_forward(tape, det, seq, false, nullptr, capture);
    Node* ones = tape.leaf(Mat::Ones(seq.length(), 1), false);
    Node* fused = tape.colscale(hidden, ones);
    Node* logits = classifier_logits(tape, clf, tape.row(fused, seq.cls_index));
    if (gate_out) *gate_out = ones->value.col(0);
    return logits->value.row(0);
  }
  if (model.uses_gate()) {
    SelectorNodes sel = bind_selector(tape, model.selector, false);
    CueCache local;
    if (cue == nullptr) {
      local = compute_cue_cache(model, seq);
      cue = &local;
    }
    ForwardOut fo = example_graph(tape, det, &sel, clf, seq, *cue, false, nullptr, capture);
    if (gate_out) *gate_out = fo.gate->value.col(0);
    return fo.logits->value.row(0);
  }
  ForwardOut fo = example_graph(tape, det, nullptr, clf, seq, CueCache{}, false, nullptr, capture);
  if (gate_out) *gate_out = Vec::Ones(seq.length());
  return fo.logits->value.row(0);
}

}  // namespace

Vec model_logits(const HateModel& model, const TokenSequence& seq, bool override_unit_gate) {
  return logits_for(model, seq, nullptr, override_unit_gate);
}

TrainLog train(HateModel& model, const Corpus& train_corpus, const Corpus& val_corpus,
               const TrainSchedule& schedule) {
  schedule.validate();
  if (train_corpus.records.empty() || val_corpus.records.empty())
    throw validation_error("train: empty corpus");
  if (model.uses_gate()) {
    if (model.uses_sentiment() && !model.sentiment.frozen)
      throw contract_error("train: sentiment cue encoder is not frozen");
    if (model.uses_aggression() && !model.aggression.frozen)
      throw contract_error("train: aggression cue encoder is not frozen");
  }
  {
    bool has0 = false, has1 = false;
    for (const auto& r : train_corpus.records) (r.label ? has1 : has0) = true;
    if (!has0 || !has1) throw validation_error("train: training corpus is single-class");
  }
  model.config.validate();
  model.detector.cfg.dropout = schedule.dropout;

  const ClassWeights weights = class_weights(train_corpus.labels(), 2);

  auto prep = [&](const Corpus& c) {
    std::vector<TokenSequence> seqs;
    std::vector<CueCache> cues;
    seqs.reserve(c.size());
    cues.reserve(c.size());
    for (const auto& r : c.records) {
      seqs.push_back(tokenize_tight(r.text, model.vocab, model.config.max_len));
      cues.push_back(model.uses_gate() ? compute_cue_cache(model, seqs.back()) : CueCache{});
    }
    return std::make_pair(std::move(seqs), std::move(cues));
  };
  auto [train_seqs, train_cues] = prep(train_corpus);
  auto [val_seqs, val_cues] = prep(val_corpus);

  Adam det_opt(schedule.learning_rate);
  Adam sel_opt(schedule.learning_rate * schedule.selector_lr_scale);
  Adam clf_opt(schedule.learning_rate);
  visit_trainable_params(model, [&](const std::string& name, Mat& m) {
    if (name.rfind("selector.", 0) == 0)
      sel_opt.attach(&m);
    else if (name.rfind("classifier.", 0) == 0)
      clf_opt.attach(&m);
    else
      det_opt.attach(&m);
  });

  Rng rng = make_rng(schedule.seed ^ 0xda3e39cb94b95bdbULL);
  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  struct Snapshot {
    EncoderState detector;
    SelectorParams selector;
    ClassifierParams classifier;
  };
  Snapshot best{model.detector, model.selector, model.classifier};
  int since_best = 0;

  auto val_f1 = [&]() {
    std::vector<int> preds, labels;
    preds.reserve(val_seqs.size());
    labels.reserve(val_seqs.size());
    for (std::size_t i = 0; i < val_seqs.size(); ++i) {
      Vec z = logits_for(model, val_seqs[i], &val_cues[i], false);
      preds.push_back(z(1) > z(0) ? 1 : 0);
      labels.push_back(val_corpus.records[i].label);
    }
    return macro_f1(preds, labels);
  };

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end =
          std::min(order.size(), at + static_cast<std::size_t>(schedule.batch_size));
      Tape tape;
      EncoderNodes det = bind_encoder(tape, model.detector, true);
      SelectorNodes sel = bind_selector(tape, model.selector, true);
      ClassifierNodes clf = bind_classifier(tape, model.classifier, true);
      std::vector<Node*> losses;
      for (std::size_t i = at; i < end; ++i) {
        const std::size_t ex = order[i];
        ForwardOut fo = example_graph(tape, det, model.uses_gate() ? &sel : nullptr, clf,
                                      train_seqs[ex], train_cues[ex], true, &rng);
        Node* probs = tape.rows_softmax(fo.logits, Eigen::RowVectorXd::Zero(2));
        const int y = train_corpus.records[ex].label;
        const double w = weights.weight[static_cast<std::size_t>(y)];
        Node* ex_loss = tape.wnll(probs, y, w);
        if (fo.gate != nullptr && schedule.gate_loss_weight > 0) {
          Node* gate_probs = gate_prob_pair(tape, fo.gate, train_seqs[ex].cls_index);
          Node* gate_loss = tape.wnll(gate_probs, y, w * schedule.gate_loss_weight);
          ex_loss = tape.add(ex_loss, gate_loss);
        }
        losses.push_back(ex_loss);
      }
      Node* batch_loss = tape.mean_scalars(losses);
      tape.backward(batch_loss);
      std::vector<const Mat*> det_grads, sel_grads, clf_grads;
      for (Node* n : det.flat) det_grads.push_back(n->has_grad() ? &n->grad : nullptr);
      for (Node* n : sel.flat) sel_grads.push_back(n->has_grad() ? &n->grad : nullptr);
      for (Node* n : clf.flat) clf_grads.push_back(n->has_grad() ? &n->grad : nullptr);
      if (epoch >= schedule.detector_freeze_epochs) det_opt.step(det_grads);
      clf_opt.step(clf_grads);
      if (epoch >= schedule.selector_warmup_epochs) sel_opt.step(sel_grads);
      epoch_loss += batch_loss->value(0, 0);
      ++n_batches;
    }
    log.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    const double f1 = val_f1();
    log.val_macro_f1.push_back(f1);
    if (f1 > log.best_val_macro_f1) {
      log.best_val_macro_f1 = f1;
      log.best_epoch = epoch;
      best = {model.detector, model.selector, model.classifier};
      since_best = 0;
    } else if (++since_best >= schedule.early_stop_patience) {
      break;
    }
  }
  model.detector = std::move(best.detector);
  model.selector = std::move(best.selector);
  model.classifier = std::move(best.classifier);
  return log;
}

Prediction predict(const std::string& text, const HateModel& model) {
  if (normalize_text(text).empty()) throw validation_error("predict: empty text");
  TokenSequence seq = tokenize_tight(text, model.vocab, model.config.max_len);
  CueCache cue = compute_cue_cache(model, seq);

  AttentionTensor det_attn;
  ForwardCapture cap;
  cap.attention = &det_attn;
  Vec gate;
  Vec z = logits_for(model, seq, &cue, false, cap, &gate);

  Prediction p;
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  p.probs = e / e.sum();
  p.label = p.probs(1) > p.probs(0) ? 1 : 0;
  p.attribution.tokens = display_tokens(text, model.config.max_len);
  p.attribution.sentiment = cue.s;
  p.attribution.aggression = cue.a;
  p.attribution.fusion = gate;
  p.attribution.detector_cls = extract_cue_attention(det_attn, seq.cls_index, seq.mask);
  return p;
}

LossProbe loss_probe(const HateModel& model, const std::vector<TokenSequence>& seqs,
                     const std::vector<CueCache>& cues, const std::vector<int>& labels,
                     const ClassWeights& weights) {
  if (seqs.size() != cues.size() || seqs.size() != labels.size() || seqs.empty())
    throw validation_error("loss_probe: input lengths disagree");
  Tape tape;
  EncoderNodes det = bind_encoder(tape, model.detector, true);
  SelectorNodes sel = bind_selector(tape, model.selector, true);
  ClassifierNodes clf = bind_classifier(tape, model.classifier, true);
  std::vector<Node*> losses;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    ForwardOut fo = example_graph(tape, det, model.uses_gate() ? &sel : nullptr, clf,
                                  seqs[i], cues[i], false, nullptr);
    Node* probs = tape.rows_softmax(fo.logits, Eigen::RowVectorXd::Zero(2));
    losses.push_back(tape.wnll(probs, labels[i], weights.weight[static_cast<std::size_t>(labels[i])]));
  }
  Node* total = tape.mean_scalars(losses);
  tape.backward(total);

  LossProbe probe;
  probe.value = total->value(0, 0);
  std::vector<Node*> flat;
  flat.insert(flat.end(), det.flat.begin(), det.flat.end());
  flat.insert(flat.end(), sel.flat.begin(), sel.flat.end());
  flat.insert(flat.end(), clf.flat.begin(), clf.flat.end());
  std::size_t at = 0;
  visit_trainable_params(const_cast<HateModel&>(model), [&](const std::string& name, Mat& m) {
    Node* n = flat[at++];
    probe.grads.emplace_back(name, n->has_grad() ? n->grad : Mat::Zero(m.rows(), m.cols()));
  });
  return probe;
}

double loss_value(const HateModel& model, const std::vector<TokenSequence>& seqs,
                  const std::vector<CueCache>& cues, const std::vector<int>& labels,
                  const ClassWeights& weights) {
  if (seqs.size() != cues.size() || seqs.size() != labels.size() || seqs.empty())
    throw validation_error("loss_value: input lengths disagree");
  double total = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    Vec z = logits_for(model, seqs[i], &cues[i], false);
    const double m = z.maxCoeff();
    Vec e = (z.array() - m).exp();
    Vec probs = e / e.sum();
    total += loss(probs, labels[i], weights);
  }
  return total / static_cast<double>(seqs.size());
}

void save_bundle(const HateModel& model, const std::string& dir,
                 const std::string& manifest_extra_json) {
  fs::create_directories(dir);
  save_encoder(model.detector, (fs::path(dir) / "detector.ckpt").string());
  save_encoder(model.sentiment, (fs::path(dir) / "sentiment.ckpt").string());
  save_encoder(model.aggression, (fs::path(dir) / "aggression.ckpt").string());
  save_vocab(model.vocab, (fs::path(dir) / "vocab.txt").string());

  json header;
  header["schema_version"] = 1;
  header["kind"] = "fusion";
  header["variant"] = variant_name(model.variant);
  header["selector_hidden"] = model.selector.hidden();
  header["classifier_hidden"] = model.classifier.hidden();
  std::vector<std::pair<std::string, const Mat*>> tensors;
  visit_selector_params(const_cast<SelectorParams&>(model.selector),
                        [&](const std::string& n, Mat& m) { tensors.emplace_back(n, &m); });
  visit_classifier_params(const_cast<ClassifierParams&>(model.classifier),
                          [&](const std::string& n, Mat& m) { tensors.emplace_back(n, &m); });
  std::ofstream out(fs::path(dir) / "fusion.ckpt", std::ios::binary);
  if (!out) throw io_error("cannot write fusion checkpoint in " + dir);
  write_tensor_archive(out, header.dump(), tensors);

  json manifest;
  manifest["schema_version"] = 1;
  manifest["kind"] = "model_bundle";
  manifest["tool_version"] = kVersion;
  manifest["variant"] = variant_name(model.variant);
  manifest["config"] = {{"n_layers", model.config.n_layers}, {"d_model", model.config.d_model},
                        {"n_heads", model.config.n_heads},   {"d_head", model.config.d_head},
                        {"d_ff", model.config.d_ff},         {"max_len", model.config.max_len},
                        {"dropout", model.config.dropout}};
  manifest["run"] = json::parse(manifest_extra_json);
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!mf) throw io_error("cannot write bundle manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

HateModel load_bundle(const std::string& dir) {
  HateModel m;
  m.detector = load_encoder((fs::path(dir) / "detector.ckpt").string());
  m.sentiment = load_encoder((fs::path(dir) / "sentiment.ckpt").string());
  m.aggression = load_encoder((fs::path(dir) / "aggression.ckpt").string());
  m.vocab = load_vocab((fs::path(dir) / "vocab.txt").string());
  m.config = m.detector.cfg;

  std::ifstream in(fs::path(dir) / "fusion.ckpt", std::ios::binary);
  if (!in) throw io_error("cannot open fusion checkpoint in " + dir);
  std::vector<std::pair<std::string, Mat>> tensors;
  json header = json::parse(read_tensor_archive(in, tensors));
  if (header.at("kind").get<std::string>() != "fusion")
    throw io_error("fusion checkpoint has wrong kind");
  m.variant = variant_from_name(header.at("variant").get<std::string>());
  std::size_t at = 0;
  auto take = [&](const std::string& name, Mat& dst) {
    if (at >= tensors.size() || tensors[at].first != name)
      throw io_error("fusion checkpoint tensor order mismatch at '" + name + "'");
    dst = std::move(tensors[at].second);
    ++at;
  };
  visit_selector_params(m.selector, take);
  visit_classifier_params(m.classifier, take);

  if (m.detector.vocab_size != m.vocab.size())
    throw io_error("bundle vocabulary does not match detector checkpoint");
  return m;
}

}  // namespace cuedet
