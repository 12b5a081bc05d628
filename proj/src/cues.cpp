#include "cuedet/cues.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace cuedet {

SelectorParams init_selector(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw config_error("init_selector: hidden must be positive");
  Rng rng = make_rng(seed);
  SelectorParams p;
  auto fill = [&](Mat& m, int r, int c) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / (r + c)));
    m.resize(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = init(rng);
  };
  fill(p.w1, 2, hidden);
  p.b1 = Mat::Zero(1, hidden);
  fill(p.w2, hidden, 1);
  p.b2 = Mat::Zero(1, 1);
  return p;
}

Vec extract_cue_attention(const AttentionTensor& attn, int cls_index,
                          const std::vector<int>& mask, int layer) {
  if (attn.n_layers() == 0 || attn.n_heads() == 0)
    throw validation_error("extract_cue_attention: empty attention tensor");
  const int k = attn.seq_len();
  if (cls_index < 0 || cls_index >= k)
    throw validation_error("extract_cue_attention: cls_index out of range");
  if (static_cast<int>(mask.size()) != k)
    throw validation_error("extract_cue_attention: mask length mismatch");
  if (layer < 0) layer += attn.n_layers();
  if (layer < 0 || layer >= attn.n_layers())
    throw validation_error("extract_cue_attention: layer out of range");

  const auto& heads = attn.probs[static_cast<std::size_t>(layer)];
  Vec out = Vec::Zero(k);
  for (const Mat& h : heads) out += h.row(cls_index).transpose();
  out /= static_cast<double>(heads.size());
  return out;
}

FusionVector fuse_cues(const CueAttention& cue, const SelectorParams& params,
                       const std::vector<int>& mask) {
  const Eigen::Index k = cue.sentiment.size();
  if (cue.aggression.size() != k || static_cast<Eigen::Index>(mask.size()) != k)
    throw validation_error("fuse_cues: S, A, mask lengths disagree");
  FusionVector f;
  f.c = Vec::Zero(k);
  for (Eigen::Index t = 0; t < k; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    Eigen::RowVector2d in(cue.sentiment(t), cue.aggression(t));
    Eigen::RowVectorXd h = ((in * params.w1 + params.b1.row(0)).array().tanh()).matrix();
    const double z = (h * params.w2)(0, 0) + params.b2(0, 0);
    f.c(t) = 1.0 / (1.0 + std::exp(-z));
  }
  return f;
}

EncoderState freeze(const EncoderState& state) {
  EncoderState out = state;
  out.frozen = true;
  return out;
}

CueGuidance cue_guidance(const std::string& text, const EncoderState& sentiment_state,
                         const EncoderState& aggression_state, const SelectorParams& selector,
                         const Vocabulary& vocab) {
  if (!sentiment_state.frozen || !aggression_state.frozen)
    throw contract_error("cue_guidance: cue encoders must be frozen");
  if (sentiment_state.vocab_size != vocab.size() || aggression_state.vocab_size != vocab.size())
    throw config_error("cue_guidance: cue encoders use a different vocabulary");

  const int cap = std::min(sentiment_state.cfg.max_len, aggression_state.cfg.max_len);
  TokenSequence seq = tokenize_tight(text, vocab, cap);
  CueGuidance g;
  g.tokens = display_tokens(text, cap);

  EncodeResult sent = encode(seq, sentiment_state);
  EncodeResult aggr = encode(seq, aggression_state);
  g.cue.sentiment = extract_cue_attention(sent.attention, seq.cls_index, seq.mask);
  g.cue.aggression = extract_cue_attention(aggr.attention, seq.cls_index, seq.mask);
  g.fusion = fuse_cues(g.cue, selector, seq.mask);
  return g;
}

std::string cue_guidance_json(const CueGuidance& g) {
  nlohmann::ordered_json j;
  j["tokens"] = g.tokens;
  j["S"] = std::vector<double>(g.cue.sentiment.data(), g.cue.sentiment.data() + g.cue.sentiment.size());
  j["A"] = std::vector<double>(g.cue.aggression.data(),
                               g.cue.aggression.data() + g.cue.aggression.size());
  j["C"] = std::vector<double>(g.fusion.c.data(), g.fusion.c.data() + g.fusion.c.size());
  return j.dump(2);
}

SelectorNodes bind_selector(Tape& tape, const SelectorParams& params, bool trainable) {
  SelectorNodes s;
  s.w1 = tape.leaf(params.w1, trainable);
  s.b1 = tape.leaf(params.b1, trainable);
  s.w2 = tape.leaf(params.w2, trainable);
  s.b2 = tape.leaf(params.b2, trainable);
  s.flat = {s.w1, s.b1, s.w2, s.b2};
  return s;
}

Node* selector_forward(Tape& tape, const SelectorNodes& sel, const Vec& s, const Vec& a,
                       const std::vector<int>& mask) {
  const Eigen::Index k = s.size();
  if (a.size() != k || static_cast<Eigen::Index>(mask.size()) != k)
    throw validation_error("selector_forward: S, A, mask lengths disagree");
  Mat in(k, 2);
  in.col(0) = s;
  in.col(1) = a;
  Node* x = tape.leaf(in, false);
  Node* h = tape.tanh_(tape.add_rowvec(tape.matmul(x, sel.w1), sel.b1));
  Node* z = tape.add_rowvec(tape.matmul(h, sel.w2), sel.b2);
  Node* c = tape.sigmoid_(z);
  Mat m(k, 1);
  for (Eigen::Index t = 0; t < k; ++t) m(t, 0) = mask[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
  return tape.cmul(c, tape.leaf(m, false));
}

}  // namespace cuedet
