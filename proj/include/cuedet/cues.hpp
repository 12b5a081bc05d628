#pragma once

#include "cuedet/encoder.hpp"

namespace cuedet {

// The pair of CLS-row attention vectors pulled from the frozen cue encoders.
// Each sums to 1 over unmasked positions and is zero at PAD columns.
struct CueAttention {
  Vec sentiment;   // S, length k
  Vec aggression;  // A, length k
};

// C: the per-token gate produced by the selector head. Sigmoid-bounded in
// (0,1) at real positions, forced to 0 at PAD.
struct FusionVector {
  Vec c;
};

// Per-position selector: (s_t, a_t) -> tanh hidden -> sigmoid scalar, weights
// shared across positions so any sequence length is accepted.
struct SelectorParams {
  Mat w1;  // 2 x hidden
  Mat b1;  // 1 x hidden
  Mat w2;  // hidden x 1
  Mat b2;  // 1 x 1

  int hidden() const { return static_cast<int>(w1.cols()); }
};

SelectorParams init_selector(int hidden, std::uint64_t seed);

template <class Params, class Fn>
void visit_selector_params(Params& p, Fn&& fn) {
  fn("selector.w1", p.w1);
  fn("selector.b1", p.b1);
  fn("selector.w2", p.w2);
  fn("selector.b2", p.b2);
}

// Mean over the last block's head attention matrices, CLS row. The layer is
// configurable for ablation; -1 selects the last block.
Vec extract_cue_attention(const AttentionTensor& attn, int cls_index,
                          const std::vector<int>& mask, int layer = -1);

// c_t = sigmoid(mlp(s_t, a_t)) at unmasked positions, 0 at PAD.
FusionVector fuse_cues(const CueAttention& cue, const SelectorParams& params,
                       const std::vector<int>& mask);

// Returns a frozen copy: training refuses to touch it and forward passes run
// without dropout.
EncoderState freeze(const EncoderState& state);

struct CueGuidance {
  std::vector<std::string> tokens;
  CueAttention cue;
  FusionVector fusion;
};

// Tokenizes once, runs both frozen cue encoders, extracts S and A, and fuses
// them into C. Throws contract_error if either cue state is unfrozen.
CueGuidance cue_guidance(const std::string& text, const EncoderState& sentiment_state,
                         const EncoderState& aggression_state, const SelectorParams& selector,
                         const Vocabulary& vocab);

// {tokens, S, A, C} JSON document for the visualization pipeline.
std::string cue_guidance_json(const CueGuidance& g);

// Tape node graph of the selector over constant inputs S, A (each k x 1):
// returns the k x 1 gate with PAD entries zeroed. Used by the hate trainer.
struct SelectorNodes {
  Node* w1;
  Node* b1;
  Node* w2;
  Node* b2;
  std::vector<Node*> flat;
};

SelectorNodes bind_selector(Tape& tape, const SelectorParams& params, bool trainable);
Node* selector_forward(Tape& tape, const SelectorNodes& sel, const Vec& s, const Vec& a,
                       const std::vector<int>& mask);

}  // namespace cuedet
