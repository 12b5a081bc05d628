#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cuedet/tape.hpp"
#include "cuedet/vocab.hpp"

namespace cuedet {

struct EncoderConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_head = 16;  // d_model / n_heads
  int d_ff = 256;
  int max_len = 128;
  double dropout = 0.2;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Desk-scale default (trainable from scratch on a CPU) and the full-size
// preset for users bringing pretrained weights.
EncoderConfig desk_config();
EncoderConfig roberta_base_config();
EncoderConfig tiny_config();  // 2 layers, d=8: used by gradient checks

struct AttentionParams {
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
  AttentionParams attn;
  Mat ln1_g, ln1_b;
  Mat ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Mat ln2_g, ln2_b;
};

// All learnable parameters of one encoder stack plus the optional task head.
// When `frozen` is set the trainer refuses to touch it and forward passes run
// without dropout.
struct EncoderState {
  EncoderConfig cfg;
  int vocab_size = 0;
  int n_classes = 0;  // 0 = no task head
  Mat tok_emb;        // vocab_size x d_model
  Mat pos_emb;        // max_len x d_model
  std::vector<BlockParams> blocks;
  Mat head_w, head_b;  // d_model x n_classes, 1 x n_classes
  bool frozen = false;

  bool has_head() const { return n_classes > 0; }
};

EncoderState init_encoder_state(const EncoderConfig& cfg, int vocab_size, int n_classes,
                                std::uint64_t seed);

// Stable parameter enumeration shared by the optimizer, checkpoints, and
// freeze snapshots.
template <class State, class Fn>
void visit_params(State& s, Fn&& fn) {
  fn("tok_emb", s.tok_emb);
  fn("pos_emb", s.pos_emb);
  for (std::size_t i = 0; i < s.blocks.size(); ++i) {
    auto& b = s.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    fn(p + "attn.wq", b.attn.wq);
    fn(p + "attn.bq", b.attn.bq);
    fn(p + "attn.wk", b.attn.wk);
    fn(p + "attn.bk", b.attn.bk);
    fn(p + "attn.wv", b.attn.wv);
    fn(p + "attn.bv", b.attn.bv);
    fn(p + "attn.wo", b.attn.wo);
    fn(p + "attn.bo", b.attn.bo);
    fn(p + "ln1.g", b.ln1_g);
    fn(p + "ln1.b", b.ln1_b);
    fn(p + "ffn.w1", b.ffn_w1);
    fn(p + "ffn.b1", b.ffn_b1);
    fn(p + "ffn.w2", b.ffn_w2);
    fn(p + "ffn.b2", b.ffn_b2);
    fn(p + "ln2.g", b.ln2_g);
    fn(p + "ln2.b", b.ln2_b);
  }
  if (s.has_head()) {
    fn("head.w", s.head_w);
    fn("head.b", s.head_b);
  }
}

// Post-softmax attention probabilities, [layer][head], each k x k and
// row-stochastic over unmasked keys with PAD columns exactly zero.
struct AttentionTensor {
  std::vector<std::vector<Mat>> probs;

  int n_layers() const { return static_cast<int>(probs.size()); }
  int n_heads() const { return probs.empty() ? 0 : static_cast<int>(probs.front().size()); }
  int seq_len() const {
    return probs.empty() || probs.front().empty()
               ? 0
               : static_cast<int>(probs.front().front().rows());
  }
};

// Per-layer hidden states, k x d_model each; back() feeds the task head.
using HiddenStates = std::vector<Mat>;

// softmax(Q K^T / sqrt(d_head)) with masked key columns forced to exact zero.
Mat attention_probs(const Mat& q, const Mat& k, const std::vector<int>& mask);

struct EncodeResult {
  HiddenStates hidden;
  AttentionTensor attention;
};

// Full-stack forward pass with attention capture. Deterministic when
// train_mode is off (dropout disabled).
EncodeResult encode(const TokenSequence& seq, const EncoderState& state,
                    const EncoderConfig& cfg, bool train_mode = false,
                    Rng* rng = nullptr);
EncodeResult encode(const TokenSequence& seq, const EncoderState& state);

// Tape plumbing shared by inference and training ------------------------------

struct AttnNodeParams {
  Node* wq;
  Node* bq;
  Node* wk;
  Node* bk;
  Node* wv;
  Node* bv;
  Node* wo;
  Node* bo;
};

struct BlockNodes {
  AttnNodeParams attn;
  Node* ln1_g;
  Node* ln1_b;
  Node* ffn_w1;
  Node* ffn_b1;
  Node* ffn_w2;
  Node* ffn_b2;
  Node* ln2_g;
  Node* ln2_b;
};

struct EncoderNodes {
  const EncoderConfig* cfg = nullptr;
  Node* tok_emb = nullptr;
  Node* pos_emb = nullptr;
  std::vector<BlockNodes> blocks;
  Node* head_w = nullptr;
  Node* head_b = nullptr;
  std::vector<Node*> flat;  // visit_params order, for gradient collection
};

// Creates one leaf node per parameter tensor; reused across the examples of a
// batch.
EncoderNodes bind_encoder(Tape& tape, const EncoderState& state, bool trainable);

struct ForwardCapture {
  AttentionTensor* attention = nullptr;
  HiddenStates* hidden = nullptr;
};

// Runs the stack on one sequence; returns the final k x d_model hidden node.
Node* encoder_forward(Tape& tape, const EncoderNodes& enc, const TokenSequence& seq,
                      bool use_dropout, Rng* rng, ForwardCapture capture = {});

// Task-head logits at the CLS row (1 x n_classes node).
Node* head_logits(Tape& tape, const EncoderNodes& enc, Node* hidden, int cls_index);

// Inference-path task head: class probabilities for one text.
Vec classify_with_head(const EncoderState& state, const TokenSequence& seq);

// Cue pretraining -------------------------------------------------------------

enum class CueTask { sentiment, aggression };

struct CueTrainSchedule {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 10;
  int early_stop_patience = 3;
  std::uint64_t seed = 0;
};

struct CueTrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  double best_val_accuracy = 0.0;
  double majority_baseline = 0.0;
  int best_epoch = -1;
};

// Trains an encoder with a task head on the cue corpus (sentiment: 3 classes,
// aggression: 2) until validation accuracy stops improving. The returned
// state beats the majority-class baseline and is ready to freeze.
EncoderState pretrain_cue_classifier(const Corpus& train, const Corpus& val,
                                     const EncoderConfig& cfg, CueTask task,
                                     const CueTrainSchedule& schedule,
                                     const Vocabulary& vocab, CueTrainLog* log = nullptr);

// Checkpoint I/O --------------------------------------------------------------

// Single-file archive: versioned JSON header followed by named float64
// little-endian tensors; round-trips bit-exactly.
void save_encoder(const EncoderState& state, const std::string& path);
EncoderState load_encoder(const std::string& path);

// The raw archive container (also used for the fusion-parameter bundle).
void write_tensor_archive(std::ostream& out, const std::string& header_json,
                          const std::vector<std::pair<std::string, const Mat*>>& tensors);
std::string read_tensor_archive(std::istream& in,
                                std::vector<std::pair<std::string, Mat>>& tensors);

}  // namespace cuedet
