#include "cuedet/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "cuedet/optim.hpp"
#include "json.hpp"

namespace cuedet {

namespace {
using json = nlohmann::ordered_json;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

void EncoderConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 || d_ff < 1 || max_len < 1)
    throw config_error("encoder config: all dimensions must be positive");
  if (d_model != n_heads * d_head)
    throw config_error("encoder config: d_model must equal n_heads * d_head");
  if (dropout < 0.0 || dropout >= 1.0)
    throw config_error("encoder config: dropout must lie in [0, 1)");
}

EncoderConfig desk_config() { return EncoderConfig{}; }

EncoderConfig roberta_base_config() {
  EncoderConfig c;
  c.n_layers = 12;
  c.d_model = 768;
  c.n_heads = 12;
  c.d_head = 64;
  c.d_ff = 3072;
  c.max_len = 512;
  c.dropout = 0.2;
  return c;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.d_ff = 16;
  c.max_len = 16;
  c.dropout = 0.0;
  return c;
}

EncoderState init_encoder_state(const EncoderConfig& cfg, int vocab_size, int n_classes,
                                std::uint64_t seed) {
  cfg.validate();
  if (vocab_size < 4) throw config_error("init_encoder_state: vocab too small");
  EncoderState s;
  s.cfg = cfg;
  s.vocab_size = vocab_size;
  s.n_classes = n_classes;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> init(0.0, 0.02);
  auto fill = [&](Mat& m, int r, int c) {
    m.resize(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = init(rng);
  };
  fill(s.tok_emb, vocab_size, cfg.d_model);
  fill(s.pos_emb, cfg.max_len, cfg.d_model);
  s.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& b : s.blocks) {
    fill(b.attn.wq, cfg.d_model, cfg.d_model);
    fill(b.attn.wk, cfg.d_model, cfg.d_model);
    fill(b.attn.wv, cfg.d_model, cfg.d_model);
    fill(b.attn.wo, cfg.d_model, cfg.d_model);
    b.attn.bq = Mat::Zero(1, cfg.d_model);
    b.attn.bk = Mat::Zero(1, cfg.d_model);
    b.attn.bv = Mat::Zero(1, cfg.d_model);
    b.attn.bo = Mat::Zero(1, cfg.d_model);
    b.ln1_g = Mat::Ones(1, cfg.d_model);
    b.ln1_b = Mat::Zero(1, cfg.d_model);
    fill(b.ffn_w1, cfg.d_model, cfg.d_ff);
    b.ffn_b1 = Mat::Zero(1, cfg.d_ff);
    fill(b.ffn_w2, cfg.d_ff, cfg.d_model);
    b.ffn_b2 = Mat::Zero(1, cfg.d_model);
    b.ln2_g = Mat::Ones(1, cfg.d_model);
    b.ln2_b = Mat::Zero(1, cfg.d_model);
  }
  if (n_classes > 0) {
    fill(s.head_w, cfg.d_model, n_classes);
    s.head_b = Mat::Zero(1, n_classes);
  }
  return s;
}

Mat attention_probs(const Mat& q, const Mat& k, const std::vector<int>& mask) {
  const Eigen::Index n = q.rows();
  if (n == 0) throw validation_error("attention_probs: empty sequence");
  if (k.rows() != n || k.cols() != q.cols())
    throw validation_error("attention_probs: Q/K shape mismatch");
  if (static_cast<Eigen::Index>(mask.size()) != n)
    throw validation_error("attention_probs: mask length mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat z = q * k.transpose() * scale;
  for (Eigen::Index j = 0; j < n; ++j)
    if (!mask[static_cast<std::size_t>(j)]) z.col(j).setConstant(kNegInf);
  Mat p(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double m = z.row(r).maxCoeff();
    Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

EncoderNodes bind_encoder(Tape& tape, const EncoderState& state, bool trainable) {
  state.cfg.validate();
  if (state.frozen && trainable)
    throw contract_error("bind_encoder: frozen state cannot be bound as trainable");
  EncoderNodes enc;
  enc.cfg = &state.cfg;
  enc.blocks.resize(state.blocks.size());
  std::vector<Node**> structured;
  structured.push_back(&enc.tok_emb);
  structured.push_back(&enc.pos_emb);
  for (auto& bn : enc.blocks) {
    structured.push_back(&bn.attn.wq);
    structured.push_back(&bn.attn.bq);
    structured.push_back(&bn.attn.wk);
    structured.push_back(&bn.attn.bk);
    structured.push_back(&bn.attn.wv);
    structured.push_back(&bn.attn.bv);
    structured.push_back(&bn.attn.wo);
    structured.push_back(&bn.attn.bo);
    structured.push_back(&bn.ln1_g);
    structured.push_back(&bn.ln1_b);
    structured.push_back(&bn.ffn_w1);
    structured.push_back(&bn.ffn_b1);
    structured.push_back(&bn.ffn_w2);
    structured.push_back(&bn.ffn_b2);
    structured.push_back(&bn.ln2_g);
    structured.push_back(&bn.ln2_b);
  }
  if (state.has_head()) {
    structured.push_back(&enc.head_w);
    structured.push_back(&enc.head_b);
  }
  std::size_t at = 0;
  visit_params(const_cast<EncoderState&>(state), [&](const std::string&, Mat& m) {
    Node* n = tape.leaf(m, trainable);
    *structured[at++] = n;
    enc.flat.push_back(n);
  });
  return enc;
}

Node* encoder_forward(Tape& tape, const EncoderNodes& enc, const TokenSequence& seq,
                      bool use_dropout, Rng* rng, ForwardCapture capture) {
  const EncoderConfig& cfg = *enc.cfg;
  const int k = seq.length();
  if (k < 1) throw validation_error("encoder_forward: empty sequence");
  if (k > cfg.max_len) throw validation_error("encoder_forward: sequence exceeds max_len");
  if (use_dropout && cfg.dropout > 0.0 && rng == nullptr)
    throw config_error("encoder_forward: dropout requires an rng");

  Eigen::RowVectorXd key_mask(k);
  for (int i = 0; i < k; ++i) key_mask(i) = seq.mask[static_cast<std::size_t>(i)] ? 0.0 : kNegInf;

  if (capture.attention) capture.attention->probs.assign(static_cast<std::size_t>(cfg.n_layers), {});
  if (capture.hidden) capture.hidden->clear();

  Node* x = tape.add(tape.embed_rows(enc.tok_emb, seq.ids), tape.slice_rows(enc.pos_emb, 0, k));
  x = tape.dropout(x, cfg.dropout, rng, use_dropout);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const BlockNodes& b = enc.blocks[static_cast<std::size_t>(layer)];
    Node* q = tape.add_rowvec(tape.matmul(x, b.attn.wq), b.attn.bq);
    Node* kk = tape.add_rowvec(tape.matmul(x, b.attn.wk), b.attn.bk);
    Node* v = tape.add_rowvec(tape.matmul(x, b.attn.wv), b.attn.bv);
    std::vector<Node*> heads;
    heads.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
      Node* qh = tape.slice_cols(q, h * cfg.d_head, cfg.d_head);
      Node* kh = tape.slice_cols(kk, h * cfg.d_head, cfg.d_head);
      Node* vh = tape.slice_cols(v, h * cfg.d_head, cfg.d_head);
      Node* scores = tape.scale(tape.matmul(qh, tape.transpose_(kh)), inv_sqrt_dh);
      Node* probs = tape.rows_softmax(scores, key_mask);
      if (capture.attention)
        capture.attention->probs[static_cast<std::size_t>(layer)].push_back(probs->value);
      heads.push_back(tape.matmul(probs, vh));
    }
    Node* ctx = cfg.n_heads == 1 ? heads.front() : tape.concat_cols(heads);
    Node* attn_out = tape.add_rowvec(tape.matmul(ctx, b.attn.wo), b.attn.bo);
    attn_out = tape.dropout(attn_out, cfg.dropout, rng, use_dropout);
    x = tape.layernorm_rows(tape.add(x, attn_out), b.ln1_g, b.ln1_b);

    Node* h1 = tape.gelu(tape.add_rowvec(tape.matmul(x, b.ffn_w1), b.ffn_b1));
    Node* f = tape.add_rowvec(tape.matmul(h1, b.ffn_w2), b.ffn_b2);
    f = tape.dropout(f, cfg.dropout, rng, use_dropout);
    x = tape.layernorm_rows(tape.add(x, f), b.ln2_g, b.ln2_b);
    if (capture.hidden) capture.hidden->push_back(x->value);
  }
  return x;
}

Node* head_logits(Tape& tape, const EncoderNodes& enc, Node* hidden, int cls_index) {
  if (!enc.head_w) throw config_error("head_logits: encoder has no task head");
  Node* cls = tape.row(hidden, cls_index);
  return tape.add_rowvec(tape.matmul(cls, enc.head_w), enc.head_b);
}

EncodeResult encode(const TokenSequence& seq, const EncoderState& state,
                    const EncoderConfig& cfg, bool train_mode, Rng* rng) {
  if (!(state.cfg == cfg)) throw config_error("encode: state does not match config");
  if (state.vocab_size < 1) throw config_error("encode: uninitialised state");
  for (int id : seq.ids)
    if (id < 0 || id >= state.vocab_size) throw config_error("encode: token id outside vocab");
  Tape tape;
  EncoderNodes enc = bind_encoder(tape, state, false);
  EncodeResult out;
  ForwardCapture cap;
  cap.attention = &out.attention;
  cap.hidden = &out.hidden;
  const bool use_dropout = train_mode && !state.frozen;
  encoder_forward(tape, enc, seq, use_dropout, rng, cap);
  return out;
}

EncodeResult encode(const TokenSequence& seq, const EncoderState& state) {
  return encode(seq, state, state.cfg, false, nullptr);
}

Vec classify_with_head(const EncoderState& state, const TokenSequence& seq) {
  if (!state.has_head()) throw config_error("classify_with_head: state has no task head");
  Tape tape;
  EncoderNodes enc = bind_encoder(tape, state, false);
  Node* hidden = encoder_forward(tape, enc, seq, false, nullptr);
  Node* logits = head_logits(tape, enc, hidden, seq.cls_index);
  Node* probs = tape.rows_softmax(logits, Eigen::RowVectorXd::Zero(logits->value.cols()));
  return probs->value.row(0);
}

namespace {

int task_arity(CueTask task) { return task == CueTask::sentiment ? 3 : 2; }

double majority_fraction(const Corpus& c, int arity) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(arity), 0);
  for (const auto& r : c.records) counts[static_cast<std::size_t>(r.label)] += 1;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(c.size());
}

}  // namespace

EncoderState pretrain_cue_classifier(const Corpus& train, const Corpus& val,
                                     const EncoderConfig& cfg, CueTask task,
                                     const CueTrainSchedule& schedule,
                                     const Vocabulary& vocab, CueTrainLog* log) {
  const int arity = task_arity(task);
  if (train.n_classes != arity || val.n_classes != arity)
    throw validation_error("pretrain_cue_classifier: corpus arity does not match task");
  if (train.records.empty() || val.records.empty())
    throw validation_error("pretrain_cue_classifier: empty corpus");
  for (const Corpus* c : {&train, &val})
    for (const auto& r : c->records)
      if (r.label < 0 || r.label >= arity)
        throw validation_error("pretrain_cue_classifier: label outside task range");

  EncoderState state = init_encoder_state(cfg, vocab.size(), arity, schedule.seed);

  std::vector<TokenSequence> train_seq, val_seq;
  train_seq.reserve(train.size());
  for (const auto& r : train.records) train_seq.push_back(tokenize_tight(r.text, vocab, cfg.max_len));
  val_seq.reserve(val.size());
  for (const auto& r : val.records) val_seq.push_back(tokenize_tight(r.text, vocab, cfg.max_len));

  Adam opt(schedule.learning_rate);
  visit_params(state, [&](const std::string&, Mat& m) { opt.attach(&m); });

  Rng rng = make_rng(schedule.seed + 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  CueTrainLog local_log;
  local_log.majority_baseline = majority_fraction(val, arity);
  EncoderState best = state;
  int since_best = 0;

  auto val_accuracy = [&]() {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < val_seq.size(); ++i) {
      Vec p = classify_with_head(state, val_seq[i]);
      Eigen::Index am;
      p.maxCoeff(&am);
      hit += (static_cast<int>(am) == val.records[i].label);
    }
    return static_cast<double>(hit) / static_cast<double>(val_seq.size());
  };

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(schedule.batch_size));
      Tape tape;
      EncoderNodes enc = bind_encoder(tape, state, true);
      std::vector<Node*> losses;
      for (std::size_t i = at; i < end; ++i) {
        const std::size_t ex = order[i];
        Node* hidden = encoder_forward(tape, enc, train_seq[ex], true, &rng);
        Node* logits = head_logits(tape, enc, hidden, train_seq[ex].cls_index);
        Node* probs = tape.rows_softmax(logits, Eigen::RowVectorXd::Zero(arity));
        losses.push_back(tape.wnll(probs, train.records[ex].label, 1.0));
      }
      Node* loss = tape.mean_scalars(losses);
      tape.backward(loss);
      std::vector<const Mat*> grads;
      grads.reserve(enc.flat.size());
      for (Node* n : enc.flat) grads.push_back(n->has_grad() ? &n->grad : nullptr);
      opt.step(grads);
      epoch_loss += loss->value(0, 0);
      ++batches;
    }
    local_log.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    const double acc = val_accuracy();
    local_log.val_accuracy.push_back(acc);
    if (acc > local_log.best_val_accuracy) {
      local_log.best_val_accuracy = acc;
      local_log.best_epoch = epoch;
      best = state;
      since_best = 0;
    } else if (++since_best >= schedule.early_stop_patience) {
      break;
    }
  }
  if (log) *log = local_log;
  if (local_log.best_val_accuracy <= local_log.majority_baseline)
    throw training_error("cue pretraining failed to beat the majority baseline");
  return best;
}

// -- checkpoint I/O -----------------------------------------------------------

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw io_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw io_error("checkpoint truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

constexpr char kMagic[8] = {'C', 'D', 'T', 'F', '0', '0', '0', '1'};

}  // namespace

void write_tensor_archive(std::ostream& out, const std::string& header_json,
                          const std::vector<std::pair<std::string, const Mat*>>& tensors) {
  out.write(kMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(header_json.size()));
  out.write(header_json.data(), static_cast<std::streamsize>(header_json.size()));
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(m->rows()));
    write_u32(out, static_cast<std::uint32_t>(m->cols()));
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) write_f64(out, (*m)(r, c));
  }
  if (!out) throw io_error("failed writing tensor archive");
}

std::string read_tensor_archive(std::istream& in,
                                std::vector<std::pair<std::string, Mat>>& tensors) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw io_error("not a tensor archive");
  const std::uint32_t hlen = read_u32(in);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw io_error("checkpoint truncated");
  const std::uint32_t count = read_u32(in);
  tensors.clear();
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t nlen = read_u32(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_f64(in);
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return header;
}

void save_encoder(const EncoderState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  json header;
  header["schema_version"] = 1;
  header["kind"] = "encoder";
  header["config"] = {{"n_layers", state.cfg.n_layers}, {"d_model", state.cfg.d_model},
                      {"n_heads", state.cfg.n_heads},   {"d_head", state.cfg.d_head},
                      {"d_ff", state.cfg.d_ff},         {"max_len", state.cfg.max_len},
                      {"dropout", state.cfg.dropout}};
  header["vocab_size"] = state.vocab_size;
  header["n_classes"] = state.n_classes;
  header["frozen"] = state.frozen;
  std::vector<std::pair<std::string, const Mat*>> tensors;
  visit_params(const_cast<EncoderState&>(state),
               [&](const std::string& name, Mat& m) { tensors.emplace_back(name, &m); });
  write_tensor_archive(out, header.dump(), tensors);
}

EncoderState load_encoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  std::vector<std::pair<std::string, Mat>> tensors;
  json header = json::parse(read_tensor_archive(in, tensors));
  if (header.at("schema_version").get<int>() != 1 ||
      header.at("kind").get<std::string>() != "encoder")
    throw io_error("unsupported checkpoint header: " + path);
  EncoderConfig cfg;
  const auto& jc = header.at("config");
  cfg.n_layers = jc.at("n_layers").get<int>();
  cfg.d_model = jc.at("d_model").get<int>();
  cfg.n_heads = jc.at("n_heads").get<int>();
  cfg.d_head = jc.at("d_head").get<int>();
  cfg.d_ff = jc.at("d_ff").get<int>();
  cfg.max_len = jc.at("max_len").get<int>();
  cfg.dropout = jc.at("dropout").get<double>();
  EncoderState state = init_encoder_state(cfg, header.at("vocab_size").get<int>(),
                                          header.at("n_classes").get<int>(), 0);
  state.frozen = header.at("frozen").get<bool>();
  std::size_t at = 0;
  visit_params(state, [&](const std::string& name, Mat& m) {
    if (at >= tensors.size() || tensors[at].first != name)
      throw io_error("checkpoint tensor order mismatch at '" + name + "'");
    if (tensors[at].second.rows() != m.rows() || tensors[at].second.cols() != m.cols())
      throw io_error("checkpoint tensor shape mismatch at '" + name + "'");
    m = std::move(tensors[at].second);
    ++at;
  });
  if (at != tensors.size()) throw io_error("checkpoint has extra tensors: " + path);
  return state;
}

}  // namespace cuedet
