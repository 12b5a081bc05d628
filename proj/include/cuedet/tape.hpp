#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <vector>

#include "cuedet/common.hpp"

namespace cuedet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Reverse-mode autodiff over dense double matrices.
//
// Nodes are appended to a Tape in creation order and referenced by raw
// pointer; the tape owns them. backward(root) seeds d(root)=1 and walks the
// tape in reverse, so ops may only consume nodes created earlier on the same
// tape. A fresh tape is built per batch (define-by-run).
struct Node {
  Mat value;
  Mat grad;  // empty until first accumulation; empty == all zeros
  bool requires_grad = false;
  std::function<void(Node&)> pull;  // propagates this->grad into parents

  void accumulate(const Mat& g) {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    grad += g;
  }
  bool has_grad() const { return grad.size() != 0; }
};

class Tape {
 public:
  // Leaf holding a copy of v. Parameters are leaves with requires_grad=true.
  Node* leaf(Mat v, bool requires_grad = false);

  Node* matmul(Node* a, Node* b);
  Node* add(Node* a, Node* b);           // same shape
  Node* add_rowvec(Node* a, Node* b);    // b is 1 x cols, broadcast over rows
  Node* cmul(Node* a, Node* b);          // elementwise
  Node* scale(Node* a, double s);
  Node* colscale(Node* a, Node* c);      // row t of a scaled by c(t,0); c is k x 1
  Node* transpose_(Node* a);
  Node* slice_cols(Node* a, int start, int n);
  Node* slice_rows(Node* a, int start, int n);
  Node* concat_cols(const std::vector<Node*>& parts);
  Node* row(Node* a, int i);             // 1 x cols view copy
  Node* embed_rows(Node* table, std::vector<int> ids);

  // Per-row softmax of (a + key_mask broadcast over rows). key_mask holds 0
  // for visible keys and -inf for masked ones, so masked columns come out
  // exactly 0.
  Node* rows_softmax(Node* a, const Eigen::RowVectorXd& key_mask);

  // Per-row layer norm with learnable gain/bias (each 1 x d).
  Node* layernorm_rows(Node* x, Node* gain, Node* bias, double eps = 1e-5);

  Node* tanh_(Node* a);
  Node* sigmoid_(Node* a);
  Node* gelu(Node* a);  // exact erf form

  // Inverted dropout; identity when enabled=false, rate=0, or rng=nullptr.
  Node* dropout(Node* a, double rate, Rng* rng, bool enabled);

  // Scalar node: w * -log(max(probs(0, y), eps)).
  Node* wnll(Node* probs, int y, double w, double eps = 1e-12);

  // Mean of 1x1 nodes.
  Node* mean_scalars(const std::vector<Node*>& xs);

  // Seeds d(root)/d(root)=1 and accumulates grads into every node with
  // requires_grad on the path. root must be 1x1.
  void backward(Node* root);

  std::size_t size() const { return nodes_.size(); }

 private:
  Node* make(Mat value, bool requires_grad);
  std::deque<Node> nodes_;
};

}  // namespace cuedet
