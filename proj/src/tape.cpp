#include "cuedet/tape.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace cuedet {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Node* Tape::make(Mat value, bool requires_grad) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return &n;
}

Node* Tape::leaf(Mat v, bool requires_grad) { return make(std::move(v), requires_grad); }

Node* Tape::matmul(Node* a, Node* b) {
  Node* out = make(a->value * b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, b](Node& o) {
      if (a->requires_grad) a->accumulate(o.grad * b->value.transpose());
      if (b->requires_grad) b->accumulate(a->value.transpose() * o.grad);
    };
  }
  return out;
}

Node* Tape::add(Node* a, Node* b) {
  Node* out = make(a->value + b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, b](Node& o) {
      if (a->requires_grad) a->accumulate(o.grad);
      if (b->requires_grad) b->accumulate(o.grad);
    };
  }
  return out;
}

Node* Tape::add_rowvec(Node* a, Node* b) {
  Mat v = a->value;
  v.rowwise() += Eigen::RowVectorXd(b->value.row(0));
  Node* out = make(std::move(v), a->requires_grad || b->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, b](Node& o) {
      if (a->requires_grad) a->accumulate(o.grad);
      if (b->requires_grad) b->accumulate(o.grad.colwise().sum());
    };
  }
  return out;
}

Node* Tape::cmul(Node* a, Node* b) {
  Node* out = make(a->value.cwiseProduct(b->value), a->requires_grad || b->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, b](Node& o) {
      if (a->requires_grad) a->accumulate(o.grad.cwiseProduct(b->value));
      if (b->requires_grad) b->accumulate(o.grad.cwiseProduct(a->value));
    };
  }
  return out;
}

Node* Tape::scale(Node* a, double s) {
  Node* out = make(a->value * s, a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, s](Node& o) { a->accumulate(o.grad * s); };
  }
  return out;
}

Node* Tape::colscale(Node* a, Node* c) {
  Mat v = a->value;
  for (Eigen::Index r = 0; r < v.rows(); ++r) v.row(r) *= c->value(r, 0);
  Node* out = make(std::move(v), a->requires_grad || c->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, c](Node& o) {
      if (a->requires_grad) {
        Mat ga = o.grad;
        for (Eigen::Index r = 0; r < ga.rows(); ++r) ga.row(r) *= c->value(r, 0);
        a->accumulate(ga);
      }
      if (c->requires_grad) {
        Mat gc(c->value.rows(), 1);
        for (Eigen::Index r = 0; r < gc.rows(); ++r)
          gc(r, 0) = o.grad.row(r).dot(a->value.row(r));
        c->accumulate(gc);
      }
    };
  }
  return out;
}

Node* Tape::transpose_(Node* a) {
  Node* out = make(a->value.transpose(), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a](Node& o) { a->accumulate(o.grad.transpose()); };
  }
  return out;
}

Node* Tape::slice_cols(Node* a, int start, int n) {
  Node* out = make(a->value.middleCols(start, n), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, start, n](Node& o) {
      Mat g = Mat::Zero(a->value.rows(), a->value.cols());
      g.middleCols(start, n) = o.grad;
      a->accumulate(g);
    };
  }
  return out;
}

Node* Tape::slice_rows(Node* a, int start, int n) {
  Node* out = make(a->value.middleRows(start, n), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, start, n](Node& o) {
      Mat g = Mat::Zero(a->value.rows(), a->value.cols());
      g.middleRows(start, n) = o.grad;
      a->accumulate(g);
    };
  }
  return out;
}

Node* Tape::concat_cols(const std::vector<Node*>& parts) {
  Eigen::Index rows = parts.front()->value.rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Node* p : parts) {
    cols += p->value.cols();
    rg = rg || p->requires_grad;
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (Node* p : parts) {
    v.middleCols(at, p->value.cols()) = p->value;
    at += p->value.cols();
  }
  Node* out = make(std::move(v), rg);
  if (out->requires_grad) {
    std::vector<Node*> ps = parts;
    out->pull = [ps](Node& o) {
      Eigen::Index at = 0;
      for (Node* p : ps) {
        if (p->requires_grad) p->accumulate(o.grad.middleCols(at, p->value.cols()));
        at += p->value.cols();
      }
    };
  }
  return out;
}

Node* Tape::row(Node* a, int i) {
  Node* out = make(a->value.row(i), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, i](Node& o) {
      Mat g = Mat::Zero(a->value.rows(), a->value.cols());
      g.row(i) = o.grad;
      a->accumulate(g);
    };
  }
  return out;
}

Node* Tape::embed_rows(Node* table, std::vector<int> ids) {
  Mat v(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) v.row(static_cast<Eigen::Index>(r)) = table->value.row(ids[r]);
  Node* out = make(std::move(v), table->requires_grad);
  if (out->requires_grad) {
    out->pull = [table, ids = std::move(ids)](Node& o) {
      if (table->grad.size() == 0)
        table->grad = Mat::Zero(table->value.rows(), table->value.cols());
      for (std::size_t r = 0; r < ids.size(); ++r)
        table->grad.row(ids[r]) += o.grad.row(static_cast<Eigen::Index>(r));
    };
  }
  return out;
}

Node* Tape::rows_softmax(Node* a, const Eigen::RowVectorXd& key_mask) {
  Mat z = a->value;
  z.rowwise() += key_mask;
  Mat p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double m = z.row(r).maxCoeff();
    Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
    p.row(r) = e / e.sum();
  }
  Node* out = make(std::move(p), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a](Node& o) {
      Mat g(o.value.rows(), o.value.cols());
      for (Eigen::Index r = 0; r < o.value.rows(); ++r) {
        double dot = o.grad.row(r).dot(o.value.row(r));
        g.row(r) = o.value.row(r).cwiseProduct((o.grad.row(r).array() - dot).matrix());
      }
      a->accumulate(g);
    };
  }
  return out;
}

Node* Tape::layernorm_rows(Node* x, Node* gain, Node* bias, double eps) {
  const Eigen::Index rows = x->value.rows();
  const Eigen::Index d = x->value.cols();
  Mat xhat(rows, d);
  Vec inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mu = x->value.row(r).mean();
    Eigen::RowVectorXd c = x->value.row(r).array() - mu;
    double var = c.squaredNorm() / static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = c * is;
  }
  Mat v = xhat;
  for (Eigen::Index r = 0; r < rows; ++r)
    v.row(r) = v.row(r).cwiseProduct(gain->value.row(0)) + bias->value.row(0);
  Node* out = make(std::move(v), x->requires_grad || gain->requires_grad || bias->requires_grad);
  if (out->requires_grad) {
    out->pull = [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
      const Eigen::Index rows = o.value.rows();
      const Eigen::Index d = o.value.cols();
      if (gain->requires_grad) {
        Mat gg = Mat::Zero(1, d);
        for (Eigen::Index r = 0; r < rows; ++r)
          gg.row(0) += o.grad.row(r).cwiseProduct(xhat.row(r));
        gain->accumulate(gg);
      }
      if (bias->requires_grad) bias->accumulate(o.grad.colwise().sum());
      if (x->requires_grad) {
        Mat gx(rows, d);
        for (Eigen::Index r = 0; r < rows; ++r) {
          Eigen::RowVectorXd dxhat = o.grad.row(r).cwiseProduct(gain->value.row(0));
          double m1 = dxhat.mean();
          double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
          gx.row(r) = (dxhat.array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
        }
        x->accumulate(gx);
      }
    };
  }
  return out;
}

Node* Tape::tanh_(Node* a) {
  Node* out = make(a->value.array().tanh().matrix(), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a](Node& o) {
      a->accumulate(o.grad.cwiseProduct((1.0 - o.value.array().square()).matrix()));
    };
  }
  return out;
}

Node* Tape::sigmoid_(Node* a) {
  Mat v = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  Node* out = make(std::move(v), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a](Node& o) {
      a->accumulate(o.grad.cwiseProduct((o.value.array() * (1.0 - o.value.array())).matrix()));
    };
  }
  return out;
}

Node* Tape::gelu(Node* a) {
  Mat v = a->value;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double x = v(i);
    v(i) = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  Node* out = make(std::move(v), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a](Node& o) {
      Mat g = o.grad;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        double x = a->value(i);
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        g(i) *= phi + x * pdf;
      }
      a->accumulate(g);
    };
  }
  return out;
}

Node* Tape::dropout(Node* a, double rate, Rng* rng, bool enabled) {
  if (!enabled || rate <= 0.0 || rng == nullptr) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(a->value.rows(), a->value.cols());
  const double inv_keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(*rng) ? inv_keep : 0.0;
  Node* out = make(a->value.cwiseProduct(mask), a->requires_grad);
  if (out->requires_grad) {
    out->pull = [a, mask = std::move(mask)](Node& o) {
      a->accumulate(o.grad.cwiseProduct(mask));
    };
  }
  return out;
}

Node* Tape::wnll(Node* probs, int y, double w, double eps) {
  double p = std::max(probs->value(0, y), eps);
  Mat v(1, 1);
  v(0, 0) = -w * std::log(p);
  Node* out = make(std::move(v), probs->requires_grad);
  if (out->requires_grad) {
    bool clamped = probs->value(0, y) < eps;
    out->pull = [probs, y, w, p, clamped](Node& o) {
      if (clamped) return;  // flat region of the clamp
      Mat g = Mat::Zero(1, probs->value.cols());
      g(0, y) = -w / p * o.grad(0, 0);
      probs->accumulate(g);
    };
  }
  return out;
}

Node* Tape::mean_scalars(const std::vector<Node*>& xs) {
  double s = 0.0;
  bool rg = false;
  for (Node* x : xs) {
    s += x->value(0, 0);
    rg = rg || x->requires_grad;
  }
  Mat v(1, 1);
  v(0, 0) = s / static_cast<double>(xs.size());
  Node* out = make(std::move(v), rg);
  if (out->requires_grad) {
    std::vector<Node*> parts = xs;
    out->pull = [parts](Node& o) {
      Mat g(1, 1);
      g(0, 0) = o.grad(0, 0) / static_cast<double>(parts.size());
      for (Node* p : parts)
        if (p->requires_grad) p->accumulate(g);
    };
  }
  return out;
}

void Tape::backward(Node* root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw config_error("backward: root must be scalar");
  Mat one(1, 1);
  one(0, 0) = 1.0;
  root->accumulate(one);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.requires_grad && n.pull && n.has_grad()) n.pull(n);
  }
}

}  // namespace cuedet
