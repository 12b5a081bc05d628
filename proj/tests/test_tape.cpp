#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cuedet/tape.hpp"

using namespace cuedet;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Central finite differences of a scalar-valued graph builder against the
// tape's analytic gradient, checked entry by entry.
void check_grads(const std::function<double(const std::vector<Mat>&)>& f,
                 std::vector<Mat> params, const std::vector<Mat>& analytic,
                 double tol = 1e-6, double h = 1e-6) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      const double keep = params[p](i);
      params[p](i) = keep + h;
      const double up = f(params);
      params[p](i) = keep - h;
      const double down = f(params);
      params[p](i) = keep;
      const double fd = (up - down) / (2.0 * h);
      INFO("param ", p, " entry ", i, " fd=", fd, " analytic=", analytic[p](i));
      CHECK(rel_err(fd, analytic[p](i)) < tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul/add/cmul gradients match finite differences") {
  Rng rng = make_rng(1);
  std::vector<Mat> params = {random_mat(3, 4, rng), random_mat(4, 2, rng), random_mat(3, 2, rng)};
  std::vector<Node*> leaves;
  auto build = [&leaves](Tape& t, const std::vector<Mat>& p) {
    leaves.clear();
    Node* a = t.leaf(p[0], true);
    Node* b = t.leaf(p[1], true);
    Node* c = t.leaf(p[2], true);
    leaves = {a, b, c};
    Node* y = t.cmul(t.matmul(a, b), c);
    // reduce to scalar via a fixed linear functional
    Node* ones_l = t.leaf(Mat::Ones(1, y->value.rows()), false);
    Node* ones_r = t.leaf(Mat::Ones(y->value.cols(), 1), false);
    return t.matmul(t.matmul(ones_l, y), ones_r);
  };
  std::vector<Mat> analytic;
  {
    Tape t;
    t.backward(build(t, params));
    for (Node* n : leaves) analytic.push_back(n->grad);
  }
  auto value = [&](const std::vector<Mat>& p) {
    Tape t;
    return build(t, p)->value(0, 0);
  };
  check_grads(value, params, analytic);
}

TEST_CASE("softmax, layernorm, activations, selector-style chain") {
  Rng rng = make_rng(7);
  const int k = 5, d = 6;
  std::vector<Mat> params = {random_mat(k, d, rng), random_mat(1, d, rng, 0.5),
                             random_mat(1, d, rng, 0.5), random_mat(d, 3, rng)};
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Zero(d);
  mask(d - 1) = -std::numeric_limits<double>::infinity();

  auto build = [&](Tape& t, const std::vector<Mat>& p) {
    Node* x = t.leaf(p[0], true);
    Node* g = t.leaf(p[1], true);
    Node* b = t.leaf(p[2], true);
    Node* w = t.leaf(p[3], true);
    Node* sm = t.rows_softmax(x, mask);
    Node* ln = t.layernorm_rows(t.add(x, sm), g, b);
    Node* act = t.tanh_(t.gelu(t.sigmoid_(ln)));
    Node* y = t.matmul(act, w);
    Node* ones_l = t.leaf(Mat::Ones(1, y->value.rows()), false);
    Node* ones_r = t.leaf(Mat::Ones(y->value.cols(), 1), false);
    return t.matmul(t.matmul(ones_l, y), ones_r);
  };
  std::vector<Mat> analytic;
  {
    Tape t;
    Node* x = t.leaf(params[0], true);
    Node* g = t.leaf(params[1], true);
    Node* b = t.leaf(params[2], true);
    Node* w = t.leaf(params[3], true);
    Node* sm = t.rows_softmax(x, mask);
    Node* ln = t.layernorm_rows(t.add(x, sm), g, b);
    Node* act = t.tanh_(t.gelu(t.sigmoid_(ln)));
    Node* y = t.matmul(act, w);
    Node* ones_l = t.leaf(Mat::Ones(1, y->value.rows()), false);
    Node* ones_r = t.leaf(Mat::Ones(y->value.cols(), 1), false);
    t.backward(t.matmul(t.matmul(ones_l, y), ones_r));
    analytic = {x->grad, g->grad, b->grad, w->grad};
  }
  auto value = [&](const std::vector<Mat>& p) {
    Tape t;
    return build(t, p)->value(0, 0);
  };
  check_grads(value, params, analytic, 1e-5);
}

TEST_CASE("softmax rows with masked columns are exactly zero and sum to one") {
  Rng rng = make_rng(3);
  Tape t;
  Mat z = random_mat(4, 4, rng, 2.0);
  Eigen::RowVectorXd mask(4);
  mask << 0.0, 0.0, -std::numeric_limits<double>::infinity(), 0.0;
  Node* p = t.rows_softmax(t.leaf(z, false), mask);
  for (int r = 0; r < 4; ++r) {
    CHECK(p->value(r, 2) == 0.0);
    CHECK(p->value.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int c = 0; c < 4; ++c) CHECK(p->value(r, c) >= 0.0);
  }
}

TEST_CASE("embed_rows, slice, concat, row, colscale gradients") {
  Rng rng = make_rng(11);
  std::vector<Mat> params = {random_mat(7, 6, rng), random_mat(4, 1, rng)};
  std::vector<int> ids = {2, 0, 5, 2};  // repeated id exercises accumulation

  auto build = [&](Tape& t, const std::vector<Mat>& p) {
    Node* table = t.leaf(p[0], true);
    Node* c = t.leaf(p[1], true);
    Node* e = t.embed_rows(table, ids);
    Node* left = t.slice_cols(e, 0, 3);
    Node* right = t.slice_cols(e, 3, 3);
    Node* swapped = t.concat_cols({right, left});
    Node* scaled = t.colscale(swapped, c);
    Node* r = t.row(scaled, 1);
    Node* ones_r = t.leaf(Mat::Ones(r->value.cols(), 1), false);
    Node* total = t.matmul(r, ones_r);
    Node* r2 = t.row(scaled, 3);
    return t.add(total, t.matmul(r2, ones_r));
  };
  std::vector<Mat> analytic;
  {
    Tape t;
    Node* table = t.leaf(params[0], true);
    Node* c = t.leaf(params[1], true);
    Node* e = t.embed_rows(table, ids);
    Node* left = t.slice_cols(e, 0, 3);
    Node* right = t.slice_cols(e, 3, 3);
    Node* swapped = t.concat_cols({right, left});
    Node* scaled = t.colscale(swapped, c);
    Node* r = t.row(scaled, 1);
    Node* ones_r = t.leaf(Mat::Ones(r->value.cols(), 1), false);
    Node* total = t.matmul(r, ones_r);
    Node* r2 = t.row(scaled, 3);
    t.backward(t.add(total, t.matmul(r2, ones_r)));
    analytic = {table->grad, c->grad};
  }
  auto value = [&](const std::vector<Mat>& p) {
    Tape t;
    return build(t, p)->value(0, 0);
  };
  check_grads(value, params, analytic);
}

TEST_CASE("wnll and mean_scalars") {
  Mat logits(1, 3);
  logits << 0.3, -0.8, 1.1;
  std::vector<Mat> params = {logits};
  auto build = [&](Tape& t, const std::vector<Mat>& p) {
    Node* z = t.leaf(p[0], true);
    Node* probs = t.rows_softmax(z, Eigen::RowVectorXd::Zero(3));
    Node* l0 = t.wnll(probs, 0, 1.5);
    Node* l2 = t.wnll(probs, 2, 0.5);
    return t.mean_scalars({l0, l2});
  };
  std::vector<Mat> analytic;
  {
    Tape t;
    Node* z = t.leaf(params[0], true);
    Node* probs = t.rows_softmax(z, Eigen::RowVectorXd::Zero(3));
    Node* l0 = t.wnll(probs, 0, 1.5);
    Node* l2 = t.wnll(probs, 2, 0.5);
    t.backward(t.mean_scalars({l0, l2}));
    analytic = {z->grad};
  }
  auto value = [&](const std::vector<Mat>& p) {
    Tape t;
    return build(t, p)->value(0, 0);
  };
  check_grads(value, params, analytic);

  // -log of a softmax value, by hand
  Tape t;
  Node* z = t.leaf(logits, false);
  Node* probs = t.rows_softmax(z, Eigen::RowVectorXd::Zero(3));
  Node* l = t.wnll(probs, 1, 2.0);
  const double expected = 2.0 * -std::log(probs->value(0, 1));
  CHECK(l->value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dropout honors rate and scales kept entries") {
  Rng rng = make_rng(5);
  Tape t;
  Node* x = t.leaf(Mat::Ones(50, 50), false);
  Node* d = t.dropout(x, 0.2, &rng, true);
  int kept = 0;
  for (Eigen::Index i = 0; i < d->value.size(); ++i) {
    const double v = d->value(i);
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.8)));
    kept += v != 0.0;
  }
  const double kept_frac = kept / 2500.0;
  CHECK(kept_frac > 0.74);
  CHECK(kept_frac < 0.86);

  Node* same = t.dropout(x, 0.2, &rng, false);
  CHECK(same == x);  // disabled dropout is the identity
}
