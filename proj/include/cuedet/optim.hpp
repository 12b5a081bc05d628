#pragma once

#include <vector>

#include "cuedet/tape.hpp"

namespace cuedet {

// Adam with the reference defaults; learning rate is the schedule's knob.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(Mat* param) {
    slots_.push_back({param, Mat::Zero(param->rows(), param->cols()),
                      Mat::Zero(param->rows(), param->cols())});
  }

  std::size_t size() const { return slots_.size(); }

  // grads[i] aligns with the i-th attached parameter; nullptr or empty means
  // zero gradient for this step.
  void step(const std::vector<const Mat*>& grads);

 private:
  struct Slot {
    Mat* param;
    Mat m;
    Mat v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace cuedet
