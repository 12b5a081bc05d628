#include "cuedet/optim.hpp"

#include <cmath>

namespace cuedet {

void Adam::step(const std::vector<const Mat*>& grads) {
  if (grads.size() != slots_.size())
    throw config_error("Adam::step: gradient list does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const Mat* g = grads[i];
    if (g == nullptr || g->size() == 0) continue;
    Slot& s = slots_[i];
    s.m = beta1_ * s.m + (1.0 - beta1_) * (*g);
    s.v = beta2_ * s.v + (1.0 - beta2_) * g->cwiseProduct(*g);
    Mat mhat = s.m / bc1;
    Mat vhat = s.v / bc2;
    *s.param -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
  }
}

}  // namespace cuedet
