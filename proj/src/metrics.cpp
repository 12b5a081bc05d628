#include "cuedet/metrics.hpp"

#include "cuedet/common.hpp"

namespace cuedet {

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw validation_error("macro_f1: empty input");
  if (preds.size() != labels.size()) throw validation_error("macro_f1: length mismatch");
  double sum = 0.0;
  for (int cls = 0; cls < 2; ++cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == cls;
      const bool l = labels[i] == cls;
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    sum += f1;
  }
  return sum / 2.0;
}

}  // namespace cuedet
