#pragma once

#include <vector>

namespace cuedet {

// Unweighted mean of the two per-class F1 scores. Zero-denominator precision
// or recall counts as 0, so a class absent from both preds and labels
// contributes F1 = 0.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels);

}  // namespace cuedet
