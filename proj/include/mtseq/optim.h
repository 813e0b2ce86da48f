#pragma once

#include <optional>
#include <span>

#include "mtseq/tensor.h"

namespace mtseq {

// Constant learning rate for the first finetune_start epochs, then halved
// every finetune_cycle epochs.
struct FinetuneSchedule {
  double base_lr = 0.7;
  double finetune_start = 0.0;  // x, in reference-task epochs
  double finetune_cycle = 1.0;  // y
  double total_epochs = 0.0;
};

// lr = base_lr * 0.5^max(0, floor((epoch - x)/y) + 1) for epoch > x, else
// base_lr. epoch is continuous training progress (fractional epochs from
// update counts are fine).
double lr_at(const FinetuneSchedule& schedule, double epoch);

// Optional global-norm clipping, then p <- p - lr * grad, zero grads,
// increment update counts. A non-finite gradient aborts before any
// parameter is touched.
void sgd_step(std::span<const ParamPtr> params, double lr, std::optional<double> clip_norm);

}  // namespace mtseq
