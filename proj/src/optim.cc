#include "mtseq/optim.h"

#include <cmath>

#include "mtseq/error.h"

namespace mtseq {

double lr_at(const FinetuneSchedule& schedule, double epoch) {
  if (epoch < 0.0) throw ConfigError("lr_at: epoch must be >= 0");
  if (epoch <= schedule.finetune_start) return schedule.base_lr;
  const double halvings =
      std::floor((epoch - schedule.finetune_start) / schedule.finetune_cycle) + 1.0;
  return schedule.base_lr * std::pow(0.5, std::max(0.0, halvings));
}

void sgd_step(std::span<const ParamPtr> params, double lr, std::optional<double> clip_norm) {
  for (const ParamPtr& p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in " + p->name + "; step not applied");
    }
  }
  double scale = 1.0;
  if (clip_norm.has_value()) {
    const double norm = global_grad_norm(params);
    if (norm > *clip_norm) scale = *clip_norm / norm;
  }
  for (const ParamPtr& p : params) {
    const Real step_scale = static_cast<Real>(lr * scale);
    for (std::size_t i = 0; i < p->value.values.size(); ++i) {
      p->value.values[i] -= step_scale * p->grad.values[i];
    }
    p->zero_grad();
    ++p->update_count;
  }
}

}  // namespace mtseq
