#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace np2mt {

/// Linear warmup to max_lr, a plateau until half of training, then linear
/// decay to zero at the last step.
struct ScheduleConfig {
  std::size_t total_steps = 1000;
  double warmup_fraction = 0.1;
  double max_lr = 1e-3;

  void validate() const {
    if (total_steps == 0) throw std::invalid_argument("schedule needs at least one step");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 0.5))
      throw std::invalid_argument("warmup fraction must lie in (0, 0.5)");
    if (!(max_lr > 0.0)) throw std::invalid_argument("max learning rate must be positive");
  }
};

inline double lr_at(const ScheduleConfig& s, std::size_t step) {
  s.validate();
  if (step > s.total_steps)
    throw std::out_of_range("step " + std::to_string(step) + " beyond schedule of " +
                            std::to_string(s.total_steps));
  const double t = static_cast<double>(step);
  const double total = static_cast<double>(s.total_steps);
  const double warm = s.warmup_fraction * total;
  const double half = 0.5 * total;
  if (t <= warm) return s.max_lr * (t / warm);
  if (t <= half) return s.max_lr;
  return s.max_lr * ((total - t) / (total - half));
}

}  // namespace np2mt
