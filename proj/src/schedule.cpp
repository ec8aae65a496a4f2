#include "aplc/schedule.hpp"

#include <string>

#include "aplc/errors.hpp"

namespace aplc {

void SlantedTriangular::validate() const {
  if (!(eta0 > 0.0)) throw UsageError("schedule: eta0 must be positive");
  if (total_steps <= warmup_steps) {
    throw UsageError("schedule: total steps (" + std::to_string(total_steps) +
                     ") must exceed warm-up steps (" + std::to_string(warmup_steps) + ")");
  }
}

double lr_at(const SlantedTriangular& s, std::uint64_t t) {
  return s.eta0 * shape_factor(s, t);
}

double shape_factor(const SlantedTriangular& s, std::uint64_t t) {
  s.validate();
  if (t > s.total_steps) {
    throw UsageError("schedule: step " + std::to_string(t) + " beyond total " +
                     std::to_string(s.total_steps));
  }
  const auto td = static_cast<double>(t);
  const auto tw = static_cast<double>(s.warmup_steps);
  const auto ta = static_cast<double>(s.total_steps);
  if (s.warmup_steps > 0 && t <= s.warmup_steps) return td / tw;
  return (ta - td) / (ta - tw);
}

void GroupRates::validate() const {
  if (!(encoder > 0.0 && hidden > 0.0 && aplc > 0.0)) {
    throw UsageError("group learning rates must be positive");
  }
}

GroupLr group_lr(const GroupRates& rates, const SlantedTriangular& shape, std::uint64_t t) {
  const double f = shape_factor(shape, t);
  return {rates.encoder * f, rates.hidden * f, rates.aplc * f};
}

std::uint64_t total_training_steps(std::uint64_t samples, std::uint64_t batch_size,
                                   std::uint64_t epochs) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  return (samples + batch_size - 1) / batch_size * epochs;
}

}  // namespace aplc
