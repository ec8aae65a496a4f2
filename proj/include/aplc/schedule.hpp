#pragma once

#include <cstdint>

namespace aplc {

/// Linear warm-up from 0 to eta0 over `warmup_steps`, then linear decay to 0
/// at `total_steps`.
struct SlantedTriangular {
  double eta0 = 1.0;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 1;

  /// Throws UsageError unless eta0 > 0 and total_steps > warmup_steps.
  void validate() const;
};

/// Learning rate at step t. With warmup_steps == 0 the warm-up branch is
/// skipped: eta0 (t_a - t) / t_a. Throws UsageError for t > total_steps.
double lr_at(const SlantedTriangular& schedule, std::uint64_t t);

/// lr_at(t) / eta0, the shape shared by every parameter group.
double shape_factor(const SlantedTriangular& schedule, std::uint64_t t);

/// Base rates for the encoder, hidden and output-layer groups.
struct GroupRates {
  double encoder = 5e-5;
  double hidden = 1e-4;
  double aplc = 2e-3;

  void validate() const;
  bool operator==(const GroupRates&) const = default;
};

struct GroupLr {
  double encoder = 0.0;
  double hidden = 0.0;
  double aplc = 0.0;
};

/// Each base rate scaled by the same triangular shape factor.
GroupLr group_lr(const GroupRates& rates, const SlantedTriangular& shape, std::uint64_t t);

/// Total optimizer steps: ceil(N / N_b) * epochs.
std::uint64_t total_training_steps(std::uint64_t samples, std::uint64_t batch_size,
                                   std::uint64_t epochs);

}  // namespace aplc
