#pragma once

#include <cstddef>
#include <cstdint>

#include "aplc/corpus.hpp"
#include "aplc/eval.hpp"
#include "aplc/partition.hpp"

namespace aplc {

struct BenchmarkConfig {
  PartitionSpec spec;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  /// Steps to run; 0 runs one full epoch.
  std::size_t max_steps = 0;
  /// Include the backward pass in the timed step.
  bool backward = true;
};

/// Runs matched output-layer training steps (forward, loss and optionally
/// backward) for an APLC layer and a dense d x L layer on identical batches
/// and identical seeded hidden states. Partitions by the dataset's own label
/// frequencies. FLOPs are the counter deltas of the forward passes; the APLC
/// delta is compared against flops_per_batch on every step.
CostModelReport benchmark(const Dataset& dataset, const BenchmarkConfig& config);

}  // namespace aplc
