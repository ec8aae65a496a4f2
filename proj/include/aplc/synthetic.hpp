#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aplc/corpus.hpp"

namespace aplc {

/// Unnormalised Zipf weights 1 / r^exponent for ranks r = 1..n.
std::vector<double> zipf_weights(std::size_t n, double exponent);

/// Label statistics whose frequency of rank r (label id r - 1) is
/// floor(scale / r^exponent).
LabelStats zipf_label_stats(std::size_t num_labels, double exponent, double scale);

struct SyntheticConfig {
  std::size_t num_samples = 1000;
  std::size_t num_labels = 64;
  std::size_t num_features = 512;
  double zipf_exponent = 1.0;
  std::size_t min_labels = 1;
  std::size_t max_labels = 5;
  /// Prototype features attached to each label; a sample's features are the
  /// union of its labels' prototypes plus noise, L2-normalised.
  std::size_t features_per_label = 8;
  std::size_t noise_features = 4;
  std::uint64_t seed = 7;
};

/// Multi-label dataset with Zipf-distributed labels (drawn without
/// replacement per sample) and label-dependent sparse features.
Dataset make_synthetic_dataset(const SyntheticConfig& config);

}  // namespace aplc
