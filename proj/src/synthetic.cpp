#include "aplc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "aplc/numerics.hpp"

namespace aplc {

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t r = 1; r <= n; ++r) w[r - 1] = 1.0 / std::pow(static_cast<double>(r), exponent);
  return w;
}

LabelStats zipf_label_stats(std::size_t num_labels, double exponent, double scale) {
  LabelStats stats;
  stats.frequency.resize(num_labels);
  stats.order.resize(num_labels);
  for (std::size_t r = 1; r <= num_labels; ++r) {
    stats.frequency[r - 1] = static_cast<std::uint64_t>(
        std::floor(scale / std::pow(static_cast<double>(r), exponent)));
    stats.order[r - 1] = static_cast<LabelId>(r - 1);
  }
  std::stable_sort(stats.order.begin(), stats.order.end(), [&](LabelId a, LabelId b) {
    return stats.frequency[a] > stats.frequency[b];
  });
  return stats;
}

Dataset make_synthetic_dataset(const SyntheticConfig& config) {
  std::mt19937_64 rng(config.seed);
  auto below = [&](std::size_t n) {
    return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
  };

  std::vector<double> cdf = zipf_weights(config.num_labels, config.zipf_exponent);
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
  const double mass = cdf.back();
  auto draw_label = [&] {
    const double u = unit_uniform(rng) * mass;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<LabelId>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1));
  };

  std::vector<std::vector<FeatureId>> prototypes(config.num_labels);
  for (auto& p : prototypes) {
    for (std::size_t f = 0; f < config.features_per_label; ++f) {
      p.push_back(static_cast<FeatureId>(below(config.num_features)));
    }
  }

  Dataset ds;
  ds.num_features = config.num_features;
  ds.num_labels = config.num_labels;
  ds.samples.resize(config.num_samples);
  const std::size_t span = config.max_labels - config.min_labels + 1;
  for (auto& sample : ds.samples) {
    std::size_t want = config.min_labels + below(span);
    want = std::min(want, config.num_labels);
    while (sample.labels.size() < want) {
      const LabelId l = draw_label();
      if (std::find(sample.labels.begin(), sample.labels.end(), l) == sample.labels.end()) {
        sample.labels.push_back(l);
      }
    }
    std::sort(sample.labels.begin(), sample.labels.end());

    std::map<FeatureId, float> feats;
    for (LabelId l : sample.labels) {
      for (FeatureId f : prototypes[l]) feats[f] += static_cast<float>(0.5 + unit_uniform(rng));
    }
    for (std::size_t k = 0; k < config.noise_features; ++k) {
      feats[static_cast<FeatureId>(below(config.num_features))] +=
          static_cast<float>(0.5 * unit_uniform(rng));
    }
    double norm = 0.0;
    for (const auto& [f, v] : feats) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    for (const auto& [f, v] : feats) {
      const auto value = static_cast<float>(v / norm);
      if (value == 0.0f) continue;
      sample.features.indices.push_back(f);
      sample.features.values.push_back(value);
    }
  }
  return ds;
}

}  // namespace aplc
