#include "aplc/benchmark.hpp"

#include <algorithm>
#include <chrono>

#include "aplc/errors.hpp"
#include "aplc/layer.hpp"
#include "aplc/numerics.hpp"

namespace aplc {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct StepOutcome {
  std::uint64_t forward_flops = 0;
  double seconds = 0.0;
};

StepOutcome timed_step(AplcLayer<float>& layer, const Matrix& hidden,
                       std::span<const std::vector<LabelId>> labels, bool backward) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto access = build_access_set(labels, layer.clusters());
  const std::uint64_t before = flops::count();
  auto fwd = layer.forward(hidden, access);
  const std::uint64_t forward_flops = flops::count() - before;
  const float loss = layer.loss(fwd.log_probs, access, labels);
  if (!std::isfinite(loss)) throw NumericError("benchmark: non-finite loss");
  if (backward) layer.backward(fwd.cache, access, labels);
  const std::chrono::duration<double> elapsed = Clock::now() - start;
  return {forward_flops, elapsed.count()};
}

}  // namespace

CostModelReport benchmark(const Dataset& dataset, const BenchmarkConfig& config) {
  config.spec.validate();
  if (dataset.size() == 0) throw DataError("benchmark: empty dataset");
  const auto stats = compute_label_stats(dataset);
  const auto clusters = partition_by_frequency(stats, config.spec);
  const auto access_prob = estimate_access_prob(dataset, clusters, config.batch_size);
  CostModelReport report =
      analytic_ratios(clusters, config.spec.decay, access_prob, config.batch_size);

  PartitionSpec dense_spec{{1.0}, config.spec.decay, config.spec.head_dim};
  AplcLayer<float> aplc(clusters, config.seed);
  AplcLayer<float> dense(partition_by_frequency(stats, dense_spec), config.seed);

  const BatchPlan plan(dataset.size(), config.batch_size, config.seed);
  const std::size_t steps =
      config.max_steps == 0 ? plan.num_batches() : std::min(config.max_steps, plan.num_batches());
  const std::size_t tails = clusters.num_tails();
  const double d = static_cast<double>(clusters.head_dim());
  const double L = static_cast<double>(clusters.num_labels());

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::vector<LabelId>> labels;
  std::vector<double> aplc_seconds, dense_seconds;
  std::vector<double> accessed(tails, 0.0);
  double ratio_sum = 0.0, predicted_sum = 0.0;
  double aplc_flops = 0.0, dense_flops = 0.0;
  bool exact = true;

  for (std::size_t s = 0; s < steps; ++s) {
    const auto batch = plan.batch(s);
    labels.clear();
    for (auto i : batch) labels.push_back(dataset.samples[i].labels);
    const std::size_t nb = batch.size();
    Matrix hidden(nb, clusters.head_dim());
    for (auto& v : hidden.values()) v = static_cast<float>(2.0 * unit_uniform(rng) - 1.0);

    const auto access = build_access_set(labels, clusters);
    const auto a = timed_step(aplc, hidden, labels, config.backward);
    const auto b = timed_step(dense, hidden, labels, config.backward);
    exact = exact && a.forward_flops == flops_per_batch(clusters, access, nb) &&
            b.forward_flops == 2ull * nb * clusters.head_dim() * clusters.num_labels();

    // Per-step cost with the step's own access indicators in place of p_i.
    double cost = d * static_cast<double>(clusters.cluster_size(0) + tails);
    for (std::size_t t = 1; t <= tails; ++t) {
      if (!access.batch_accesses(t)) continue;
      accessed[t - 1] += 1.0;
      cost += static_cast<double>(clusters.dims()[t]) *
              (d + static_cast<double>(clusters.cluster_size(t)));
    }
    predicted_sum += (d * L) / cost;
    ratio_sum += static_cast<double>(b.forward_flops) / static_cast<double>(a.forward_flops);
    aplc_flops += static_cast<double>(a.forward_flops);
    dense_flops += static_cast<double>(b.forward_flops);
    aplc_seconds.push_back(a.seconds);
    dense_seconds.push_back(b.seconds);
  }

  const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
  report.steps = steps;
  report.aplc_flops_per_step = aplc_flops / n;
  report.dense_flops_per_step = dense_flops / n;
  report.measured_flop_ratio = ratio_sum / n;
  report.observed_ratio_prediction = predicted_sum / n;
  for (auto& r : accessed) r /= n;
  report.observed_access_rate = accessed;
  report.flops_match_analytic = exact;
  report.aplc_seconds_per_step = median(aplc_seconds);
  report.dense_seconds_per_step = median(dense_seconds);
  report.wall_clock_ratio = report.aplc_seconds_per_step > 0.0
                                ? report.dense_seconds_per_step / report.aplc_seconds_per_step
                                : 0.0;
  return report;
}

}  // namespace aplc
