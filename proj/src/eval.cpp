#include "aplc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "aplc/errors.hpp"
#include "aplc/numerics.hpp"

namespace aplc {

double precision_at_k(std::span<const std::vector<LabelId>> predictions,
                      std::span<const std::vector<LabelId>> truth, std::size_t k) {
  if (predictions.size() != truth.size()) {
    throw DataError("precision_at_k: " + std::to_string(predictions.size()) +
                    " predictions for " + std::to_string(truth.size()) + " samples");
  }
  if (k == 0) throw UsageError("precision_at_k: k must be >= 1");
  if (predictions.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() < k) {
      throw DataError("precision_at_k: sample " + std::to_string(i) + " has " +
                      std::to_string(predictions[i].size()) + " predictions, need " +
                      std::to_string(k));
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) {
      hits += std::binary_search(truth[i].begin(), truth[i].end(), predictions[i][r]);
    }
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  return sum / static_cast<double>(predictions.size());
}

MetricsReport evaluate_predictions(std::span<const std::vector<LabelId>> predictions,
                                   std::span<const std::vector<LabelId>> truth,
                                   std::span<const std::size_t> ks) {
  MetricsReport report;
  report.samples = truth.size();
  for (auto k : ks) {
    report.ks.push_back(k);
    report.p_at_k.push_back(precision_at_k(predictions, truth, k));
  }
  return report;
}

void write_metrics_text(const MetricsReport& report, std::ostream& out) {
  out << std::left << std::setw(8) << "metric" << std::right << std::setw(12) << "value" << '\n';
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << std::left << std::setw(8) << ("P@" + std::to_string(report.ks[i])) << std::right
        << std::setw(12) << std::fixed << std::setprecision(6) << report.p_at_k[i]
        << std::defaultfloat << '\n';
  }
}

void write_metrics_csv(const MetricsReport& report, std::ostream& out) {
  out << "k,p_at_k,samples\n";
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << report.ks[i] << ',' << std::setprecision(10) << report.p_at_k[i] << ','
        << report.samples << '\n';
  }
}

std::vector<std::vector<LabelId>> predict_labels(const Model& model, const Dataset& dataset,
                                                 std::size_t k, InferenceMode mode,
                                                 std::size_t batch_size) {
  std::vector<std::vector<LabelId>> out;
  out.reserve(dataset.size());
  std::vector<const SparseVector*> rows;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    rows.clear();
    for (std::size_t i = begin; i < end; ++i) rows.push_back(&dataset.samples[i].features);
    for (const auto& ranked : model.predict(rows, k, mode)) {
      std::vector<LabelId> ids;
      for (const auto& s : ranked) ids.push_back(s.label);
      out.push_back(std::move(ids));
    }
  }
  return out;
}

std::vector<std::vector<LabelId>> frequency_prior_predictions(const LabelStats& stats,
                                                              std::size_t num_samples,
                                                              std::size_t k) {
  if (k > stats.order.size()) throw UsageError("frequency prior: k exceeds L");
  std::vector<LabelId> top(stats.order.begin(), stats.order.begin() + static_cast<std::ptrdiff_t>(k));
  return std::vector<std::vector<LabelId>>(num_samples, top);
}

std::vector<double> tail_access_share(const Dataset& dataset, const LabelClusters& clusters) {
  const std::size_t tails = clusters.num_tails();
  std::vector<std::size_t> hits(tails, 0);
  std::vector<std::uint8_t> seen(tails + 1);
  for (const auto& s : dataset.samples) {
    std::fill(seen.begin(), seen.end(), 0);
    for (LabelId l : s.labels) seen[clusters.locate(l).cluster] = 1;
    for (std::size_t t = 1; t <= tails; ++t) hits[t - 1] += seen[t];
  }
  std::vector<double> share(tails, 0.0);
  if (dataset.size() == 0) return share;
  for (std::size_t t = 0; t < tails; ++t) {
    share[t] = static_cast<double>(hits[t]) / static_cast<double>(dataset.size());
  }
  return share;
}

std::vector<double> estimate_access_prob(const Dataset& dataset, const LabelClusters& clusters,
                                         std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  auto p = tail_access_share(dataset, clusters);
  for (auto& v : p) v = 1.0 - std::pow(1.0 - v, static_cast<double>(batch_size));
  return p;
}

std::vector<double> monte_carlo_access_prob(const Dataset& dataset,
                                            const LabelClusters& clusters,
                                            std::size_t batch_size, std::size_t trials,
                                            std::uint64_t seed) {
  const std::size_t tails = clusters.num_tails();
  std::vector<double> rate(tails, 0.0);
  if (dataset.size() == 0 || trials == 0) return rate;
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> seen(tails + 1);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto i = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(dataset.size()));
      for (LabelId l : dataset.samples[i].labels) seen[clusters.locate(l).cluster] = 1;
    }
    for (std::size_t t = 1; t <= tails; ++t) rate[t - 1] += seen[t];
  }
  for (auto& r : rate) r /= static_cast<double>(trials);
  return rate;
}

CostModelReport analytic_ratios(const LabelClusters& clusters, double decay,
                                std::span<const double> access_prob, std::size_t batch_size) {
  const std::size_t tails = clusters.num_tails();
  if (access_prob.size() != tails) {
    throw DataError("analytic_ratios: need one access probability per tail cluster");
  }
  CostModelReport r;
  r.num_labels = clusters.num_labels();
  r.head_dim = clusters.head_dim();
  r.batch_size = batch_size;
  r.decay = decay;
  r.access_prob.assign(access_prob.begin(), access_prob.end());
  for (std::size_t c = 0; c < clusters.num_clusters(); ++c) r.cluster_sizes.push_back(clusters.cluster_size(c));

  const double d = static_cast<double>(r.head_dim);
  const double nb = static_cast<double>(batch_size);
  const double lh = static_cast<double>(r.cluster_sizes[0]);
  const double L = static_cast<double>(r.num_labels);

  r.n_par = static_cast<std::uint64_t>(r.head_dim) * (r.cluster_sizes[0] + tails);
  double weighted = lh;      // sum_i l_i / q^i
  double weighted_p = lh;    // l_h + sum_i p_i l_i / q^i
  double cost_tails = 0.0;   // sum_i p_i (d/q^i)(l_i + d)
  for (std::size_t t = 1; t <= tails; ++t) {
    const double shrink = std::pow(decay, static_cast<double>(t));
    const double lt = static_cast<double>(r.cluster_sizes[t]);
    r.n_par += static_cast<std::uint64_t>(clusters.dims()[t]) * (r.head_dim + r.cluster_sizes[t]);
    weighted += lt / shrink;
    weighted_p += access_prob[t - 1] * lt / shrink;
    cost_tails += access_prob[t - 1] * (d / shrink) * (lt + d);
  }
  r.n_par_approx = d * weighted;
  r.n_dense = static_cast<std::uint64_t>(r.head_dim) * r.num_labels;
  r.size_ratio = L / weighted;
  r.cost = nb * d * (lh + static_cast<double>(tails)) + nb * cost_tails;
  r.cost_approx = nb * d * weighted_p;
  r.cost_dense = nb * d * L;
  r.compute_ratio = L / weighted_p;
  return r;
}

void write_cost_report_csv(const CostModelReport& r, std::ostream& out) {
  out << "quantity,value\n" << std::setprecision(12);
  out << "num_labels," << r.num_labels << '\n';
  out << "head_dim," << r.head_dim << '\n';
  out << "batch_size," << r.batch_size << '\n';
  out << "decay," << r.decay << '\n';
  for (std::size_t c = 0; c < r.cluster_sizes.size(); ++c) {
    out << "cluster_size_" << c << ',' << r.cluster_sizes[c] << '\n';
  }
  for (std::size_t t = 0; t < r.access_prob.size(); ++t) {
    out << "access_prob_" << t + 1 << ',' << r.access_prob[t] << '\n';
  }
  out << "n_par," << r.n_par << '\n';
  out << "n_par_approx," << r.n_par_approx << '\n';
  out << "n_dense," << r.n_dense << '\n';
  out << "size_ratio," << r.size_ratio << '\n';
  out << "cost," << r.cost << '\n';
  out << "cost_approx," << r.cost_approx << '\n';
  out << "cost_dense," << r.cost_dense << '\n';
  out << "compute_ratio," << r.compute_ratio << '\n';
  out << "steps," << r.steps << '\n';
  out << "aplc_flops_per_step," << r.aplc_flops_per_step << '\n';
  out << "dense_flops_per_step," << r.dense_flops_per_step << '\n';
  out << "measured_flop_ratio," << r.measured_flop_ratio << '\n';
  out << "observed_ratio_prediction," << r.observed_ratio_prediction << '\n';
  for (std::size_t t = 0; t < r.observed_access_rate.size(); ++t) {
    out << "observed_access_rate_" << t + 1 << ',' << r.observed_access_rate[t] << '\n';
  }
  out << "flops_match_analytic," << (r.flops_match_analytic ? 1 : 0) << '\n';
  out << "aplc_seconds_per_step," << r.aplc_seconds_per_step << '\n';
  out << "dense_seconds_per_step," << r.dense_seconds_per_step << '\n';
  out << "wall_clock_ratio," << r.wall_clock_ratio << '\n';
}

void write_cost_report_markdown(const CostModelReport& r, std::ostream& out) {
  out << "| quantity | APLC | dense | ratio (dense / APLC) |\n";
  out << "|---|---|---|---|\n";
  out << std::setprecision(6);
  out << "| parameters | " << r.n_par << " | " << r.n_dense << " | "
      << static_cast<double>(r.n_dense) / static_cast<double>(std::max<std::uint64_t>(r.n_par, 1))
      << " |\n";
  out << "| parameters (approx. form) | " << r.n_par_approx << " | " << r.n_dense << " | "
      << r.size_ratio << " |\n";
  out << "| cost per batch (analytic) | " << r.cost << " | " << r.cost_dense << " | "
      << r.cost_dense / std::max(r.cost, 1.0) << " |\n";
  out << "| cost per batch (approx. form) | " << r.cost_approx << " | " << r.cost_dense << " | "
      << r.compute_ratio << " |\n";
  if (r.steps > 0) {
    out << "| measured FLOPs per step | " << r.aplc_flops_per_step << " | "
        << r.dense_flops_per_step << " | " << r.measured_flop_ratio << " |\n";
    out << "| median seconds per step | " << r.aplc_seconds_per_step << " | "
        << r.dense_seconds_per_step << " | " << r.wall_clock_ratio << " |\n";
  }
}

}  // namespace aplc
