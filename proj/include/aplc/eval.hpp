#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "aplc/corpus.hpp"
#include "aplc/layer.hpp"
#include "aplc/model.hpp"
#include "aplc/partition.hpp"

namespace aplc {

/// Mean over samples of |top-k ∩ truth| / k. `truth` rows must be sorted.
/// Throws DataError if a prediction list is shorter than k or the two
/// sequences differ in length.
double precision_at_k(std::span<const std::vector<LabelId>> predictions,
                      std::span<const std::vector<LabelId>> truth, std::size_t k);

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<double> p_at_k;
  std::size_t samples = 0;
};

MetricsReport evaluate_predictions(std::span<const std::vector<LabelId>> predictions,
                                   std::span<const std::vector<LabelId>> truth,
                                   std::span<const std::size_t> ks);

void write_metrics_text(const MetricsReport& report, std::ostream& out);
void write_metrics_csv(const MetricsReport& report, std::ostream& out);

/// Ranked top-k label ids for every sample, predicted in chunks of
/// `batch_size` rows.
std::vector<std::vector<LabelId>> predict_labels(const Model& model, const Dataset& dataset,
                                                 std::size_t k, InferenceMode mode = {},
                                                 std::size_t batch_size = 256);

/// The same top-k list (most frequent labels, ascending id on ties) for every
/// one of `num_samples` samples.
std::vector<std::vector<LabelId>> frequency_prior_predictions(const LabelStats& stats,
                                                              std::size_t num_samples,
                                                              std::size_t k);

/// s_t: fraction of samples with at least one positive in tail t (index t-1).
std::vector<double> tail_access_share(const Dataset& dataset, const LabelClusters& clusters);

/// p_t = 1 - (1 - s_t)^N_b for every tail cluster (index t-1).
std::vector<double> estimate_access_prob(const Dataset& dataset, const LabelClusters& clusters,
                                         std::size_t batch_size);

/// Monte-Carlo p_t: the share of `trials` batches of N_b samples, drawn with
/// replacement, in which tail t is accessed.
std::vector<double> monte_carlo_access_prob(const Dataset& dataset,
                                            const LabelClusters& clusters,
                                            std::size_t batch_size, std::size_t trials,
                                            std::uint64_t seed);

/// Analytic size and cost model of an APLC layer against a dense d x L
/// output layer, plus (when filled by `benchmark`) measured counterparts.
struct CostModelReport {
  std::size_t num_labels = 0;
  std::size_t head_dim = 0;
  std::size_t batch_size = 0;
  double decay = 1.0;
  std::vector<std::size_t> cluster_sizes;  // l_h, l_1..l_K
  std::vector<double> access_prob;         // p_1..p_K

  std::uint64_t n_par = 0;      // exact parameter count
  double n_par_approx = 0.0;    // d * sum l_i / q^i
  std::uint64_t n_dense = 0;    // d * L
  double size_ratio = 0.0;      // L / sum l_i / q^i

  double cost = 0.0;            // N_b d (l_h + K) + sum p_i N_b (d/q^i)(l_i + d)
  double cost_approx = 0.0;     // N_b d (l_h + sum p_i l_i / q^i)
  double cost_dense = 0.0;      // N_b d L
  double compute_ratio = 0.0;   // L / (l_h + sum p_i l_i / q^i)

  // Measured part (benchmark only).
  std::size_t steps = 0;
  double aplc_flops_per_step = 0.0;
  double dense_flops_per_step = 0.0;
  double measured_flop_ratio = 0.0;      // mean over steps of dense / APLC
  double observed_ratio_prediction = 0.0;  // same mean from per-step access indicators
  std::vector<double> observed_access_rate;
  bool flops_match_analytic = false;
  double aplc_seconds_per_step = 0.0;    // medians
  double dense_seconds_per_step = 0.0;
  double wall_clock_ratio = 0.0;
};

CostModelReport analytic_ratios(const LabelClusters& clusters, double decay,
                                std::span<const double> access_prob, std::size_t batch_size);

void write_cost_report_csv(const CostModelReport& report, std::ostream& out);
void write_cost_report_markdown(const CostModelReport& report, std::ostream& out);

}  // namespace aplc
