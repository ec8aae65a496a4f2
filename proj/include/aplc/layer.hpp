#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "aplc/numerics.hpp"
#include "aplc/optimizer.hpp"
#include "aplc/partition.hpp"

namespace aplc {

/// Which clusters each sample of a batch touches. The head cluster (index 0)
/// is always accessed; a tail cluster is accessed by a sample iff the sample
/// has a positive label in it. A tail accessed by any sample is evaluated for
/// the whole batch, with the loss masked to the samples that access it.
class AccessSet {
 public:
  AccessSet() = default;
  AccessSet(std::size_t batch_size, std::size_t num_clusters);

  std::size_t batch_size() const { return batch_size_; }
  std::size_t num_clusters() const { return num_clusters_; }

  bool sample_accesses(std::size_t sample, std::size_t cluster) const {
    return member_[sample * num_clusters_ + cluster] != 0;
  }
  bool batch_accesses(std::size_t cluster) const { return batch_[cluster] != 0; }

  /// Clusters accessed by `sample`, ascending, head first.
  std::vector<std::uint32_t> sample_clusters(std::size_t sample) const;
  /// L_i: number of labels in the clusters accessed by `sample`.
  std::size_t sample_label_count(std::size_t sample) const { return label_counts_[sample]; }
  /// Sum of L_i over the batch: the loss normaliser.
  std::size_t total_label_count() const;
  /// Number of tail clusters accessed by at least one sample.
  std::size_t accessed_tails() const;

  bool operator==(const AccessSet&) const = default;

 private:
  friend AccessSet build_access_set(std::span<const std::vector<LabelId>>,
                                    const LabelClusters&);
  std::size_t batch_size_ = 0;
  std::size_t num_clusters_ = 0;
  std::vector<std::uint8_t> member_;
  std::vector<std::uint8_t> batch_;
  std::vector<std::size_t> label_counts_;
};

AccessSet build_access_set(std::span<const std::vector<LabelId>> batch_labels,
                           const LabelClusters& clusters);

/// Log-probabilities produced by a forward pass. `head` holds log sigma of the
/// head-label logits, `gate` log p(V_t | x) for each tail, and `tails[t-1]`
/// the composite log p(V_t | x) + log p(y | V_t, x); tails not accessed by the
/// batch are left empty.
template <typename T>
struct LogProbs {
  BasicMatrix<T> head;
  BasicMatrix<T> gate;
  std::vector<BasicMatrix<T>> tails;

  /// (label, log p) over I_i, the labels of every cluster `sample` accesses.
  std::vector<std::pair<LabelId, T>> for_sample(std::size_t sample,
                                                const LabelClusters& clusters,
                                                const AccessSet& access) const;
};

/// Activations kept for the backward pass.
template <typename T>
struct ForwardCache {
  BasicMatrix<T> hidden;
  BasicMatrix<T> head_logits;  // N x (l_h + K)
  std::vector<BasicMatrix<T>> projected;    // per tail, N x dims[t]
  std::vector<BasicMatrix<T>> tail_logits;  // per tail, N x l_t
  AccessSet access;
};

template <typename T>
struct ForwardResult {
  LogProbs<T> log_probs;
  ForwardCache<T> cache;
};

template <typename T>
struct ScoredLabel {
  LabelId label = 0;
  T prob = T{0};
  bool operator==(const ScoredLabel&) const = default;
};

/// Inference strategy: evaluate every tail, or only the `tails` tail
/// clusters with the highest gate probability for each sample.
struct InferenceMode {
  bool pruned = false;
  std::size_t tails = 0;

  static InferenceMode exact() { return {}; }
  static InferenceMode top_tails(std::size_t m) { return {true, m}; }
};

struct AplcOptions {
  /// Adds explicit BCE terms on the gate outputs (target 1 iff the sample
  /// accesses the cluster). Off: gates learn only through the label product.
  bool gate_supervision = false;
};

/// Adaptive probabilistic label clusters output layer.
///
/// The head matrix is d x (l_h + K): one column per head label followed by
/// one gate column per tail cluster. Tail t owns a projection d x dims[t]
/// and a classifier dims[t] x l_t, chained without a nonlinearity. There are
/// no bias terms. Probabilities are sigma of the head logit for head labels
/// and sigma(gate_t) * sigma(tail logit) for labels of tail t.
template <typename T>
class AplcLayer {
 public:
  AplcLayer() = default;
  /// Zero-initialised layer (used when loading weights).
  explicit AplcLayer(LabelClusters clusters, AplcOptions options = {});
  /// Xavier-uniform initialised layer.
  AplcLayer(LabelClusters clusters, std::uint64_t seed, AplcOptions options = {});

  const LabelClusters& clusters() const { return clusters_; }
  const AplcOptions& options() const { return options_; }
  void set_options(AplcOptions o) { options_ = o; }
  std::size_t input_dim() const { return clusters_.head_dim(); }
  std::size_t num_tails() const { return clusters_.num_tails(); }
  std::size_t head_size() const { return clusters_.cluster_size(0); }

  BasicMatrix<T>& head_weights() { return head_; }
  const BasicMatrix<T>& head_weights() const { return head_; }
  /// Tail index t runs 1..K.
  BasicMatrix<T>& projection(std::size_t t) { return projections_[t - 1]; }
  const BasicMatrix<T>& projection(std::size_t t) const { return projections_[t - 1]; }
  BasicMatrix<T>& classifier(std::size_t t) { return classifiers_[t - 1]; }
  const BasicMatrix<T>& classifier(std::size_t t) const { return classifiers_[t - 1]; }

  const BasicMatrix<T>& head_grad() const { return head_grad_; }
  const BasicMatrix<T>& projection_grad(std::size_t t) const { return projection_grads_[t - 1]; }
  const BasicMatrix<T>& classifier_grad(std::size_t t) const { return classifier_grads_[t - 1]; }

  /// Every stored weight matrix in serialization order: head, then
  /// (projection, classifier) for t = 1..K.
  std::vector<BasicMatrix<T>*> weight_matrices();
  std::vector<const BasicMatrix<T>*> weight_matrices() const;
  std::vector<const BasicMatrix<T>*> gradient_matrices() const;

  /// Weights and gradients for the optimizer.
  std::vector<ParamView<T>> params();

  /// d (l_h + K) + sum_t dims[t] (d + l_t).
  std::uint64_t parameter_count() const;
  /// Sum of the sizes of the stored matrices.
  std::uint64_t stored_parameter_count() const;

  /// Throws NumericError on a non-finite hidden state, DataError on a shape
  /// mismatch.
  ForwardResult<T> forward(const BasicMatrix<T>& hidden, const AccessSet& access) const;

  /// Mean BCE over the accessed labels of the batch (normalised by sum L_i,
  /// plus K per sample when gate supervision is on). Throws DataError on an
  /// empty batch.
  T loss(const LogProbs<T>& log_probs, const AccessSet& access,
         std::span<const std::vector<LabelId>> batch_labels) const;

  /// Fills the gradient buffers (tails outside the batch access set get
  /// exact zeros) and returns dJ/dh. Throws DataError if `access` does not
  /// match the cache.
  BasicMatrix<T> backward(const ForwardCache<T>& cache, const AccessSet& access,
                          std::span<const std::vector<LabelId>> batch_labels);

  void zero_grad();

  /// Top-k labels per row of `hidden`, ranked by probability with ties going
  /// to the smaller label id. Throws UsageError if k > L or k == 0. Pruned
  /// mode may return fewer than k labels when the candidates run out.
  std::vector<std::vector<ScoredLabel<T>>> predict_topk(const BasicMatrix<T>& hidden,
                                                        std::size_t k,
                                                        InferenceMode mode = {}) const;

  /// Full probability vector over all L labels (by label id) for each row.
  BasicMatrix<T> probabilities(const BasicMatrix<T>& hidden) const;

 private:
  void allocate();

  LabelClusters clusters_;
  AplcOptions options_;
  BasicMatrix<T> head_;
  std::vector<BasicMatrix<T>> projections_;
  std::vector<BasicMatrix<T>> classifiers_;
  BasicMatrix<T> head_grad_;
  std::vector<BasicMatrix<T>> projection_grads_;
  std::vector<BasicMatrix<T>> classifier_grads_;
};

/// Forward matmul FLOPs for a batch: 2 N_b d (l_h + K) plus
/// 2 N_b dims[t] (d + l_t) for every tail the batch accesses.
std::uint64_t flops_per_batch(const LabelClusters& clusters, const AccessSet& access,
                              std::size_t batch_size);

template <typename T>
std::uint64_t flops_per_batch(const AplcLayer<T>& layer, const AccessSet& access,
                              std::size_t batch_size) {
  return flops_per_batch(layer.clusters(), access, batch_size);
}

}  // namespace aplc
