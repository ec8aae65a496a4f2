#include "aplc/layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "aplc/errors.hpp"

namespace aplc {

AccessSet::AccessSet(std::size_t batch_size, std::size_t num_clusters)
    : batch_size_(batch_size),
      num_clusters_(num_clusters),
      member_(batch_size * num_clusters, 0),
      batch_(num_clusters, 0),
      label_counts_(batch_size, 0) {}

std::vector<std::uint32_t> AccessSet::sample_clusters(std::size_t sample) const {
  std::vector<std::uint32_t> out;
  for (std::size_t c = 0; c < num_clusters_; ++c) {
    if (sample_accesses(sample, c)) out.push_back(static_cast<std::uint32_t>(c));
  }
  return out;
}

std::size_t AccessSet::total_label_count() const {
  return std::accumulate(label_counts_.begin(), label_counts_.end(), std::size_t{0});
}

std::size_t AccessSet::accessed_tails() const {
  std::size_t n = 0;
  for (std::size_t c = 1; c < num_clusters_; ++c) n += batch_[c] != 0;
  return n;
}

AccessSet build_access_set(std::span<const std::vector<LabelId>> batch_labels,
                           const LabelClusters& clusters) {
  AccessSet access(batch_labels.size(), clusters.num_clusters());
  if (clusters.num_clusters() == 0) return access;
  access.batch_[0] = 1;
  for (std::size_t i = 0; i < batch_labels.size(); ++i) {
    std::uint8_t* row = access.member_.data() + i * access.num_clusters_;
    row[0] = 1;
    for (LabelId label : batch_labels[i]) {
      const auto pos = clusters.locate(label);
      row[pos.cluster] = 1;
      access.batch_[pos.cluster] = 1;
    }
    std::size_t count = 0;
    for (std::size_t c = 0; c < access.num_clusters_; ++c) {
      if (row[c] != 0) count += clusters.cluster_size(c);
    }
    access.label_counts_[i] = count;
  }
  return access;
}

template <typename T>
std::vector<std::pair<LabelId, T>> LogProbs<T>::for_sample(std::size_t sample,
                                                           const LabelClusters& clusters,
                                                           const AccessSet& access) const {
  std::vector<std::pair<LabelId, T>> out;
  out.reserve(access.sample_label_count(sample));
  const auto& head_labels = clusters.cluster(0);
  for (std::size_t j = 0; j < head_labels.size(); ++j) {
    out.emplace_back(head_labels[j], head(sample, j));
  }
  for (std::size_t t = 1; t < clusters.num_clusters(); ++t) {
    if (!access.sample_accesses(sample, t)) continue;
    const auto& labels = clusters.cluster(t);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      out.emplace_back(labels[j], tails[t - 1](sample, j));
    }
  }
  return out;
}

template <typename T>
AplcLayer<T>::AplcLayer(LabelClusters clusters, AplcOptions options)
    : clusters_(std::move(clusters)), options_(options) {
  allocate();
}

template <typename T>
AplcLayer<T>::AplcLayer(LabelClusters clusters, std::uint64_t seed, AplcOptions options)
    : clusters_(std::move(clusters)), options_(options) {
  allocate();
  std::mt19937_64 rng(seed);
  for (auto* m : weight_matrices()) xavier_uniform(*m, rng);
}

template <typename T>
void AplcLayer<T>::allocate() {
  if (clusters_.num_clusters() == 0) throw DataError("APLC layer needs at least one cluster");
  const std::size_t d = clusters_.head_dim();
  const std::size_t tails = clusters_.num_tails();
  head_ = BasicMatrix<T>(d, clusters_.cluster_size(0) + tails);
  head_grad_ = BasicMatrix<T>(head_.rows(), head_.cols());
  projections_.clear();
  classifiers_.clear();
  projection_grads_.clear();
  classifier_grads_.clear();
  for (std::size_t t = 1; t <= tails; ++t) {
    const std::size_t width = clusters_.dims()[t];
    projections_.emplace_back(d, width);
    classifiers_.emplace_back(width, clusters_.cluster_size(t));
    projection_grads_.emplace_back(d, width);
    classifier_grads_.emplace_back(width, clusters_.cluster_size(t));
  }
}

template <typename T>
std::vector<BasicMatrix<T>*> AplcLayer<T>::weight_matrices() {
  std::vector<BasicMatrix<T>*> out{&head_};
  for (std::size_t t = 0; t < projections_.size(); ++t) {
    out.push_back(&projections_[t]);
    out.push_back(&classifiers_[t]);
  }
  return out;
}

template <typename T>
std::vector<const BasicMatrix<T>*> AplcLayer<T>::weight_matrices() const {
  std::vector<const BasicMatrix<T>*> out{&head_};
  for (std::size_t t = 0; t < projections_.size(); ++t) {
    out.push_back(&projections_[t]);
    out.push_back(&classifiers_[t]);
  }
  return out;
}

template <typename T>
std::vector<const BasicMatrix<T>*> AplcLayer<T>::gradient_matrices() const {
  std::vector<const BasicMatrix<T>*> out{&head_grad_};
  for (std::size_t t = 0; t < projection_grads_.size(); ++t) {
    out.push_back(&projection_grads_[t]);
    out.push_back(&classifier_grads_[t]);
  }
  return out;
}

template <typename T>
std::vector<ParamView<T>> AplcLayer<T>::params() {
  std::vector<ParamView<T>> out;
  out.push_back({"aplc.head", head_.values(), head_grad_.values()});
  for (std::size_t t = 0; t < projections_.size(); ++t) {
    const std::string id = std::to_string(t + 1);
    out.push_back({"aplc.tail" + id + ".projection", projections_[t].values(),
                   projection_grads_[t].values()});
    out.push_back({"aplc.tail" + id + ".classifier", classifiers_[t].values(),
                   classifier_grads_[t].values()});
  }
  return out;
}

template <typename T>
std::uint64_t AplcLayer<T>::parameter_count() const {
  const std::uint64_t d = clusters_.head_dim();
  const std::uint64_t tails = clusters_.num_tails();
  std::uint64_t count = d * (clusters_.cluster_size(0) + tails);
  for (std::size_t t = 1; t <= tails; ++t) {
    count += clusters_.dims()[t] * (d + clusters_.cluster_size(t));
  }
  return count;
}

template <typename T>
std::uint64_t AplcLayer<T>::stored_parameter_count() const {
  std::uint64_t n = 0;
  for (const auto* m : weight_matrices()) n += m->size();
  return n;
}

template <typename T>
void AplcLayer<T>::zero_grad() {
  head_grad_.fill(T{0});
  for (auto& g : projection_grads_) g.fill(T{0});
  for (auto& g : classifier_grads_) g.fill(T{0});
}

template <typename T>
ForwardResult<T> AplcLayer<T>::forward(const BasicMatrix<T>& hidden,
                                       const AccessSet& access) const {
  const std::size_t n = hidden.rows();
  const std::size_t lh = head_size();
  const std::size_t tails = num_tails();
  if (hidden.cols() != input_dim()) {
    throw DataError("APLC forward: hidden width " + std::to_string(hidden.cols()) +
                    " != d=" + std::to_string(input_dim()));
  }
  if (access.batch_size() != n || access.num_clusters() != clusters_.num_clusters()) {
    throw DataError("APLC forward: access set does not match batch");
  }
  for (T v : hidden.values()) {
    if (!std::isfinite(v)) throw NumericError("APLC forward: non-finite hidden state");
  }

  ForwardResult<T> out;
  auto& cache = out.cache;
  auto& lp = out.log_probs;
  cache.hidden = hidden;
  cache.access = access;
  matmul_into(hidden, head_, cache.head_logits);

  lp.head = BasicMatrix<T>(n, lh);
  lp.gate = BasicMatrix<T>(n, tails);
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = cache.head_logits.data() + i * head_.cols();
    for (std::size_t j = 0; j < lh; ++j) lp.head(i, j) = log_sigmoid(z[j]);
    for (std::size_t t = 0; t < tails; ++t) lp.gate(i, t) = log_sigmoid(z[lh + t]);
  }

  cache.projected.resize(tails);
  cache.tail_logits.resize(tails);
  lp.tails.resize(tails);
  for (std::size_t t = 1; t <= tails; ++t) {
    if (!access.batch_accesses(t)) continue;
    auto& a = cache.projected[t - 1];
    auto& u = cache.tail_logits[t - 1];
    matmul_into(hidden, projections_[t - 1], a);
    matmul_into(a, classifiers_[t - 1], u);
    auto& dst = lp.tails[t - 1];
    dst = BasicMatrix<T>(n, u.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const T gate = lp.gate(i, t - 1);
      for (std::size_t j = 0; j < u.cols(); ++j) dst(i, j) = gate + log_sigmoid(u(i, j));
    }
  }
  return out;
}

namespace {

// Marks the positive labels of one sample by cluster, reusing the buffers.
class PositiveMarks {
 public:
  explicit PositiveMarks(const LabelClusters& clusters) : clusters_(clusters) {
    marks_.resize(clusters.num_clusters());
    for (std::size_t c = 0; c < marks_.size(); ++c) marks_[c].assign(clusters.cluster_size(c), 0);
  }
  void set(const std::vector<LabelId>& labels) {
    clear();
    for (LabelId l : labels) {
      const auto pos = clusters_.locate(l);
      marks_[pos.cluster][pos.local] = 1;
      touched_.push_back(pos);
    }
  }
  const std::vector<std::uint8_t>& cluster(std::size_t c) const { return marks_[c]; }

 private:
  void clear() {
    for (const auto& p : touched_) marks_[p.cluster][p.local] = 0;
    touched_.clear();
  }
  const LabelClusters& clusters_;
  std::vector<std::vector<std::uint8_t>> marks_;
  std::vector<ClusterPosition> touched_;
};

}  // namespace

template <typename T>
T AplcLayer<T>::loss(const LogProbs<T>& log_probs, const AccessSet& access,
                     std::span<const std::vector<LabelId>> batch_labels) const {
  const std::size_t n = access.batch_size();
  if (n == 0) throw DataError("APLC loss: empty batch");
  if (batch_labels.size() != n) throw DataError("APLC loss: label/access batch mismatch");
  const std::size_t tails = num_tails();
  PositiveMarks marks(clusters_);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    marks.set(batch_labels[i]);
    const auto& head_marks = marks.cluster(0);
    for (std::size_t j = 0; j < head_size(); ++j) {
      total += bce_from_log_prob(log_probs.head(i, j), head_marks[j]);
    }
    for (std::size_t t = 1; t <= tails; ++t) {
      const bool accessed = access.sample_accesses(i, t);
      if (options_.gate_supervision) {
        total += bce_from_log_prob(log_probs.gate(i, t - 1), accessed ? 1 : 0);
      }
      if (!accessed) continue;
      const auto& m = marks.cluster(t);
      const auto& tail = log_probs.tails[t - 1];
      for (std::size_t j = 0; j < m.size(); ++j) total += bce_from_log_prob(tail(i, j), m[j]);
    }
  }
  double denom = static_cast<double>(access.total_label_count());
  if (options_.gate_supervision) denom += static_cast<double>(n * tails);
  return static_cast<T>(total / denom);
}

template <typename T>
BasicMatrix<T> AplcLayer<T>::backward(const ForwardCache<T>& cache, const AccessSet& access,
                                      std::span<const std::vector<LabelId>> batch_labels) {
  const std::size_t n = access.batch_size();
  const std::size_t lh = head_size();
  const std::size_t tails = num_tails();
  if (!(cache.access == access) || cache.hidden.rows() != n) {
    throw DataError("APLC backward: cache does not match access set");
  }
  if (batch_labels.size() != n) throw DataError("APLC backward: label/access batch mismatch");
  if (n == 0) throw DataError("APLC backward: empty batch");

  double denom = static_cast<double>(access.total_label_count());
  if (options_.gate_supervision) denom += static_cast<double>(n * tails);
  const T scale = static_cast<T>(1.0 / denom);

  PositiveMarks marks(clusters_);
  BasicMatrix<T> d_head(n, head_.cols());
  std::vector<BasicMatrix<T>> d_tail(tails);
  for (std::size_t t = 1; t <= tails; ++t) {
    if (access.batch_accesses(t)) d_tail[t - 1] = BasicMatrix<T>(n, clusters_.cluster_size(t));
  }

  for (std::size_t i = 0; i < n; ++i) {
    marks.set(batch_labels[i]);
    const T* z = cache.head_logits.data() + i * head_.cols();
    T* dz = d_head.data() + i * head_.cols();
    const auto& head_marks = marks.cluster(0);
    for (std::size_t j = 0; j < lh; ++j) {
      // d/dz of -[y log s + (1-y) log(1-s)] = s - y
      dz[j] = (head_marks[j] ? -sigmoid(-z[j]) : sigmoid(z[j])) * scale;
    }
    for (std::size_t t = 1; t <= tails; ++t) {
      const T g = z[lh + t - 1];
      T d_gate = T{0};
      const bool accessed = access.sample_accesses(i, t);
      if (options_.gate_supervision) d_gate += accessed ? -sigmoid(-g) : sigmoid(g);
      if (accessed) {
        const T log_gate = log_sigmoid(g);
        const T gate_rest = sigmoid(-g);  // 1 - sigma(g)
        const auto& m = marks.cluster(t);
        const T* u = cache.tail_logits[t - 1].data() + i * m.size();
        T* du = d_tail[t - 1].data() + i * m.size();
        for (std::size_t j = 0; j < m.size(); ++j) {
          const T label_rest = sigmoid(-u[j]);  // 1 - sigma(u)
          if (m[j]) {
            // -log sigma(g) - log sigma(u)
            d_gate -= gate_rest;
            du[j] = -label_rest * scale;
          } else {
            // -log(1 - p), p = sigma(g) sigma(u); dp/dg = p(1 - sigma(g))
            const T log_p = log_gate + log_sigmoid(u[j]);
            const T odds = std::exp(log_p - log1m_exp(log_p));  // p / (1 - p)
            d_gate += odds * gate_rest;
            du[j] = odds * label_rest * scale;
          }
        }
      }
      dz[lh + t - 1] = d_gate * scale;
    }
  }

  BasicMatrix<T> d_hidden;
  matmul_at_b(cache.hidden, d_head, head_grad_);
  matmul_a_bt(d_head, head_, d_hidden);
  for (std::size_t t = 1; t <= tails; ++t) {
    auto& pg = projection_grads_[t - 1];
    auto& cg = classifier_grads_[t - 1];
    if (!access.batch_accesses(t)) {
      pg.fill(T{0});
      cg.fill(T{0});
      continue;
    }
    BasicMatrix<T> d_projected;
    matmul_at_b(cache.projected[t - 1], d_tail[t - 1], cg);
    matmul_a_bt(d_tail[t - 1], classifiers_[t - 1], d_projected);
    matmul_at_b(cache.hidden, d_projected, pg);
    matmul_a_bt(d_projected, projections_[t - 1], d_hidden, true);
  }
  return d_hidden;
}

namespace {

template <typename T>
void select_topk(std::vector<std::pair<T, LabelId>>& candidates, std::size_t k,
                 std::vector<ScoredLabel<T>>& out) {
  auto better = [](const std::pair<T, LabelId>& a, const std::pair<T, LabelId>& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  out.clear();
  for (std::size_t r = 0; r < take; ++r) {
    out.push_back({candidates[r].second, std::exp(candidates[r].first)});
  }
}

}  // namespace

template <typename T>
std::vector<std::vector<ScoredLabel<T>>> AplcLayer<T>::predict_topk(
    const BasicMatrix<T>& hidden, std::size_t k, InferenceMode mode) const {
  const std::size_t n = hidden.rows();
  const std::size_t lh = head_size();
  const std::size_t tails = num_tails();
  if (k == 0) throw UsageError("predict_topk: k must be >= 1");
  if (k > clusters_.num_labels()) {
    throw UsageError("predict_topk: k=" + std::to_string(k) + " exceeds L=" +
                     std::to_string(clusters_.num_labels()));
  }
  if (hidden.cols() != input_dim()) throw DataError("predict_topk: hidden width mismatch");

  BasicMatrix<T> logits;
  matmul_into(hidden, head_, logits);

  // selected(i, t): whether sample i evaluates tail t.
  std::vector<std::uint8_t> selected(n * (tails + 1), 0);
  std::vector<std::uint8_t> needed(tails + 1, 0);
  const std::size_t keep = mode.pruned ? std::min(mode.tails, tails) : tails;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order(tails);
    std::iota(order.begin(), order.end(), std::size_t{1});
    if (keep < tails) {
      const T* z = logits.data() + i * head_.cols() + lh;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return z[a - 1] > z[b - 1]; });
    }
    for (std::size_t r = 0; r < keep; ++r) {
      selected[i * (tails + 1) + order[r]] = 1;
      needed[order[r]] = 1;
    }
  }

  std::vector<BasicMatrix<T>> tail_logits(tails);
  for (std::size_t t = 1; t <= tails; ++t) {
    if (!needed[t]) continue;
    BasicMatrix<T> a;
    matmul_into(hidden, projections_[t - 1], a);
    matmul_into(a, classifiers_[t - 1], tail_logits[t - 1]);
  }

  std::vector<std::vector<ScoredLabel<T>>> result(n);
  std::vector<std::pair<T, LabelId>> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    const T* z = logits.data() + i * head_.cols();
    const auto& head_labels = clusters_.cluster(0);
    for (std::size_t j = 0; j < lh; ++j) candidates.emplace_back(log_sigmoid(z[j]), head_labels[j]);
    for (std::size_t t = 1; t <= tails; ++t) {
      if (!selected[i * (tails + 1) + t]) continue;
      const T log_gate = log_sigmoid(z[lh + t - 1]);
      const auto& labels = clusters_.cluster(t);
      const auto& u = tail_logits[t - 1];
      for (std::size_t j = 0; j < labels.size(); ++j) {
        candidates.emplace_back(log_gate + log_sigmoid(u(i, j)), labels[j]);
      }
    }
    select_topk(candidates, k, result[i]);
  }
  return result;
}

template <typename T>
BasicMatrix<T> AplcLayer<T>::probabilities(const BasicMatrix<T>& hidden) const {
  const std::size_t n = hidden.rows();
  const std::size_t lh = head_size();
  BasicMatrix<T> logits;
  matmul_into(hidden, head_, logits);
  BasicMatrix<T> probs(n, clusters_.num_labels());
  const auto& head_labels = clusters_.cluster(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < lh; ++j) probs(i, head_labels[j]) = sigmoid(logits(i, j));
  }
  for (std::size_t t = 1; t <= num_tails(); ++t) {
    BasicMatrix<T> a, u;
    matmul_into(hidden, projections_[t - 1], a);
    matmul_into(a, classifiers_[t - 1], u);
    const auto& labels = clusters_.cluster(t);
    for (std::size_t i = 0; i < n; ++i) {
      const T gate = sigmoid(logits(i, lh + t - 1));
      for (std::size_t j = 0; j < labels.size(); ++j) probs(i, labels[j]) = gate * sigmoid(u(i, j));
    }
  }
  return probs;
}

std::uint64_t flops_per_batch(const LabelClusters& clusters, const AccessSet& access,
                              std::size_t batch_size) {
  const std::uint64_t nb = batch_size;
  const std::uint64_t d = clusters.head_dim();
  std::uint64_t total = 2 * nb * d * (clusters.cluster_size(0) + clusters.num_tails());
  for (std::size_t t = 1; t < clusters.num_clusters(); ++t) {
    if (!access.batch_accesses(t)) continue;
    total += 2 * nb * clusters.dims()[t] * (d + clusters.cluster_size(t));
  }
  return total;
}

template struct LogProbs<float>;
template struct LogProbs<double>;
template class AplcLayer<float>;
template class AplcLayer<double>;

}  // namespace aplc
