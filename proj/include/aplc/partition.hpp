#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "aplc/corpus.hpp"

namespace aplc {

/// Cluster layout parameters: label-count proportions (head first), the
/// per-tail dimension decay factor q and the head hidden dimension d.
struct PartitionSpec {
  std::vector<double> proportions{1.0};
  double decay = 2.0;
  std::size_t head_dim = 768;

  std::size_t num_clusters() const { return proportions.size(); }
  std::size_t num_tails() const { return proportions.size() - 1; }

  /// Throws UsageError when proportions are empty, non-positive, do not sum
  /// to one within 1e-9, or when q < 1 or d < 1.
  void validate() const;
  bool operator==(const PartitionSpec&) const = default;
};

/// dims[0] = d, dims[i] = max(1, floor(d / q^i)) for i = 1..num_tails.
std::vector<std::size_t> hidden_dims(const PartitionSpec& spec, std::size_t num_tails);

struct ClusterPosition {
  std::uint32_t cluster = 0;
  std::uint32_t local = 0;
  bool operator==(const ClusterPosition&) const = default;
};

/// Head cluster (index 0) followed by K tail clusters, with the inverse map
/// from global label id to (cluster, local index).
class LabelClusters {
 public:
  LabelClusters() = default;

  /// Builds from an explicit layout. The clusters must cover 0..L-1 exactly
  /// once; dims must have one entry per cluster.
  LabelClusters(std::vector<std::vector<LabelId>> clusters, std::vector<std::size_t> dims);

  std::size_t num_labels() const { return positions_.size(); }
  std::size_t num_clusters() const { return clusters_.size(); }
  std::size_t num_tails() const { return clusters_.empty() ? 0 : clusters_.size() - 1; }
  std::size_t head_dim() const { return dims_.empty() ? 0 : dims_[0]; }

  const std::vector<LabelId>& cluster(std::size_t c) const { return clusters_[c]; }
  std::size_t cluster_size(std::size_t c) const { return clusters_[c].size(); }
  const std::vector<std::vector<LabelId>>& clusters() const { return clusters_; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  /// Throws DataError for an out-of-range id.
  ClusterPosition locate(LabelId label) const;

  bool operator==(const LabelClusters&) const = default;

 private:
  std::vector<std::vector<LabelId>> clusters_;
  std::vector<ClusterPosition> positions_;
  std::vector<std::size_t> dims_;
};

/// Cluster sizes for L labels: ceil(p_i * L) for every cluster but the last,
/// which takes the remainder. Throws DataError("degenerate partition") if any
/// size is zero.
std::vector<std::size_t> cluster_sizes(const PartitionSpec& spec, std::size_t num_labels);

/// Assigns labels in descending-frequency order: the head takes the most
/// frequent block, the last tail the rarest.
LabelClusters partition_by_frequency(const LabelStats& stats, const PartitionSpec& spec);

/// Per-cluster summary: id, size, min/max frequency, hidden dim, mass share.
void write_partition_table(const LabelClusters& clusters, const LabelStats& stats,
                           bool csv, std::ostream& out);

}  // namespace aplc
