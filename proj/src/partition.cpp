#include "aplc/partition.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "aplc/errors.hpp"

namespace aplc {

void PartitionSpec::validate() const {
  if (proportions.empty()) throw UsageError("partition needs at least one cluster");
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0)) throw UsageError("partition proportions must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw UsageError("partition proportions sum to " + std::to_string(sum) + ", not 1");
  }
  if (!(decay >= 1.0)) throw UsageError("decay factor q must be >= 1");
  if (head_dim < 1) throw UsageError("head dimension must be >= 1");
}

std::vector<std::size_t> hidden_dims(const PartitionSpec& spec, std::size_t num_tails) {
  std::vector<std::size_t> dims(num_tails + 1);
  dims[0] = spec.head_dim;
  double width = static_cast<double>(spec.head_dim);
  for (std::size_t i = 1; i <= num_tails; ++i) {
    width /= spec.decay;
    dims[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(width + 1e-9)));
  }
  return dims;
}

LabelClusters::LabelClusters(std::vector<std::vector<LabelId>> clusters,
                             std::vector<std::size_t> dims)
    : clusters_(std::move(clusters)), dims_(std::move(dims)) {
  if (clusters_.empty()) throw DataError("label clusters: no clusters");
  if (dims_.size() != clusters_.size()) throw DataError("label clusters: dims/cluster count mismatch");
  std::size_t total = 0;
  for (const auto& c : clusters_) total += c.size();
  constexpr ClusterPosition kUnset{~0u, ~0u};
  positions_.assign(total, kUnset);
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    if (clusters_[c].empty()) throw DataError("degenerate partition");
    if (dims_[c] == 0) throw DataError("label clusters: zero hidden dimension");
    for (std::size_t j = 0; j < clusters_[c].size(); ++j) {
      const LabelId label = clusters_[c][j];
      if (label >= total || !(positions_[label] == kUnset)) {
        throw DataError("label clusters must cover 0..L-1 exactly once");
      }
      positions_[label] = {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(j)};
    }
  }
}

ClusterPosition LabelClusters::locate(LabelId label) const {
  if (label >= positions_.size()) {
    throw DataError("label " + std::to_string(label) + " out of range (L=" +
                    std::to_string(positions_.size()) + ")");
  }
  return positions_[label];
}

std::vector<std::size_t> cluster_sizes(const PartitionSpec& spec, std::size_t num_labels) {
  spec.validate();
  const std::size_t n = spec.num_clusters();
  std::vector<std::size_t> sizes(n, 0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double want = spec.proportions[i] * static_cast<double>(num_labels);
    sizes[i] = static_cast<std::size_t>(std::ceil(want - 1e-9));
    assigned += sizes[i];
  }
  if (assigned >= num_labels && n > 1) throw DataError("degenerate partition");
  sizes[n - 1] = num_labels - assigned;
  if (std::find(sizes.begin(), sizes.end(), 0u) != sizes.end()) {
    throw DataError("degenerate partition");
  }
  return sizes;
}

LabelClusters partition_by_frequency(const LabelStats& stats, const PartitionSpec& spec) {
  const std::size_t num_labels = stats.num_labels();
  if (num_labels < spec.num_clusters()) throw DataError("degenerate partition");
  const auto sizes = cluster_sizes(spec, num_labels);
  std::vector<std::vector<LabelId>> clusters(sizes.size());
  std::size_t rank = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    clusters[c].assign(stats.order.begin() + static_cast<std::ptrdiff_t>(rank),
                       stats.order.begin() + static_cast<std::ptrdiff_t>(rank + sizes[c]));
    rank += sizes[c];
  }
  return LabelClusters(std::move(clusters), hidden_dims(spec, sizes.size() - 1));
}

void write_partition_table(const LabelClusters& clusters, const LabelStats& stats,
                           bool csv, std::ostream& out) {
  const double total = static_cast<double>(std::max<std::uint64_t>(stats.total(), 1));
  if (csv) {
    out << "cluster,size,min_freq,max_freq,hidden_dim,mass_fraction\n";
  } else {
    out << std::left << std::setw(8) << "cluster" << std::right << std::setw(10) << "size"
        << std::setw(12) << "min_freq" << std::setw(12) << "max_freq" << std::setw(12)
        << "hidden_dim" << std::setw(15) << "mass_fraction" << '\n';
  }
  for (std::size_t c = 0; c < clusters.num_clusters(); ++c) {
    std::uint64_t lo = ~std::uint64_t{0}, hi = 0, mass = 0;
    for (LabelId l : clusters.cluster(c)) {
      const auto f = stats.frequency.at(l);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
      mass += f;
    }
    const double share = static_cast<double>(mass) / total;
    if (csv) {
      out << c << ',' << clusters.cluster_size(c) << ',' << lo << ',' << hi << ','
          << clusters.dims()[c] << ',' << share << '\n';
    } else {
      out << std::left << std::setw(8) << c << std::right << std::setw(10)
          << clusters.cluster_size(c) << std::setw(12) << lo << std::setw(12) << hi
          << std::setw(12) << clusters.dims()[c] << std::setw(15) << std::fixed
          << std::setprecision(6) << share << std::defaultfloat << '\n';
    }
  }
}

}  // namespace aplc
