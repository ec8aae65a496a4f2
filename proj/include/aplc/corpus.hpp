#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aplc {

using LabelId = std::uint32_t;
using FeatureId = std::uint32_t;

/// Sparse tf-idf feature vector. Indices strictly increasing, no stored zeros.
struct SparseVector {
  std::vector<FeatureId> indices;
  std::vector<float> values;

  std::size_t nnz() const { return indices.size(); }
  bool operator==(const SparseVector&) const = default;
};

struct Sample {
  SparseVector features;
  std::vector<LabelId> labels;  // strictly increasing

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_features = 0;
  std::size_t num_labels = 0;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;

  /// Checks every sample against num_features / num_labels and the ordering
  /// invariants. Throws DataError naming the offending sample.
  void validate() const;

  /// Samples [begin, end) as a new dataset with the same dimensions.
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct LabelStats {
  std::vector<std::uint64_t> frequency;
  std::vector<LabelId> order;  // descending frequency, ascending id on ties
  double mean_labels_per_sample = 0.0;
  std::size_t empty_label_samples = 0;

  std::uint64_t total() const;
  std::size_t num_labels() const { return frequency.size(); }
};

/// Parses the Extreme Classification Repository sparse format:
///
///   N D L
///   l1,l2,... i1:v1 i2:v2 ...
///
/// The label list may be empty, may end in a trailing comma, and may use
/// ", " between ids. Errors carry the 1-based line number.
Dataset parse_repository_format(std::istream& in);

/// Reads a dataset from disk, transparently handling gzip compression.
Dataset load_dataset(const std::filesystem::path& path);

/// Writes a dataset in the repository format. Values use enough digits to
/// round-trip through parse_repository_format.
void write_repository_format(const Dataset& dataset, std::ostream& out);

LabelStats compute_label_stats(const Dataset& dataset);

/// Share of total label frequency held by the top ceil(fraction * L) labels.
double cumulative_coverage(const LabelStats& stats, double fraction);

/// Writes the coverage curve as CSV `fraction,mass` sampled at `points`
/// evenly spaced fractions in [0, 1].
void write_coverage_csv(const LabelStats& stats, std::size_t points,
                        std::ostream& out);

/// Seeded Fisher-Yates permutation of 0..n-1 using mt19937_64 with a
/// stdlib-independent bounded draw, so golden files are portable.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// A shuffled epoch cut into blocks of `batch_size` indices (last block short).
class BatchPlan {
 public:
  BatchPlan(std::size_t num_samples, std::size_t batch_size,
            std::uint64_t seed);

  std::size_t num_batches() const { return num_batches_; }
  std::size_t batch_size() const { return batch_size_; }
  std::span<const std::size_t> batch(std::size_t b) const;
  std::span<const std::size_t> order() const { return order_; }

  class Iterator {
   public:
    Iterator(const BatchPlan* plan, std::size_t pos) : plan_(plan), pos_(pos) {}
    std::span<const std::size_t> operator*() const { return plan_->batch(pos_); }
    Iterator& operator++() {
      ++pos_;
      return *this;
    }
    bool operator==(const Iterator&) const = default;

   private:
    const BatchPlan* plan_;
    std::size_t pos_;
  };

  Iterator begin() const { return {this, 0}; }
  Iterator end() const { return {this, num_batches_}; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t num_batches_;
};

BatchPlan batches(const Dataset& dataset, std::size_t batch_size,
                  std::uint64_t seed);

}  // namespace aplc
