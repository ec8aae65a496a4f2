#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aplc {

/// One trainable tensor as seen by the optimizer. With `row_sparse` set only
/// `active_rows` (each `row_width` wide) are stepped; this is how the sparse
/// input map avoids touching all D rows every step.
template <typename T>
struct ParamView {
  std::string name;
  std::span<T> value;
  std::span<const T> grad;
  std::span<const std::uint32_t> active_rows{};
  std::size_t row_width = 0;
  bool row_sparse = false;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW state for one parameter group: first/second moments per parameter
/// and the shared step counter.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::string group, AdamWOptions options = {})
      : group_(std::move(group)), options_(options) {}

  /// Decoupled weight decay (theta -= lr * wd * theta), then the
  /// bias-corrected moment update. Moments are allocated lazily on the first
  /// step and must keep their shapes afterwards. Throws NumericError naming
  /// the group on a NaN gradient. Gradients are multiplied by `grad_scale`
  /// (used for norm clipping) before use.
  void step(std::span<const ParamView<T>> params, double lr, double grad_scale = 1.0);

  const std::string& group() const { return group_; }
  const AdamWOptions& options() const { return options_; }
  std::uint64_t steps() const { return t_; }

  // Raw state access for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::string group_;
  AdamWOptions options_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace aplc
