#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aplc/corpus.hpp"
#include "aplc/layer.hpp"
#include "aplc/numerics.hpp"
#include "aplc/optimizer.hpp"

namespace aplc {

struct EncoderDims {
  std::size_t input = 0;      // D
  std::size_t embedding = 256;  // d_e
  std::size_t hidden = 768;   // d_h
  bool operator==(const EncoderDims&) const = default;
};

template <typename T>
struct EncoderCache {
  std::vector<const SparseVector*> inputs;
  BasicMatrix<T> activations;  // tanh(X W_in), N x d_e
};

/// Sparse input map followed by the fully connected hidden layer:
/// h = tanh(X W_in) W_h + b. Only the hidden layer carries a bias.
template <typename T>
class EncoderStack {
 public:
  EncoderStack() = default;
  /// Zero-initialised stack (used when loading weights).
  explicit EncoderStack(EncoderDims dims);
  /// Xavier-uniform weights, zero bias.
  EncoderStack(EncoderDims dims, std::uint64_t seed);

  const EncoderDims& dims() const { return dims_; }

  BasicMatrix<T>& input_weights() { return input_; }
  const BasicMatrix<T>& input_weights() const { return input_; }
  BasicMatrix<T>& hidden_weights() { return hidden_; }
  const BasicMatrix<T>& hidden_weights() const { return hidden_; }
  BasicMatrix<T>& bias() { return bias_; }  // 1 x d_h
  const BasicMatrix<T>& bias() const { return bias_; }

  const BasicMatrix<T>& input_grad() const { return input_grad_; }
  const BasicMatrix<T>& hidden_grad() const { return hidden_grad_; }
  const BasicMatrix<T>& bias_grad() const { return bias_grad_; }
  /// Input-map rows that received gradient in the last backward pass.
  std::span<const std::uint32_t> touched_rows() const { return touched_; }

  /// Throws DataError if a feature index is >= D.
  BasicMatrix<T> encode(std::span<const SparseVector* const> batch,
                        EncoderCache<T>* cache = nullptr) const;

  /// Fills the gradient buffers from dJ/dh. The input-map gradient is only
  /// written on the touched rows; rows touched in the previous call are
  /// cleared first.
  void backward(const EncoderCache<T>& cache, const BasicMatrix<T>& grad_hidden);

  /// Input map as a row-sparse view; hidden weights and bias as dense views.
  ParamView<T> input_param();
  std::vector<ParamView<T>> hidden_params();

  std::uint64_t parameter_count() const {
    return input_.size() + hidden_.size() + bias_.size();
  }

 private:
  void allocate();

  EncoderDims dims_;
  BasicMatrix<T> input_;
  BasicMatrix<T> hidden_;
  BasicMatrix<T> bias_;
  BasicMatrix<T> input_grad_;
  BasicMatrix<T> hidden_grad_;
  BasicMatrix<T> bias_grad_;
  std::vector<std::uint32_t> touched_;
};

template <typename T>
struct ParameterGroup {
  std::string name;
  std::vector<ParamView<T>> params;

  std::uint64_t size() const {
    std::uint64_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
};

/// Disjoint, exhaustive split of trainable parameters into the three
/// learning-rate tiers: "encoder" (input map), "hidden" (W_h, b), "aplc".
template <typename T>
std::vector<ParameterGroup<T>> parameter_groups(EncoderStack<T>& stack, AplcLayer<T>& layer);

}  // namespace aplc
