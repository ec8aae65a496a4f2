#include "aplc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "aplc/errors.hpp"

namespace aplc {

template <typename T>
EncoderStack<T>::EncoderStack(EncoderDims dims) : dims_(dims) {
  allocate();
}

template <typename T>
EncoderStack<T>::EncoderStack(EncoderDims dims, std::uint64_t seed) : dims_(dims) {
  allocate();
  std::mt19937_64 rng(seed);
  xavier_uniform(input_, rng);
  xavier_uniform(hidden_, rng);
}

template <typename T>
void EncoderStack<T>::allocate() {
  if (dims_.input == 0 || dims_.embedding == 0 || dims_.hidden == 0) {
    throw UsageError("encoder dimensions must be positive");
  }
  input_ = BasicMatrix<T>(dims_.input, dims_.embedding);
  hidden_ = BasicMatrix<T>(dims_.embedding, dims_.hidden);
  bias_ = BasicMatrix<T>(1, dims_.hidden);
  input_grad_ = BasicMatrix<T>(dims_.input, dims_.embedding);
  hidden_grad_ = BasicMatrix<T>(dims_.embedding, dims_.hidden);
  bias_grad_ = BasicMatrix<T>(1, dims_.hidden);
  touched_.clear();
}

template <typename T>
BasicMatrix<T> EncoderStack<T>::encode(std::span<const SparseVector* const> batch,
                                       EncoderCache<T>* cache) const {
  BasicMatrix<T> act = sparse_dense_matmul(batch, input_);
  for (auto& v : act.values()) v = std::tanh(v);
  BasicMatrix<T> h;
  matmul_into(act, hidden_, h);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto row = h.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias_(0, j);
  }
  if (cache != nullptr) {
    cache->inputs.assign(batch.begin(), batch.end());
    cache->activations = std::move(act);
  }
  return h;
}

template <typename T>
void EncoderStack<T>::backward(const EncoderCache<T>& cache, const BasicMatrix<T>& grad_hidden) {
  const std::size_t n = cache.inputs.size();
  if (grad_hidden.rows() != n || grad_hidden.cols() != dims_.hidden ||
      cache.activations.rows() != n || cache.activations.cols() != dims_.embedding) {
    throw DataError("encoder backward: cache does not match gradient");
  }

  bias_grad_.fill(T{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dims_.hidden; ++j) bias_grad_(0, j) += grad_hidden(i, j);
  }
  matmul_at_b(cache.activations, grad_hidden, hidden_grad_);

  BasicMatrix<T> d_act;
  matmul_a_bt(grad_hidden, hidden_, d_act);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dims_.embedding; ++j) {
      const T a = cache.activations(i, j);
      d_act(i, j) *= T{1} - a * a;
    }
  }

  for (auto r : touched_) std::fill_n(input_grad_.data() + r * dims_.embedding, dims_.embedding, T{0});
  touched_.clear();
  std::uint64_t nnz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const SparseVector& x = *cache.inputs[i];
    const T* src = d_act.data() + i * dims_.embedding;
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const auto r = x.indices[k];
      touched_.push_back(r);
      const T v = static_cast<T>(x.values[k]);
      T* dst = input_grad_.data() + static_cast<std::size_t>(r) * dims_.embedding;
      for (std::size_t j = 0; j < dims_.embedding; ++j) dst[j] += v * src[j];
    }
    nnz += x.nnz();
  }
  flops::add(2 * nnz * dims_.embedding);
  std::sort(touched_.begin(), touched_.end());
  touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());
}

template <typename T>
ParamView<T> EncoderStack<T>::input_param() {
  ParamView<T> p{"encoder.input", input_.values(), input_grad_.values()};
  p.active_rows = touched_;
  p.row_width = dims_.embedding;
  p.row_sparse = true;
  return p;
}

template <typename T>
std::vector<ParamView<T>> EncoderStack<T>::hidden_params() {
  return {{"hidden.weights", hidden_.values(), hidden_grad_.values()},
          {"hidden.bias", bias_.values(), bias_grad_.values()}};
}

template <typename T>
std::vector<ParameterGroup<T>> parameter_groups(EncoderStack<T>& stack, AplcLayer<T>& layer) {
  return {{"encoder", {stack.input_param()}},
          {"hidden", stack.hidden_params()},
          {"aplc", layer.params()}};
}

template class EncoderStack<float>;
template class EncoderStack<double>;
template std::vector<ParameterGroup<float>> parameter_groups(EncoderStack<float>&,
                                                             AplcLayer<float>&);
template std::vector<ParameterGroup<double>> parameter_groups(EncoderStack<double>&,
                                                              AplcLayer<double>&);

}  // namespace aplc
