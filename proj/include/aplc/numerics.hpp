#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "aplc/corpus.hpp"

namespace aplc {

/// Row-major dense matrix. Value type; copies are deep.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T{0});
  }

  template <typename U>
  BasicMatrix<U> cast() const {
    BasicMatrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

/// Uniform double in [0, 1) from the top 53 bits of one mt19937_64 draw.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Symmetric uniform init with bound sqrt(6 / (rows + cols)).
template <typename T>
void xavier_uniform(BasicMatrix<T>& m, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (auto& v : m.values()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
}

/// Process-wide count of floating-point operations performed by matmul-class
/// kernels, using the 2 * multiply-accumulate convention.
namespace flops {
std::uint64_t count();
void add(std::uint64_t n);
}  // namespace flops

/// Worker count used by the matmul kernels. Results do not depend on it:
/// every output element is reduced in the same order regardless of split.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Dense kernels. All throw DataError on shape mismatch and add
// 2 * M * K * N to the FLOP counter.

/// C = A * B
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// C (+)= A * B
template <typename T>
void matmul_into(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate = false);

/// C (+)= A^T * B
template <typename T>
void matmul_at_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate = false);

/// C (+)= A * B^T
template <typename T>
void matmul_a_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate = false);

/// Row b of the result is sum over (i, v) in rows[b] of v * W[i, :].
/// Counts 2 * nnz * W.cols FLOPs.
template <typename T>
BasicMatrix<T> sparse_dense_matmul(std::span<const SparseVector* const> rows,
                                   const BasicMatrix<T>& w);

/// log(sigmoid(z)) = -softplus(-z), finite for any finite z.
template <typename T>
inline T log_sigmoid(T z) {
  return z >= T{0} ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

template <typename T>
inline T sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
void log_sigmoid_inplace(std::span<T> z) {
  for (auto& v : z) v = log_sigmoid(v);
}

/// log(1 - e^x) for x <= 0. Arguments at 0 are clamped to the smallest
/// normal magnitude so the result stays finite.
template <typename T>
inline T log1m_exp(T x) {
  constexpr T kLn2 = T(0.693147180559945309417);
  x = std::min(x, -std::numeric_limits<T>::min());
  return x > -kLn2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

/// Binary cross entropy from a log-probability: -log p for target 1,
/// -log(1 - p) for target 0. Throws DataError if log_p > 0.
template <typename T>
T bce_from_log_prob(T log_p, int target);

/// Central-difference gradient of `loss` with respect to `params`, evaluated
/// coordinate by coordinate in double precision. `params` is restored.
/// Throws NumericError if the loss is non-finite.
std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step);

/// Max over i of |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

}  // namespace aplc
