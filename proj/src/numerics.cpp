#include "aplc/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <string>
#include <thread>

#include "aplc/errors.hpp"

namespace aplc {
namespace {

std::atomic<std::uint64_t> g_flops{0};
std::atomic<std::size_t> g_threads{1};

// Runs fn(begin, end) over [0, n) split into contiguous chunks.
template <typename Fn>
void parallel_ranges(std::size_t n, std::size_t min_chunk, Fn&& fn) {
  const std::size_t workers = std::min(num_threads(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    for (int u = 0; u < 8; ++u) acc[u] += a[k + u] * b[k + u];
  }
  T sum = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; k < n; ++k) sum += a[k] * b[k];
  return sum;
}

void shape_error(const char* op, std::size_t ar, std::size_t ac, std::size_t br,
                 std::size_t bc) {
  throw DataError(std::string(op) + ": shape mismatch " + std::to_string(ar) + "x" +
                  std::to_string(ac) + " vs " + std::to_string(br) + "x" +
                  std::to_string(bc));
}

template <typename T>
void prepare_output(BasicMatrix<T>& c, std::size_t rows, std::size_t cols, bool accumulate,
                    const char* op) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols) shape_error(op, c.rows(), c.cols(), rows, cols);
  } else if (c.rows() != rows || c.cols() != cols) {
    c.resize(rows, cols);
  } else {
    c.fill(T{0});
  }
}

}  // namespace

namespace flops {
std::uint64_t count() { return g_flops.load(std::memory_order_relaxed); }
void add(std::uint64_t n) { g_flops.fetch_add(n, std::memory_order_relaxed); }
}  // namespace flops

void set_num_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }
std::size_t num_threads() { return g_threads.load(); }

template <typename T>
void matmul_into(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate) {
  if (a.cols() != b.rows()) shape_error("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  prepare_output(c, a.rows(), b.cols(), accumulate, "matmul");
  const std::size_t m = a.rows(), inner = a.cols(), n = b.cols();
  auto rows_kernel = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    for (std::size_t i = r0; i < r1; ++i) {
      T* out = c.data() + i * n;
      const T* arow = a.data() + i * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        const T av = arow[k];
        if (av == T{0}) continue;
        const T* brow = b.data() + k * n;
        for (std::size_t j = c0; j < c1; ++j) out[j] += av * brow[j];
      }
    }
  };
  if (m >= num_threads()) {
    parallel_ranges(m, 1, [&](std::size_t r0, std::size_t r1) { rows_kernel(r0, r1, 0, n); });
  } else {
    parallel_ranges(n, 64, [&](std::size_t c0, std::size_t c1) { rows_kernel(0, m, c0, c1); });
  }
  flops::add(2ull * m * inner * n);
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  BasicMatrix<T> c;
  matmul_into(a, b, c, false);
  return c;
}

template <typename T>
void matmul_at_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate) {
  if (a.rows() != b.rows()) shape_error("matmul_at_b", a.rows(), a.cols(), b.rows(), b.cols());
  prepare_output(c, a.cols(), b.cols(), accumulate, "matmul_at_b");
  const std::size_t m = a.rows(), kdim = a.cols(), n = b.cols();
  parallel_ranges(kdim, 1, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      T* out = c.data() + k * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = a.data()[i * kdim + k];
        if (av == T{0}) continue;
        const T* brow = b.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
      }
    }
  });
  flops::add(2ull * m * kdim * n);
}

template <typename T>
void matmul_a_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& c,
                 bool accumulate) {
  if (a.cols() != b.cols()) shape_error("matmul_a_bt", a.rows(), a.cols(), b.rows(), b.cols());
  prepare_output(c, a.rows(), b.rows(), accumulate, "matmul_a_bt");
  const std::size_t m = a.rows(), inner = a.cols(), n = b.rows();
  auto kernel = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const T* arow = a.data() + i * inner;
      T* out = c.data() + i * n;
      for (std::size_t j = c0; j < c1; ++j) out[j] += dot(arow, b.data() + j * inner, inner);
    }
  };
  if (m >= num_threads()) {
    parallel_ranges(m, 1, [&](std::size_t r0, std::size_t r1) { kernel(r0, r1, 0, n); });
  } else {
    parallel_ranges(n, 16, [&](std::size_t c0, std::size_t c1) { kernel(0, m, c0, c1); });
  }
  flops::add(2ull * m * inner * n);
}

template <typename T>
BasicMatrix<T> sparse_dense_matmul(std::span<const SparseVector* const> rows,
                                   const BasicMatrix<T>& w) {
  BasicMatrix<T> out(rows.size(), w.cols());
  std::uint64_t nnz = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const SparseVector& x = *rows[b];
    for (auto idx : x.indices) {
      if (idx >= w.rows()) {
        throw DataError("sparse_dense_matmul: feature index " + std::to_string(idx) +
                        " >= " + std::to_string(w.rows()));
      }
    }
    T* dst = out.data() + b * w.cols();
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const T v = static_cast<T>(x.values[k]);
      const T* src = w.data() + static_cast<std::size_t>(x.indices[k]) * w.cols();
      for (std::size_t j = 0; j < w.cols(); ++j) dst[j] += v * src[j];
    }
    nnz += x.nnz();
  }
  flops::add(2ull * nnz * w.cols());
  return out;
}

template <typename T>
T bce_from_log_prob(T log_p, int target) {
  if (log_p > T{0}) throw DataError("bce_from_log_prob: log probability is positive");
  return target != 0 ? -log_p : -log1m_exp(log_p);
}

std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step) {
  if (!(step > 0.0)) throw UsageError("finite difference step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss();
    params[i] = saved - step;
    const double down = loss();
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_difference_gradient: non-finite loss at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw DataError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

#define APLC_INSTANTIATE(T)                                                              \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);          \
  template void matmul_into(const BasicMatrix<T>&, const BasicMatrix<T>&, BasicMatrix<T>&, \
                            bool);                                                       \
  template void matmul_at_b(const BasicMatrix<T>&, const BasicMatrix<T>&, BasicMatrix<T>&, \
                            bool);                                                       \
  template void matmul_a_bt(const BasicMatrix<T>&, const BasicMatrix<T>&, BasicMatrix<T>&, \
                            bool);                                                       \
  template BasicMatrix<T> sparse_dense_matmul(std::span<const SparseVector* const>,      \
                                              const BasicMatrix<T>&);                    \
  template T bce_from_log_prob(T, int);

APLC_INSTANTIATE(float)
APLC_INSTANTIATE(double)
#undef APLC_INSTANTIATE

}  // namespace aplc
