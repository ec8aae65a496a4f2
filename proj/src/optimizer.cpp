#include "aplc/optimizer.hpp"

#include <cmath>

#include "aplc/errors.hpp"

namespace aplc {

template <typename T>
void AdamW<T>::step(std::span<const ParamView<T>> params, double lr, double grad_scale) {
  if (lr < 0.0) throw UsageError("learning rate must be non-negative");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), T{0});
      v_.emplace_back(p.value.size(), T{0});
    }
  }
  if (m_.size() != params.size()) {
    throw DataError("optimizer state for group '" + group_ + "' has " +
                    std::to_string(m_.size()) + " tensors, got " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.size() != p.value.size() || m_[i].size() != p.value.size()) {
      throw DataError("optimizer shape mismatch for " + group_ + "/" + p.name);
    }
    for (T g : p.grad) {
      if (std::isnan(g)) throw NumericError("NaN gradient in parameter group '" + group_ + "' (" + p.name + ")");
    }
  }

  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const T decay = static_cast<T>(lr * options_.weight_decay);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(options_.epsilon);
  const T gs = static_cast<T>(grad_scale);

  auto update = [&](std::size_t i, std::size_t begin, std::size_t end) {
    const auto& p = params[i];
    T* theta = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t k = begin; k < end; ++k) {
      if (decay != T{0}) theta[k] -= decay * theta[k];
      const T gk = g[k] * gs;
      m[k] = tb1 * m[k] + (T{1} - tb1) * gk;
      v[k] = tb2 * v[k] + (T{1} - tb2) * gk * gk;
      theta[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
  };

  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.row_sparse) {
      update(i, 0, p.value.size());
    } else {
      for (auto r : p.active_rows) update(i, r * p.row_width, (r + 1) * p.row_width);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace aplc
