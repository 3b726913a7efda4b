#include "gait/seq_pool.hpp"

#include <stdexcept>
#include <string>

#include "gait/error.hpp"

namespace gait {

std::string_view to_string(PoolingMode mode) {
  return mode == PoolingMode::kMax ? "max" : "mean";
}

PoolingMode parse_pooling_mode(std::string_view text) {
  if (text == "max") return PoolingMode::kMax;
  if (text == "mean") return PoolingMode::kMean;
  throw std::invalid_argument("unknown pooling mode '" + std::string(text) +
                              "' (expected max or mean)");
}

namespace {

template <typename T>
void check_frames(std::span<const BasicTensor<T>> frames) {
  if (frames.empty()) throw ShapeError("feature map pooling needs at least one frame");
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (frames[t].shape() != frames[0].shape()) {
      throw ShapeError("feature map pooling: frame " + std::to_string(t) + " has shape " +
                       to_string(frames[t].shape()) + ", frame 0 has " +
                       to_string(frames[0].shape()));
    }
  }
}

}  // namespace

template <typename T>
FusedFeature<T> pool_max(std::span<const BasicTensor<T>> frames) {
  check_frames(frames);
  FusedFeature<T> out{frames[0], PoolingMode::kMax, frames.size()};
  const auto n = static_cast<std::ptrdiff_t>(out.maps.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    T best = frames[0][i];
    for (std::size_t t = 1; t < frames.size(); ++t) {
      if (frames[t][i] > best) best = frames[t][i];
    }
    out.maps[i] = best;
  }
  return out;
}

template <typename T>
FusedFeature<T> pool_mean(std::span<const BasicTensor<T>> frames) {
  check_frames(frames);
  FusedFeature<T> out{BasicTensor<T>(frames[0].shape()), PoolingMode::kMean, frames.size()};
  const auto n = static_cast<std::ptrdiff_t>(out.maps.size());
  const double inv_t = 1.0 / static_cast<double>(frames.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& f : frames) acc += static_cast<double>(f[i]);
    out.maps[i] = static_cast<T>(acc * inv_t);
  }
  return out;
}

template <typename T>
FusedFeature<T> pool_frames(std::span<const BasicTensor<T>> frames, PoolingMode mode) {
  return mode == PoolingMode::kMax ? pool_max(frames) : pool_mean(frames);
}

template <typename T>
std::vector<BasicTensor<T>> pool_backward_max(std::span<const BasicTensor<T>> frames,
                                              const BasicTensor<T>& grad_out) {
  check_frames(frames);
  require_shape(grad_out.shape(), frames[0].shape(), "pool_backward_max grad_out");
  std::vector<BasicTensor<T>> grads(frames.size(), BasicTensor<T>(grad_out.shape()));
  const auto n = static_cast<std::ptrdiff_t>(grad_out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t t = 1; t < frames.size(); ++t) {
      if (frames[t][i] > frames[arg][i]) arg = t;
    }
    grads[arg][i] = grad_out[i];
  }
  return grads;
}

template <typename T>
std::vector<BasicTensor<T>> pool_backward_mean(std::span<const BasicTensor<T>> frames,
                                               const BasicTensor<T>& grad_out) {
  check_frames(frames);
  require_shape(grad_out.shape(), frames[0].shape(), "pool_backward_mean grad_out");
  BasicTensor<T> share = grad_out;
  const T inv_t = static_cast<T>(1.0 / static_cast<double>(frames.size()));
  for (T& v : share.values()) v *= inv_t;
  return std::vector<BasicTensor<T>>(frames.size(), share);
}

template <typename T>
std::vector<BasicTensor<T>> pool_backward(std::span<const BasicTensor<T>> frames,
                                          const BasicTensor<T>& grad_out, PoolingMode mode) {
  return mode == PoolingMode::kMax ? pool_backward_max(frames, grad_out)
                                   : pool_backward_mean(frames, grad_out);
}

#define GAIT_INSTANTIATE_POOL(T)                                                               \
  template FusedFeature<T> pool_max(std::span<const BasicTensor<T>>);                          \
  template FusedFeature<T> pool_mean(std::span<const BasicTensor<T>>);                         \
  template FusedFeature<T> pool_frames(std::span<const BasicTensor<T>>, PoolingMode);          \
  template std::vector<BasicTensor<T>> pool_backward_max(std::span<const BasicTensor<T>>,      \
                                                         const BasicTensor<T>&);               \
  template std::vector<BasicTensor<T>> pool_backward_mean(std::span<const BasicTensor<T>>,     \
                                                          const BasicTensor<T>&);              \
  template std::vector<BasicTensor<T>> pool_backward(std::span<const BasicTensor<T>>,          \
                                                     const BasicTensor<T>&, PoolingMode);

GAIT_INSTANTIATE_POOL(float)
GAIT_INSTANTIATE_POOL(double)

}  // namespace gait
