#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "gait/tensor.hpp"

namespace gait {

enum class PoolingMode { kMax, kMean };

std::string_view to_string(PoolingMode mode);
// Accepts "max" or "mean"; throws std::invalid_argument otherwise.
PoolingMode parse_pooling_mode(std::string_view text);

/// One fixed-size map summarizing a whole sequence of per-frame feature maps.
template <typename T>
struct FusedFeature {
  BasicTensor<T> maps;
  PoolingMode mode = PoolingMode::kMax;
  std::size_t source_length = 0;
};

// Temporal feature-map pooling. All frames must share one shape; an empty list
// is rejected.
template <typename T>
FusedFeature<T> pool_max(std::span<const BasicTensor<T>> frames);
template <typename T>
FusedFeature<T> pool_mean(std::span<const BasicTensor<T>> frames);
template <typename T>
FusedFeature<T> pool_frames(std::span<const BasicTensor<T>> frames, PoolingMode mode);

// Per-frame gradients. Max routes each position to its earliest argmax frame;
// mean gives every frame grad_out / T.
template <typename T>
std::vector<BasicTensor<T>> pool_backward_max(std::span<const BasicTensor<T>> frames,
                                              const BasicTensor<T>& grad_out);
template <typename T>
std::vector<BasicTensor<T>> pool_backward_mean(std::span<const BasicTensor<T>> frames,
                                               const BasicTensor<T>& grad_out);
template <typename T>
std::vector<BasicTensor<T>> pool_backward(std::span<const BasicTensor<T>> frames,
                                          const BasicTensor<T>& grad_out, PoolingMode mode);

}  // namespace gait
