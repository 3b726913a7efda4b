#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "gait/kernels.hpp"
#include "gait/seq_pool.hpp"
#include "gait/tensor.hpp"

namespace gait {

// Per-step input: channel 0 silhouette, channel 1 signed frame difference.
inline constexpr std::size_t kInputChannels = 2;

// Output index of each class in the two-way head. Index 1 means "same subject".
inline constexpr std::size_t kDiffIndex = 0;
inline constexpr std::size_t kSameIndex = 1;

enum class PairLabel { kDifferent = 0, kSame = 1 };

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 7;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Layer widths and spatial sizes of the pairwise network.
///
/// fCNN:  input -> conv1 -> relu -> pool2x2 -> lrn -> conv2 -> relu -> pool2x2 -> lrn
/// head:  |a - b| -> mcnn conv -> relu -> flatten -> fc(2) -> softmax
///
/// paper() is the full-size network (126 -> 120 -> 60 -> 54 -> 27, mCNN 27 -> 21,
/// flatten 256*21*21 = 112896). desk() and tiny() keep the layer sequence with
/// smaller widths and kernels so training and finite-difference checks fit on a CPU.
struct NetConfig {
  std::size_t input_size = 126;
  ConvSpec conv1{16, 7};
  ConvSpec conv2{64, 7};
  ConvSpec mcnn{256, 7};
  LrnParams lrn{};
  PoolingMode pooling = PoolingMode::kMax;

  static NetConfig paper();
  static NetConfig desk();
  static NetConfig tiny();

  std::size_t conv1_size() const;
  std::size_t pool1_size() const;
  std::size_t conv2_size() const;
  std::size_t feature_size() const;
  std::size_t mcnn_size() const;
  std::size_t flatten_size() const;

  Shape step_shape() const;
  Shape feature_shape() const;

  // Throws ShapeError when the spatial chain is not realizable (odd size at a
  // pool, or a kernel larger than its input).
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// The learnable tensors of the network, in a fixed order.
template <typename T>
struct ParamSet {
  static constexpr std::size_t kCount = 8;
  static constexpr std::array<std::string_view, kCount> kNames = {
      "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
      "mcnn.weight",  "mcnn.bias",  "fc.weight",    "fc.bias"};

  BasicTensor<T> conv1_weight, conv1_bias;
  BasicTensor<T> conv2_weight, conv2_bias;
  BasicTensor<T> mcnn_weight, mcnn_bias;
  BasicTensor<T> fc_weight, fc_bias;

  static ParamSet zeros(const NetConfig& config);

  std::array<BasicTensor<T>*, kCount> tensors() {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias,
            &mcnn_weight,  &mcnn_bias,  &fc_weight,    &fc_bias};
  }
  std::array<const BasicTensor<T>*, kCount> tensors() const {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias,
            &mcnn_weight,  &mcnn_bias,  &fc_weight,    &fc_bias};
  }

  void add(const ParamSet& other);
  void scale(T factor);
  bool all_finite() const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < kCount; ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Weights, SGD velocity and the number of completed training iterations.
template <typename T>
struct BasicModelParams {
  NetConfig config;
  ParamSet<T> weights;
  ParamSet<T> velocity;
  std::uint64_t iteration = 0;
};

using ModelParams = BasicModelParams<float>;

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for every weight tensor, zero biases,
// zero velocity. Deterministic in (config, seed).
ModelParams init_params(const NetConfig& config, std::uint64_t seed);

// w <- w + v with v <- momentum * v - lr * g. Rejects non-finite gradients
// (NumericError) before touching any parameter.
template <typename T>
void sgd_step(BasicModelParams<T>& params, const ParamSet<T>& grads, double lr, double momentum);

struct SimilarityScore {
  double p_same = 0.5;
  double p_diff = 0.5;
};

// Softmax of the two head logits, computed in double.
SimilarityScore score_from_logits(double logit_diff, double logit_same);

// ---- fCNN ------------------------------------------------------------------

template <typename T>
BasicTensor<T> fcnn_forward(const BasicTensor<T>& step, const ParamSet<T>& params,
                            const NetConfig& config);

// Recomputes the frame's forward pass and accumulates parameter gradients for
// dLoss/dfeature = grad_feature into `grads`.
template <typename T>
void fcnn_backward(const BasicTensor<T>& step, const ParamSet<T>& params, const NetConfig& config,
                   const BasicTensor<T>& grad_feature, ParamSet<T>& grads);

// fCNN on every step, then temporal pooling. When `frame_features` is non-null
// it receives the per-step fCNN outputs.
template <typename T>
FusedFeature<T> embed_sequence(std::span<const BasicTensor<T>> steps, const ParamSet<T>& params,
                               const NetConfig& config, PoolingMode mode,
                               std::vector<BasicTensor<T>>* frame_features = nullptr);

// ---- similarity head ---------------------------------------------------------

template <typename T>
struct CompareTrace {
  BasicTensor<T> diff;        // |a - b|
  BasicTensor<T> activation;  // relu(mcnn(diff)), flattened
};

// Returns the two logits {diff, same}.
template <typename T>
BasicTensor<T> compare_logits(const BasicTensor<T>& a, const BasicTensor<T>& b,
                              const ParamSet<T>& params, const NetConfig& config,
                              CompareTrace<T>* trace = nullptr);

template <typename T>
SimilarityScore compare(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const ParamSet<T>& params, const NetConfig& config);

// Accumulates head parameter gradients into `grads`; returns dLoss/da and dLoss/db.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> compare_backward(const BasicTensor<T>& a,
                                                           const BasicTensor<T>& b,
                                                           const ParamSet<T>& params,
                                                           const NetConfig& config,
                                                           const CompareTrace<T>& trace,
                                                           const BasicTensor<T>& grad_logits,
                                                           ParamSet<T>& grads);

// embed_sequence on both inputs with the same parameters, then compare.
template <typename T>
SimilarityScore forward_pair(std::span<const BasicTensor<T>> steps_a,
                             std::span<const BasicTensor<T>> steps_b, const ParamSet<T>& params,
                             const NetConfig& config, PoolingMode mode);

}  // namespace gait
