#pragma once

#include <cstdint>
#include <vector>

#include "gait/tensor.hpp"

namespace gait {

/// Across-channel local response normalization:
///   b[c,h,w] = a[c,h,w] / (k + alpha * sum_{|c'-c| <= radius} a[c',h,w]^2)^beta
struct LrnParams {
  int radius = 2;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;

  void validate() const;
  friend bool operator==(const LrnParams&, const LrnParams&) = default;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

// Flat input offsets of the selected element in each 2x2 window, in output order.
struct PoolIndices {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> output;
  PoolIndices indices;
};

// OpenMP kernels used by the network. Each output element is accumulated in a
// fixed order, so results do not depend on the thread count.
namespace kernels {

// Valid (unpadded) stride-1 cross-correlation. input [C,H,W], weight [O,C,K,K],
// bias [O] -> [O, H-K+1, W-K+1].
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias);
// With compute_input_grad == false the returned input gradient is left empty.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, bool compute_input_grad = true);

// Disjoint 2x2 windows, stride 2. Ties go to the first element in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p);
template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p,
                            const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

// y = W x + b with input [D], weight [K,D], bias [K].
template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias);
template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out);

// Max-subtracted softmax over a rank-1 tensor.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

}  // namespace kernels

// Single-threaded direct implementations, kept as the correctness reference for
// the kernels above and as the baseline in the benchmark.
namespace kernels::reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias);
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out);
template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out);
template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p);
template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p,
                            const BasicTensor<T>& grad_out);
template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias);
template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out);

}  // namespace kernels::reference

// Shape helpers shared by both kernel sets.
namespace kernels::detail {
void check_conv(const Shape& input, const Shape& weight, const Shape& bias);
void check_conv_grad(const Shape& input, const Shape& weight, const Shape& grad_out);
void check_pool_input(const Shape& input);
void check_pool_grad(const PoolIndices& indices, const Shape& grad_out);
void check_fc(const Shape& input, const Shape& weight, const Shape& bias);
void check_fc_grad(const Shape& input, const Shape& weight, const Shape& grad_out);
void check_lrn(const Shape& input, const LrnParams& p);
}  // namespace kernels::detail

}  // namespace gait
