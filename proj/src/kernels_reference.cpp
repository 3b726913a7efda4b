#include <algorithm>
#include <cmath>

#include "gait/kernels.hpp"

namespace gait::kernels::reference {

using std::size_t;

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias) {
  detail::check_conv(input.shape(), weight.shape(), bias.shape());
  const size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const size_t O = weight.dim(0), K = weight.dim(2);
  const size_t OH = H - K + 1, OW = W - K + 1;
  BasicTensor<T> out({O, OH, OW});
  for (size_t o = 0; o < O; ++o) {
    for (size_t y = 0; y < OH; ++y) {
      for (size_t x = 0; x < OW; ++x) {
        T acc = bias[o];
        for (size_t c = 0; c < C; ++c)
          for (size_t ky = 0; ky < K; ++ky)
            for (size_t kx = 0; kx < K; ++kx)
              acc += weight[((o * C + c) * K + ky) * K + kx] * input.at(c, y + ky, x + kx);
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out) {
  detail::check_conv_grad(input.shape(), weight.shape(), grad_out.shape());
  const size_t C = input.dim(0);
  const size_t O = weight.dim(0), K = weight.dim(2);
  const size_t OH = grad_out.dim(1), OW = grad_out.dim(2);
  ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()),
                 BasicTensor<T>({O})};
  for (size_t o = 0; o < O; ++o) {
    for (size_t y = 0; y < OH; ++y) {
      for (size_t x = 0; x < OW; ++x) {
        const T go = grad_out.at(o, y, x);
        g.bias[o] += go;
        for (size_t c = 0; c < C; ++c) {
          for (size_t ky = 0; ky < K; ++ky) {
            for (size_t kx = 0; kx < K; ++kx) {
              const size_t wi = ((o * C + c) * K + ky) * K + kx;
              g.weight[wi] += go * input.at(c, y + ky, x + kx);
              g.input.at(c, y + ky, x + kx) += go * weight[wi];
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input) {
  detail::check_pool_input(input.shape());
  const size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  MaxPoolResult<T> r{BasicTensor<T>({C, H / 2, W / 2}), PoolIndices{input.shape(), {}}};
  for (size_t c = 0; c < C; ++c) {
    for (size_t y = 0; y < H / 2; ++y) {
      for (size_t x = 0; x < W / 2; ++x) {
        size_t best = (c * H + 2 * y) * W + 2 * x;
        for (size_t dy = 0; dy < 2; ++dy) {
          for (size_t dx = 0; dx < 2; ++dx) {
            const size_t idx = (c * H + 2 * y + dy) * W + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output.at(c, y, x) = input[best];
        r.indices.argmax.push_back(static_cast<std::uint32_t>(best));
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out) {
  detail::check_pool_grad(indices, grad_out.shape());
  BasicTensor<T> grad_in(indices.input_shape);
  for (size_t i = 0; i < grad_out.size(); ++i) grad_in[indices.argmax[i]] += grad_out[i];
  return grad_in;
}

namespace {
template <typename T>
T window_scale(const BasicTensor<T>& a, const LrnParams& p, size_t c, size_t h, size_t w) {
  const long C = static_cast<long>(a.dim(0));
  T sum = 0;
  for (long cc = static_cast<long>(c) - p.radius; cc <= static_cast<long>(c) + p.radius; ++cc) {
    if (cc < 0 || cc >= C) continue;
    const T v = a.at(static_cast<size_t>(cc), h, w);
    sum += v * v;
  }
  return static_cast<T>(p.k) + static_cast<T>(p.alpha) * sum;
}
}  // namespace

template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p) {
  detail::check_lrn(input.shape(), p);
  BasicTensor<T> out(input.shape());
  for (size_t c = 0; c < input.dim(0); ++c)
    for (size_t h = 0; h < input.dim(1); ++h)
      for (size_t w = 0; w < input.dim(2); ++w)
        out.at(c, h, w) = input.at(c, h, w) /
                          std::pow(window_scale(input, p, c, h, w), static_cast<T>(p.beta));
  return out;
}

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p,
                            const BasicTensor<T>& grad_out) {
  detail::check_lrn(input.shape(), p);
  require_shape(grad_out.shape(), input.shape(), "lrn_backward grad_out");
  const long C = static_cast<long>(input.dim(0));
  const T beta = static_cast<T>(p.beta);
  BasicTensor<T> grad_in(input.shape());
  // d b[c] / d a[j] = delta(c,j) s_c^-beta - 2 alpha beta a_c a_j s_c^(-beta-1) [j in window(c)]
  for (long c = 0; c < C; ++c) {
    for (size_t h = 0; h < input.dim(1); ++h) {
      for (size_t w = 0; w < input.dim(2); ++w) {
        const T s = window_scale(input, p, static_cast<size_t>(c), h, w);
        const T g = grad_out.at(static_cast<size_t>(c), h, w);
        const T ac = input.at(static_cast<size_t>(c), h, w);
        grad_in.at(static_cast<size_t>(c), h, w) += g * std::pow(s, -beta);
        for (long j = std::max(0L, c - p.radius); j <= std::min(C - 1, c + p.radius); ++j) {
          const T aj = input.at(static_cast<size_t>(j), h, w);
          grad_in.at(static_cast<size_t>(j), h, w) -=
              g * static_cast<T>(2 * p.alpha) * beta * ac * aj * std::pow(s, -beta - 1);
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias) {
  detail::check_fc(input.shape(), weight.shape(), bias.shape());
  const size_t K = weight.dim(0), D = weight.dim(1);
  BasicTensor<T> out = bias;
  for (size_t k = 0; k < K; ++k)
    for (size_t d = 0; d < D; ++d) out[k] += weight[k * D + d] * input[d];
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out) {
  detail::check_fc_grad(input.shape(), weight.shape(), grad_out.shape());
  const size_t K = weight.dim(0), D = weight.dim(1);
  FcGrads<T> g{BasicTensor<T>({D}), BasicTensor<T>(weight.shape()), grad_out};
  for (size_t k = 0; k < K; ++k) {
    for (size_t d = 0; d < D; ++d) {
      g.weight[k * D + d] = grad_out[k] * input[d];
      g.input[d] += weight[k * D + d] * grad_out[k];
    }
  }
  return g;
}

#define GAIT_INSTANTIATE_REFERENCE(T)                                                          \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const BasicTensor<T>&);                               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                        const BasicTensor<T>&);                                \
  template MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>&);                         \
  template BasicTensor<T> maxpool2x2_backward(const PoolIndices&, const BasicTensor<T>&);      \
  template BasicTensor<T> lrn_forward(const BasicTensor<T>&, const LrnParams&);                \
  template BasicTensor<T> lrn_backward(const BasicTensor<T>&, const LrnParams&,                \
                                       const BasicTensor<T>&);                                 \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                     const BasicTensor<T>&);                                   \
  template FcGrads<T> fc_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                  const BasicTensor<T>&);

GAIT_INSTANTIATE_REFERENCE(float)
GAIT_INSTANTIATE_REFERENCE(double)

}  // namespace gait::kernels::reference
