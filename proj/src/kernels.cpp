#include "gait/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "gait/error.hpp"

namespace gait {

void LrnParams::validate() const {
  if (radius < 0 || !(k > 0.0) || !(alpha >= 0.0) || !(beta > 0.0)) {
    throw ShapeError("invalid LRN parameters: radius=" + std::to_string(radius) +
                     " k=" + std::to_string(k) + " alpha=" + std::to_string(alpha) +
                     " beta=" + std::to_string(beta));
  }
}

namespace kernels::detail {

void check_conv(const Shape& input, const Shape& weight, const Shape& bias) {
  if (input.size() != 3 || weight.size() != 4 || bias.size() != 1) {
    throw ShapeError("conv2d: expected input [C,H,W], weight [O,C,K,K], bias [O]; got input " +
                     to_string(input) + ", weight " + to_string(weight));
  }
  if (weight[1] != input[0] || weight[2] != weight[3] || bias[0] != weight[0]) {
    throw ShapeError("conv2d: input " + to_string(input) + " incompatible with weight " +
                     to_string(weight) + " and bias " + to_string(bias));
  }
  if (input[1] < weight[2] || input[2] < weight[3]) {
    throw ShapeError("conv2d: input " + to_string(input) + " smaller than kernel of weight " +
                     to_string(weight));
  }
}

void check_conv_grad(const Shape& input, const Shape& weight, const Shape& grad_out) {
  check_conv(input, weight, Shape{weight.size() == 4 ? weight[0] : 0});
  const std::size_t k = weight[2];
  require_shape(grad_out, Shape{weight[0], input[1] - k + 1, input[2] - k + 1},
                "conv2d_backward grad_out");
}

void check_pool_input(const Shape& input) {
  if (input.size() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0) {
    throw ShapeError("maxpool2x2: expected [C,H,W] with even H and W, got " + to_string(input));
  }
}

void check_pool_grad(const PoolIndices& indices, const Shape& grad_out) {
  check_pool_input(indices.input_shape);
  const Shape expected{indices.input_shape[0], indices.input_shape[1] / 2,
                       indices.input_shape[2] / 2};
  if (grad_out != expected || indices.argmax.size() != shape_size(expected)) {
    throw ShapeError("maxpool2x2_backward: stale indices for input " +
                     to_string(indices.input_shape) + ", grad_out " + to_string(grad_out));
  }
}

void check_fc(const Shape& input, const Shape& weight, const Shape& bias) {
  if (input.size() != 1 || weight.size() != 2 || bias.size() != 1 || weight[1] != input[0] ||
      bias[0] != weight[0]) {
    throw ShapeError("fc: input " + to_string(input) + " incompatible with weight " +
                     to_string(weight) + " and bias " + to_string(bias));
  }
}

void check_fc_grad(const Shape& input, const Shape& weight, const Shape& grad_out) {
  check_fc(input, weight, Shape{weight.size() == 2 ? weight[0] : 0});
  require_shape(grad_out, Shape{weight[0]}, "fc_backward grad_out");
}

void check_lrn(const Shape& input, const LrnParams& p) {
  if (input.size() != 3) throw ShapeError("lrn: expected [C,H,W], got " + to_string(input));
  p.validate();
}

}  // namespace kernels::detail

namespace kernels {

using std::ptrdiff_t;
using std::size_t;

namespace {

// Rows are processed at the input stride W so that every (c, ky, kx) tap is a
// fixed offset into a flat plane. Blocks of kBlock outputs accumulate all taps in
// registers; the per-element summation order is always (c, ky, kx) or (o, ky, kx).
constexpr size_t kBlock = 64;

typedef float VecF __attribute__((vector_size(64)));
typedef double VecD __attribute__((vector_size(64)));
template <typename T>
using Vec = std::conditional_t<std::is_same_v<T, float>, VecF, VecD>;

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void tap_block(T* acc, const T* base, const std::vector<size_t>& offs, const T* wts, size_t n) {
  constexpr size_t L = 64 / sizeof(T);
  constexpr size_t N = kBlock / L;
  if (n == kBlock) {
    Vec<T> a[N];
    for (size_t v = 0; v < N; ++v) a[v] = load(acc + v * L);
    for (size_t t = 0; t < offs.size(); ++t) {
      const T wv = wts[t];
      const T* s = base + offs[t];
      for (size_t v = 0; v < N; ++v) a[v] += wv * load(s + v * L);
    }
    std::memcpy(acc, a, sizeof a);
    return;
  }
  for (size_t t = 0; t < offs.size(); ++t) {
    const T wv = wts[t];
    const T* s = base + offs[t];
    for (size_t l = 0; l < n; ++l) acc[l] += wv * s[l];
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias) {
  detail::check_conv(input.shape(), weight.shape(), bias.shape());
  const size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const size_t O = weight.dim(0), K = weight.dim(2);
  const size_t OH = H - K + 1, OW = W - K + 1;
  const size_t span = (OH - 1) * W + OW;
  BasicTensor<T> out({O, OH, OW});
  std::vector<size_t> offs;
  for (size_t c = 0; c < C; ++c)
    for (size_t ky = 0; ky < K; ++ky)
      for (size_t kx = 0; kx < K; ++kx) offs.push_back(c * H * W + ky * W + kx);

#pragma omp parallel
  {
    std::vector<T> acc(span);
#pragma omp for schedule(static)
    for (ptrdiff_t o = 0; o < static_cast<ptrdiff_t>(O); ++o) {
      std::fill(acc.begin(), acc.end(), bias[o]);
      const T* wts = weight.data() + o * C * K * K;
      for (size_t i = 0; i < span; i += kBlock) {
        tap_block(acc.data() + i, input.data() + i, offs, wts, std::min(kBlock, span - i));
      }
      T* plane = out.data() + o * OH * OW;
      for (size_t y = 0; y < OH; ++y) std::copy_n(acc.data() + y * W, OW, plane + y * OW);
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, bool compute_input_grad) {
  detail::check_conv_grad(input.shape(), weight.shape(), grad_out.shape());
  const size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const size_t O = weight.dim(0), K = weight.dim(2);
  const size_t OH = H - K + 1, OW = W - K + 1;
  const size_t KK = K * K;
  ConvGrads<T> g{{}, BasicTensor<T>(weight.shape()), BasicTensor<T>({O})};

  // grad_out re-laid at stride W, junk columns zero, with a zero apron of
  // `front` elements before and K after so shifted reads stay in bounds
  const size_t front = (K - 1) * W + (K - 1);
  const size_t plane = front + H * W + K;
  std::vector<T> padded(O * plane, T(0));
  for (size_t o = 0; o < O; ++o) {
    for (size_t y = 0; y < OH; ++y) {
      std::copy_n(grad_out.data() + (o * OH + y) * OW, OW,
                  padded.data() + o * plane + front + y * W);
    }
  }
  const size_t span = OH * W;  // junk columns contribute zero

#pragma omp parallel for schedule(static)
  for (ptrdiff_t o = 0; o < static_cast<ptrdiff_t>(O); ++o) {
    const T* gplane = grad_out.data() + o * OH * OW;
    T bsum = 0;
    for (size_t i = 0; i < OH * OW; ++i) bsum += gplane[i];
    g.bias[o] = bsum;
    const T* gp = padded.data() + o * plane + front;
    for (size_t c = 0; c < C; ++c) {
      // one vector of lanes per tap; lane l sums positions congruent to l
      constexpr size_t L = 64 / sizeof(T);
      std::vector<Vec<T>> lanes(KK, Vec<T>{});
      const T* src = input.data() + c * H * W;
      const size_t max_off = (K - 1) * W + (K - 1);
      size_t i = 0;
      for (; i + L <= span && i + L + max_off <= H * W; i += L) {
        const Vec<T> gv = load(gp + i);
        for (size_t ky = 0; ky < K; ++ky) {
          for (size_t kx = 0; kx < K; ++kx) {
            lanes[ky * K + kx] += gv * load(src + i + ky * W + kx);
          }
        }
      }
      for (; i < span; ++i) {
        for (size_t ky = 0; ky < K; ++ky) {
          for (size_t kx = 0; kx < K; ++kx) {
            // past the plane end gp is zero
            if (i + ky * W + kx < H * W) lanes[ky * K + kx][i % L] += gp[i] * src[i + ky * W + kx];
          }
        }
      }
      for (size_t t = 0; t < KK; ++t) {
        T acc = 0;
        for (size_t l = 0; l < L; ++l) acc += lanes[t][l];
        g.weight[(o * C + c) * KK + t] = acc;
      }
    }
  }
  if (!compute_input_grad) return g;

  g.input = BasicTensor<T>(input.shape());
  // gather form: gin[j] = sum over (o, ky, kx) of w * gp[j - ky*W - kx]
  std::vector<size_t> offs;
  for (size_t o = 0; o < O; ++o)
    for (size_t ky = 0; ky < K; ++ky)
      for (size_t kx = 0; kx < K; ++kx) offs.push_back(o * plane + front - ky * W - kx);

#pragma omp parallel
  {
    std::vector<T> wts(O * KK);
#pragma omp for schedule(static)
    for (ptrdiff_t c = 0; c < static_cast<ptrdiff_t>(C); ++c) {
      for (size_t o = 0; o < O; ++o)
        std::copy_n(weight.data() + (o * C + c) * KK, KK, wts.data() + o * KK);
      T* gin = g.input.data() + c * H * W;
      for (size_t i = 0; i < H * W; i += kBlock) {
        tap_block(gin + i, padded.data() + i, offs, wts.data(), std::min(kBlock, H * W - i));
      }
    }
  }
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input) {
  detail::check_pool_input(input.shape());
  const size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const size_t OH = H / 2, OW = W / 2;
  MaxPoolResult<T> r{BasicTensor<T>({C, OH, OW}), PoolIndices{input.shape(), {}}};
  r.indices.argmax.resize(C * OH * OW);
  const T* in = input.data();

#pragma omp parallel for schedule(static)
  for (ptrdiff_t c = 0; c < static_cast<ptrdiff_t>(C); ++c) {
    for (size_t y = 0; y < OH; ++y) {
      for (size_t x = 0; x < OW; ++x) {
        const size_t base = (c * H + 2 * y) * W + 2 * x;
        const size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        size_t best = cand[0];
        for (int i = 1; i < 4; ++i) {
          if (in[cand[i]] > in[best]) best = cand[i];
        }
        const size_t o = (c * OH + y) * OW + x;
        r.output[o] = in[best];
        r.indices.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out) {
  detail::check_pool_grad(indices, grad_out.shape());
  BasicTensor<T> grad_in(indices.input_shape);
  const ptrdiff_t n = static_cast<ptrdiff_t>(grad_out.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) grad_in[indices.argmax[i]] = grad_out[i];
  return grad_in;
}

namespace {

// scale[c] = k + alpha * sum of squares over the channel window of c.
template <typename T>
BasicTensor<T> lrn_scale(const BasicTensor<T>& input, const LrnParams& p) {
  const size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
  BasicTensor<T> scale(input.shape());
  const T* a = input.data();
  const T alpha = static_cast<T>(p.alpha);
  const T k = static_cast<T>(p.k);

#pragma omp parallel for schedule(static)
  for (ptrdiff_t c = 0; c < static_cast<ptrdiff_t>(C); ++c) {
    T* s = scale.data() + c * HW;
    const ptrdiff_t lo = std::max<ptrdiff_t>(0, c - p.radius);
    const ptrdiff_t hi = std::min<ptrdiff_t>(static_cast<ptrdiff_t>(C) - 1, c + p.radius);
    for (ptrdiff_t cc = lo; cc <= hi; ++cc) {
      const T* src = a + cc * HW;
      for (size_t i = 0; i < HW; ++i) s[i] += src[i] * src[i];
    }
    for (size_t i = 0; i < HW; ++i) s[i] = k + alpha * s[i];
  }
  return scale;
}

// out[i] = s[i]^-beta; beta = 3/4 (the usual setting) avoids pow entirely.
template <typename T>
void neg_pow(const T* s, T* out, size_t n, T beta) {
  if (beta == T(0.75)) {
    for (size_t i = 0; i < n; ++i) {
      const T r = std::sqrt(s[i]);
      out[i] = T(1) / (r * std::sqrt(r));
    }
  } else {
    for (size_t i = 0; i < n; ++i) out[i] = std::pow(s[i], -beta);
  }
}

}  // namespace

template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p) {
  detail::check_lrn(input.shape(), p);
  BasicTensor<T> out = lrn_scale(input, p);
  const T beta = static_cast<T>(p.beta);
  neg_pow(out.data(), out.data(), out.size(), beta);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= input[i];
  return out;
}

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p,
                            const BasicTensor<T>& grad_out) {
  detail::check_lrn(input.shape(), p);
  require_shape(grad_out.shape(), input.shape(), "lrn_backward grad_out");
  const size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
  const BasicTensor<T> scale = lrn_scale(input, p);
  const T beta = static_cast<T>(p.beta);
  const T coeff = static_cast<T>(2.0 * p.alpha * p.beta);

  // ratio = g * a * scale^(-beta-1)
  BasicTensor<T> ratio(input.shape());
  BasicTensor<T> grad_in(input.shape());
  neg_pow(scale.data(), grad_in.data(), scale.size(), beta);
  for (size_t i = 0; i < input.size(); ++i) {
    const T sb = grad_in[i];
    ratio[i] = grad_out[i] * input[i] * sb / scale[i];
    grad_in[i] = grad_out[i] * sb;
  }

#pragma omp parallel for schedule(static)
  for (ptrdiff_t c = 0; c < static_cast<ptrdiff_t>(C); ++c) {
    T* gi = grad_in.data() + c * HW;
    const T* a = input.data() + c * HW;
    const ptrdiff_t lo = std::max<ptrdiff_t>(0, c - p.radius);
    const ptrdiff_t hi = std::min<ptrdiff_t>(static_cast<ptrdiff_t>(C) - 1, c + p.radius);
    for (size_t i = 0; i < HW; ++i) {
      T acc = 0;
      for (ptrdiff_t cc = lo; cc <= hi; ++cc) acc += ratio[cc * HW + i];
      gi[i] -= coeff * a[i] * acc;
    }
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_shape(grad_out.shape(), input.shape(), "relu_backward grad_out");
  BasicTensor<T> g = grad_out;
  for (size_t i = 0; i < g.size(); ++i) {
    if (!(input[i] > T{0})) g[i] = T{0};
  }
  return g;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias) {
  detail::check_fc(input.shape(), weight.shape(), bias.shape());
  const size_t K = weight.dim(0), D = weight.dim(1);
  BasicTensor<T> out({K});
#pragma omp parallel for schedule(static)
  for (ptrdiff_t k = 0; k < static_cast<ptrdiff_t>(K); ++k) {
    const T* row = weight.data() + k * D;
    T acc = 0;
    for (size_t d = 0; d < D; ++d) acc += row[d] * input[d];
    out[k] = acc + bias[k];
  }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out) {
  detail::check_fc_grad(input.shape(), weight.shape(), grad_out.shape());
  const size_t K = weight.dim(0), D = weight.dim(1);
  FcGrads<T> g{BasicTensor<T>({D}), BasicTensor<T>(weight.shape()), grad_out};
#pragma omp parallel for schedule(static)
  for (ptrdiff_t k = 0; k < static_cast<ptrdiff_t>(K); ++k) {
    T* row = g.weight.data() + k * D;
    for (size_t d = 0; d < D; ++d) row[d] = grad_out[k] * input[d];
  }
#pragma omp parallel for schedule(static)
  for (ptrdiff_t d = 0; d < static_cast<ptrdiff_t>(D); ++d) {
    T acc = 0;
    for (size_t k = 0; k < K; ++k) acc += weight[k * D + d] * grad_out[k];
    g.input[d] = acc;
  }
  return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax: expected rank-1 logits, got " +
                                           to_string(logits.shape()));
  BasicTensor<T> p = logits;
  const T mx = *std::max_element(p.values().begin(), p.values().end());
  T sum = 0;
  for (T& v : p.values()) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (T& v : p.values()) v /= sum;
  return p;
}

#define GAIT_INSTANTIATE_KERNELS(T)                                                            \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const BasicTensor<T>&);                               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                        const BasicTensor<T>&, bool);                          \
  template MaxPoolResult<T> maxpool2x2_forward(const BasicTensor<T>&);                         \
  template BasicTensor<T> maxpool2x2_backward(const PoolIndices&, const BasicTensor<T>&);      \
  template BasicTensor<T> lrn_forward(const BasicTensor<T>&, const LrnParams&);                \
  template BasicTensor<T> lrn_backward(const BasicTensor<T>&, const LrnParams&,                \
                                       const BasicTensor<T>&);                                 \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                 \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                     const BasicTensor<T>&);                                   \
  template FcGrads<T> fc_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                  const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);

GAIT_INSTANTIATE_KERNELS(float)
GAIT_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace gait
