#include "gait/gait_net.hpp"

#include <cmath>
#include <random>
#include <string>

#include "gait/error.hpp"

namespace gait {

NetConfig NetConfig::paper() { return NetConfig{}; }

NetConfig NetConfig::desk() {
  NetConfig c;
  c.input_size = 126;
  c.conv1 = {2, 3};
  c.conv2 = {4, 3};
  c.mcnn = {256, 1};
  return c;
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.input_size = 14;
  c.conv1 = {2, 3};
  c.conv2 = {2, 3};
  c.mcnn = {2, 1};
  return c;
}

namespace {
std::size_t valid_out(std::size_t in, std::size_t k, const char* layer) {
  if (k == 0 || in < k) {
    throw ShapeError(std::string(layer) + ": kernel " + std::to_string(k) +
                     " does not fit input of size " + std::to_string(in));
  }
  return in - k + 1;
}
std::size_t halve(std::size_t in, const char* layer) {
  if (in % 2 != 0) {
    throw ShapeError(std::string(layer) + ": 2x2 pooling needs an even size, got " +
                     std::to_string(in));
  }
  return in / 2;
}
}  // namespace

std::size_t NetConfig::conv1_size() const { return valid_out(input_size, conv1.kernel, "conv1"); }
std::size_t NetConfig::pool1_size() const { return halve(conv1_size(), "pool1"); }
std::size_t NetConfig::conv2_size() const { return valid_out(pool1_size(), conv2.kernel, "conv2"); }
std::size_t NetConfig::feature_size() const { return halve(conv2_size(), "pool2"); }
std::size_t NetConfig::mcnn_size() const { return valid_out(feature_size(), mcnn.kernel, "mcnn"); }
std::size_t NetConfig::flatten_size() const {
  return mcnn.out_channels * mcnn_size() * mcnn_size();
}

Shape NetConfig::step_shape() const { return {kInputChannels, input_size, input_size}; }
Shape NetConfig::feature_shape() const {
  return {conv2.out_channels, feature_size(), feature_size()};
}

void NetConfig::validate() const {
  if (conv1.out_channels == 0 || conv2.out_channels == 0 || mcnn.out_channels == 0) {
    throw ShapeError("network layers need at least one output channel");
  }
  lrn.validate();
  (void)flatten_size();
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const NetConfig& c) {
  c.validate();
  ParamSet<T> p;
  p.conv1_weight = BasicTensor<T>({c.conv1.out_channels, kInputChannels, c.conv1.kernel, c.conv1.kernel});
  p.conv1_bias = BasicTensor<T>({c.conv1.out_channels});
  p.conv2_weight = BasicTensor<T>(
      {c.conv2.out_channels, c.conv1.out_channels, c.conv2.kernel, c.conv2.kernel});
  p.conv2_bias = BasicTensor<T>({c.conv2.out_channels});
  p.mcnn_weight =
      BasicTensor<T>({c.mcnn.out_channels, c.conv2.out_channels, c.mcnn.kernel, c.mcnn.kernel});
  p.mcnn_bias = BasicTensor<T>({c.mcnn.out_channels});
  p.fc_weight = BasicTensor<T>({2, c.flatten_size()});
  p.fc_bias = BasicTensor<T>({2});
  return p;
}

template <typename T>
void ParamSet<T>::add(const ParamSet& other) {
  auto dst = tensors();
  auto src = other.tensors();
  for (std::size_t i = 0; i < kCount; ++i) {
    require_shape(src[i]->shape(), dst[i]->shape(), kNames[i]);
    T* d = dst[i]->data();
    const T* s = src[i]->data();
    for (std::size_t j = 0; j < dst[i]->size(); ++j) d[j] += s[j];
  }
}

template <typename T>
void ParamSet<T>::scale(T factor) {
  for (auto* t : tensors()) {
    for (T& v : t->values()) v *= factor;
  }
}

template <typename T>
bool ParamSet<T>::all_finite() const {
  for (const auto* t : tensors()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

template struct ParamSet<float>;
template struct ParamSet<double>;

ModelParams init_params(const NetConfig& config, std::uint64_t seed) {
  ModelParams params{config, ParamSet<float>::zeros(config), ParamSet<float>::zeros(config), 0};
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x696e6974u /* "init" */};
  std::mt19937_64 rng(seq);
  auto fill = [&rng](Tensor& w, std::size_t fan_in, std::size_t fan_out) {
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : w.values()) v = dist(rng);
  };
  const auto conv_fill = [&fill](Tensor& w) {
    const std::size_t area = w.dim(2) * w.dim(3);
    fill(w, w.dim(1) * area, w.dim(0) * area);
  };
  conv_fill(params.weights.conv1_weight);
  conv_fill(params.weights.conv2_weight);
  conv_fill(params.weights.mcnn_weight);
  fill(params.weights.fc_weight, params.weights.fc_weight.dim(1), params.weights.fc_weight.dim(0));
  return params;
}

template <typename T>
void sgd_step(BasicModelParams<T>& params, const ParamSet<T>& grads, double lr, double momentum) {
  if (!(lr >= 0.0) || !(momentum >= 0.0)) {
    throw std::invalid_argument("sgd_step: lr and momentum must be non-negative");
  }
  auto w = params.weights.tensors();
  auto v = params.velocity.tensors();
  auto g = grads.tensors();
  for (std::size_t i = 0; i < ParamSet<T>::kCount; ++i) {
    require_shape(g[i]->shape(), w[i]->shape(), ParamSet<T>::kNames[i]);
    if (!g[i]->all_finite()) {
      throw NumericError("sgd_step: non-finite gradient in " +
                         std::string(ParamSet<T>::kNames[i]) + "; step rejected");
    }
  }
  const T lr_t = static_cast<T>(lr);
  const T mu = static_cast<T>(momentum);
  for (std::size_t i = 0; i < ParamSet<T>::kCount; ++i) {
    T* wd = w[i]->data();
    T* vd = v[i]->data();
    const T* gd = g[i]->data();
    for (std::size_t j = 0; j < w[i]->size(); ++j) {
      vd[j] = mu * vd[j] - lr_t * gd[j];
      wd[j] += vd[j];
    }
  }
}

template void sgd_step(BasicModelParams<float>&, const ParamSet<float>&, double, double);
template void sgd_step(BasicModelParams<double>&, const ParamSet<double>&, double, double);

SimilarityScore score_from_logits(double logit_diff, double logit_same) {
  const double m = std::max(logit_diff, logit_same);
  const double e_diff = std::exp(logit_diff - m);
  const double e_same = std::exp(logit_same - m);
  const double sum = e_diff + e_same;
  return {e_same / sum, e_diff / sum};
}

namespace {

template <typename T>
struct FcnnTrace {
  BasicTensor<T> relu1;
  PoolIndices pool1;
  BasicTensor<T> pooled1;
  BasicTensor<T> lrn1;
  BasicTensor<T> relu2;
  PoolIndices pool2;
  BasicTensor<T> pooled2;
};

template <typename T>
BasicTensor<T> fcnn_run(const BasicTensor<T>& step, const ParamSet<T>& p, const NetConfig& c,
                        FcnnTrace<T>* trace) {
  require_shape(step.shape(), c.step_shape(), "fcnn input");
  auto relu1 = kernels::relu_forward(kernels::conv2d_forward(step, p.conv1_weight, p.conv1_bias));
  auto pool1 = kernels::maxpool2x2_forward(relu1);
  auto lrn1 = kernels::lrn_forward(pool1.output, c.lrn);
  auto relu2 = kernels::relu_forward(kernels::conv2d_forward(lrn1, p.conv2_weight, p.conv2_bias));
  auto pool2 = kernels::maxpool2x2_forward(relu2);
  auto feature = kernels::lrn_forward(pool2.output, c.lrn);
  if (trace) {
    *trace = FcnnTrace<T>{std::move(relu1), std::move(pool1.indices), std::move(pool1.output),
                          std::move(lrn1), std::move(relu2), std::move(pool2.indices),
                          std::move(pool2.output)};
  }
  return feature;
}

template <typename T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
BasicTensor<T> fcnn_forward(const BasicTensor<T>& step, const ParamSet<T>& params,
                            const NetConfig& config) {
  return fcnn_run<T>(step, params, config, nullptr);
}

template <typename T>
void fcnn_backward(const BasicTensor<T>& step, const ParamSet<T>& params, const NetConfig& config,
                   const BasicTensor<T>& grad_feature, ParamSet<T>& grads) {
  require_shape(grad_feature.shape(), config.feature_shape(), "fcnn_backward grad_feature");
  FcnnTrace<T> tr;
  fcnn_run<T>(step, params, config, &tr);

  auto g = kernels::lrn_backward(tr.pooled2, config.lrn, grad_feature);
  g = kernels::maxpool2x2_backward(tr.pool2, g);
  g = kernels::relu_backward(tr.relu2, g);
  auto c2 = kernels::conv2d_backward(tr.lrn1, params.conv2_weight, g);
  accumulate(grads.conv2_weight, c2.weight);
  accumulate(grads.conv2_bias, c2.bias);

  g = kernels::lrn_backward(tr.pooled1, config.lrn, c2.input);
  g = kernels::maxpool2x2_backward(tr.pool1, g);
  g = kernels::relu_backward(tr.relu1, g);
  auto c1 = kernels::conv2d_backward(step, params.conv1_weight, g, false);
  accumulate(grads.conv1_weight, c1.weight);
  accumulate(grads.conv1_bias, c1.bias);
}

template <typename T>
FusedFeature<T> embed_sequence(std::span<const BasicTensor<T>> steps, const ParamSet<T>& params,
                               const NetConfig& config, PoolingMode mode,
                               std::vector<BasicTensor<T>>* frame_features) {
  if (steps.empty()) throw ShapeError("embed_sequence: sequence has no usable steps");
  std::vector<BasicTensor<T>> features(steps.size());
  const auto n = static_cast<std::ptrdiff_t>(steps.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t) features[t] = fcnn_forward(steps[t], params, config);
  auto fused = pool_frames<T>(features, mode);
  if (frame_features) *frame_features = std::move(features);
  return fused;
}

template <typename T>
BasicTensor<T> compare_logits(const BasicTensor<T>& a, const BasicTensor<T>& b,
                              const ParamSet<T>& params, const NetConfig& config,
                              CompareTrace<T>* trace) {
  require_shape(a.shape(), config.feature_shape(), "compare first feature");
  require_shape(b.shape(), config.feature_shape(), "compare second feature");
  BasicTensor<T> diff(a.shape());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(a[i] - b[i]);
  auto act = kernels::relu_forward(
      kernels::conv2d_forward(diff, params.mcnn_weight, params.mcnn_bias));
  act.reshape({act.size()});
  auto logits = kernels::fc_forward(act, params.fc_weight, params.fc_bias);
  if (trace) *trace = CompareTrace<T>{std::move(diff), std::move(act)};
  return logits;
}

template <typename T>
SimilarityScore compare(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const ParamSet<T>& params, const NetConfig& config) {
  const auto logits = compare_logits(a, b, params, config);
  return score_from_logits(static_cast<double>(logits[kDiffIndex]),
                           static_cast<double>(logits[kSameIndex]));
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> compare_backward(const BasicTensor<T>& a,
                                                           const BasicTensor<T>& b,
                                                           const ParamSet<T>& params,
                                                           const NetConfig& config,
                                                           const CompareTrace<T>& trace,
                                                           const BasicTensor<T>& grad_logits,
                                                           ParamSet<T>& grads) {
  auto fc = kernels::fc_backward(trace.activation, params.fc_weight, grad_logits);
  accumulate(grads.fc_weight, fc.weight);
  accumulate(grads.fc_bias, fc.bias);

  const std::size_t m = config.mcnn_size();
  BasicTensor<T> act = trace.activation;
  act.reshape({config.mcnn.out_channels, m, m});
  fc.input.reshape(act.shape());
  auto g = kernels::relu_backward(act, fc.input);
  auto conv = kernels::conv2d_backward(trace.diff, params.mcnn_weight, g);
  accumulate(grads.mcnn_weight, conv.weight);
  accumulate(grads.mcnn_bias, conv.bias);

  // d|a-b|/da = sign(a-b), zero where a == b.
  BasicTensor<T> ga(a.shape()), gb(b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T s = a[i] > b[i] ? T{1} : (a[i] < b[i] ? T{-1} : T{0});
    ga[i] = s * conv.input[i];
    gb[i] = -ga[i];
  }
  return {std::move(ga), std::move(gb)};
}

template <typename T>
SimilarityScore forward_pair(std::span<const BasicTensor<T>> steps_a,
                             std::span<const BasicTensor<T>> steps_b, const ParamSet<T>& params,
                             const NetConfig& config, PoolingMode mode) {
  const auto a = embed_sequence(steps_a, params, config, mode);
  const auto b = embed_sequence(steps_b, params, config, mode);
  return compare(a.maps, b.maps, params, config);
}

#define GAIT_INSTANTIATE_NET(T)                                                                \
  template BasicTensor<T> fcnn_forward(const BasicTensor<T>&, const ParamSet<T>&,             \
                                       const NetConfig&);                                      \
  template void fcnn_backward(const BasicTensor<T>&, const ParamSet<T>&, const NetConfig&,    \
                              const BasicTensor<T>&, ParamSet<T>&);                            \
  template FusedFeature<T> embed_sequence(std::span<const BasicTensor<T>>, const ParamSet<T>&, \
                                          const NetConfig&, PoolingMode,                       \
                                          std::vector<BasicTensor<T>>*);                       \
  template BasicTensor<T> compare_logits(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const ParamSet<T>&, const NetConfig&,                 \
                                         CompareTrace<T>*);                                    \
  template SimilarityScore compare(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                   const ParamSet<T>&, const NetConfig&);                      \
  template std::pair<BasicTensor<T>, BasicTensor<T>> compare_backward(                         \
      const BasicTensor<T>&, const BasicTensor<T>&, const ParamSet<T>&, const NetConfig&,      \
      const CompareTrace<T>&, const BasicTensor<T>&, ParamSet<T>&);                            \
  template SimilarityScore forward_pair(std::span<const BasicTensor<T>>,                       \
                                        std::span<const BasicTensor<T>>, const ParamSet<T>&,   \
                                        const NetConfig&, PoolingMode);

GAIT_INSTANTIATE_NET(float)
GAIT_INSTANTIATE_NET(double)

}  // namespace gait
