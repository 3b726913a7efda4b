// Reference vs OpenMP kernels on layer shapes of the full-size network.

#include <random>

#include <benchmark/benchmark.h>

#include "gait/kernels.hpp"

namespace {

using gait::Tensor;

Tensor filled(gait::Shape shape, unsigned seed) {
  Tensor t(std::move(shape));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

struct ConvCase {
  Tensor input, weight, bias, grad_out;
};

// 0: first fCNN layer, 1: second fCNN layer, 2: mCNN
ConvCase conv_case(int which) {
  switch (which) {
    case 0:
      return {filled({2, 126, 126}, 1), filled({16, 2, 7, 7}, 2), filled({16}, 3), filled({16, 120, 120}, 4)};
    case 1:
      return {filled({16, 60, 60}, 1), filled({64, 16, 7, 7}, 2), filled({64}, 3), filled({64, 54, 54}, 4)};
    default:
      return {filled({64, 27, 27}, 1), filled({256, 64, 7, 7}, 2), filled({256}, 3), filled({256, 21, 21}, 4)};
  }
}

void BM_conv_forward_reference(benchmark::State& s) {
  const auto c = conv_case(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::reference::conv2d_forward(c.input, c.weight, c.bias));
}
void BM_conv_forward(benchmark::State& s) {
  const auto c = conv_case(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::conv2d_forward(c.input, c.weight, c.bias));
}
void BM_conv_backward_reference(benchmark::State& s) {
  const auto c = conv_case(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::reference::conv2d_backward(c.input, c.weight, c.grad_out));
}
void BM_conv_backward(benchmark::State& s) {
  const auto c = conv_case(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::conv2d_backward(c.input, c.weight, c.grad_out));
}

void BM_lrn_forward_reference(benchmark::State& s) {
  const auto x = filled({16, 60, 60}, 5);
  const gait::LrnParams p;
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::reference::lrn_forward(x, p));
}
void BM_lrn_forward(benchmark::State& s) {
  const auto x = filled({16, 60, 60}, 5);
  const gait::LrnParams p;
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::lrn_forward(x, p));
}

void BM_fc_forward_reference(benchmark::State& s) {
  const auto x = filled({112896}, 6), w = filled({2, 112896}, 7), b = filled({2}, 8);
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::reference::fc_forward(x, w, b));
}
void BM_fc_forward(benchmark::State& s) {
  const auto x = filled({112896}, 6), w = filled({2, 112896}, 7), b = filled({2}, 8);
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::fc_forward(x, w, b));
}

void BM_maxpool_reference(benchmark::State& s) {
  const auto x = filled({16, 120, 120}, 9);
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::reference::maxpool2x2_forward(x));
}
void BM_maxpool(benchmark::State& s) {
  const auto x = filled({16, 120, 120}, 9);
  for (auto _ : s) benchmark::DoNotOptimize(gait::kernels::maxpool2x2_forward(x));
}

}  // namespace

BENCHMARK(BM_conv_forward_reference)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_forward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward_reference)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_lrn_forward_reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lrn_forward)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fc_forward_reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fc_forward)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_maxpool_reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_maxpool)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
