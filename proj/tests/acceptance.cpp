// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gait/checkpoint.hpp"
#include "gait/evaluator.hpp"
#include "gait/experiment.hpp"
#include "gait/grad_check.hpp"
#include "gait/kernels.hpp"
#include "gait/rng.hpp"
#include "gait/synth.hpp"
#include "gait/trainer.hpp"

namespace fs = std::filesystem;
using namespace gait;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, std::string what) {
    if (!ok) pass = false;
    if (!ok || notes.size() < 12) notes.push_back((ok ? "" : "failed: ") + std::move(what));
  }
};

int g_failures = 0;

void report(int id, const char* title, const Verdict& v, double secs, double limit_secs) {
  const bool in_time = limit_secs <= 0 || secs < limit_secs;
  const bool ok = v.pass && in_time;
  if (!ok) ++g_failures;
  std::string detail;
  for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
  if (!in_time) detail += fmt::format("; over the {:.0f} s budget", limit_secs);
  fmt::print("{} criterion {}: {} ({:.1f} s) {}\n", ok ? "PASS" : "FAIL", id, title, secs, detail);
  std::fflush(stdout);
}

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// 1. shape contract

void criterion_shapes() {
  const auto t0 = Clock::now();
  Verdict v;
  const NetConfig cfg = NetConfig::paper();
  const auto p = init_params(cfg, 1);
  const auto& w = p.weights;
  std::mt19937_64 rng(1);
  Tensor step({2, 126, 126});
  std::bernoulli_distribution on(0.3);
  for (std::size_t i = 0; i < 126 * 126; ++i) step[i] = on(rng);

  auto c1 = kernels::relu_forward(kernels::conv2d_forward(step, w.conv1_weight, w.conv1_bias));
  v.require(c1.shape() == Shape{16, 120, 120}, "conv1 " + to_string(c1.shape()));
  auto p1 = kernels::lrn_forward(kernels::maxpool2x2_forward(c1).output, cfg.lrn);
  v.require(p1.shape() == Shape{16, 60, 60}, "pool1 " + to_string(p1.shape()));
  auto c2 = kernels::relu_forward(kernels::conv2d_forward(p1, w.conv2_weight, w.conv2_bias));
  v.require(c2.shape() == Shape{64, 54, 54}, "conv2 " + to_string(c2.shape()));
  auto p2 = kernels::lrn_forward(kernels::maxpool2x2_forward(c2).output, cfg.lrn);
  v.require(p2.shape() == Shape{64, 27, 27}, "pool2 " + to_string(p2.shape()));
  const auto feature = fcnn_forward(step, w, cfg);
  v.require(bit_equal(feature, p2), "fcnn_forward equals the layer chain");

  const std::vector<Tensor> seq{step, step};
  const auto fused = embed_sequence<float>(seq, w, cfg, PoolingMode::kMax);
  v.require(fused.maps.shape() == Shape{64, 27, 27}, "fused " + to_string(fused.maps.shape()));
  Tensor other = feature;
  for (auto& x : other.values()) x *= 0.5f;
  const auto m = kernels::conv2d_forward(Tensor(fused.maps), w.mcnn_weight, w.mcnn_bias);
  v.require(m.shape() == Shape{256, 21, 21}, "mCNN " + to_string(m.shape()));
  CompareTrace<float> trace;
  const auto logits = compare_logits(fused.maps, other, w, cfg, &trace);
  v.require(trace.activation.shape() == Shape{112896}, "flatten " + to_string(trace.activation.shape()));
  v.require(logits.shape() == Shape{2}, "fc " + to_string(logits.shape()));
  v.notes.push_back("126->120->60->54->27, mCNN 21, flatten 112896, 2 logits");
  report(1, "shape contract", v, seconds_since(t0), 1.0);
}

// ---------------------------------------------------------------------------
// 2. gradients

TensorD strict_max_input(Shape shape, std::mt19937_64& rng) {
  TensorD t = random_tensor<double>(shape, rng, -0.5, 0.5);
  std::uniform_int_distribution<int> pick(0, 3);
  for (std::size_t c = 0; c < t.dim(0); ++c)
    for (std::size_t y = 0; y < t.dim(1); y += 2)
      for (std::size_t x = 0; x < t.dim(2); x += 2) {
        const int k = pick(rng);
        t.at(c, y + k / 2, x + k % 2) += 2.0;
      }
  return t;
}

// Inputs of distinct values per position across frames, so the argmax is stable
// under a small probe.
std::vector<TensorD> distinct_frames(std::size_t T, const Shape& shape, std::mt19937_64& rng) {
  std::vector<TensorD> frames(T, TensorD(shape));
  const std::size_t n = frames[0].size();
  std::vector<double> levels(T);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(levels.begin(), levels.end(), 0.0);
    std::shuffle(levels.begin(), levels.end(), rng);
    for (std::size_t t = 0; t < T; ++t) frames[t][i] = 0.1 * levels[t] + 0.01 * std::uniform_real_distribution<double>(0, 1)(rng);
  }
  return frames;
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  Verdict v;
  constexpr double eps = 1e-5;
  std::mt19937_64 rng(2);
  double worst = 0;
  auto note = [&](const GradCheckReport& r) {
    worst = std::max(worst, r.max_relative_error);
    v.require(r.passed, fmt::format("{} rel err {:.2e} (tol {:.0e})", r.layer, r.max_relative_error, r.tolerance));
  };

  // conv2d: input, weight and bias gradients on random small configs
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t C = 1 + trial, O = 2 + trial, K = 3 + (trial % 2) * 2, H = K + 4;
    const auto x = random_tensor<double>({C, H, H}, rng);
    const auto wt = random_tensor<double>({O, C, K, K}, rng);
    const auto b = random_tensor<double>({O}, rng);
    const auto go = random_tensor<double>({O, H - K + 1, H - K + 1}, rng);
    const auto g = kernels::conv2d_backward(x, wt, go);
    note(check_gradient("conv2d input", [&](const TensorD& p) { return dot(kernels::conv2d_forward(p, wt, b), go); }, x, g.input, eps, 1e-4));
    note(check_gradient("conv2d weight", [&](const TensorD& p) { return dot(kernels::conv2d_forward(x, p, b), go); }, wt, g.weight, eps, 1e-4));
    note(check_gradient("conv2d bias", [&](const TensorD& p) { return dot(kernels::conv2d_forward(x, wt, p), go); }, b, g.bias, eps, 1e-4));
  }
  {
    const auto x = strict_max_input({3, 8, 8}, rng);
    const auto go = random_tensor<double>({3, 4, 4}, rng);
    const auto idx = kernels::maxpool2x2_forward(x).indices;
    note(check_gradient("maxpool", [&](const TensorD& p) { return dot(kernels::maxpool2x2_forward(p).output, go); }, x,
                        kernels::maxpool2x2_backward<double>(idx, go), eps, 1e-4));
  }
  for (const LrnParams lp : {LrnParams{}, LrnParams{1, 1.0, 0.5, 0.75}, LrnParams{2, 2.0, 0.3, 0.6}}) {
    const auto x = random_tensor<double>({7, 3, 3}, rng, -3, 3);
    const auto go = random_tensor<double>({7, 3, 3}, rng);
    note(check_gradient("lrn", [&](const TensorD& p) { return dot(kernels::lrn_forward(p, lp), go); }, x,
                        kernels::lrn_backward(x, lp, go), eps, 1e-4));
  }
  {
    auto x = random_tensor<double>({40}, rng);
    for (auto& e : x.values()) e += e >= 0 ? 0.1 : -0.1;  // away from the kink
    const auto go = random_tensor<double>({40}, rng);
    note(check_gradient("relu", [&](const TensorD& p) { return dot(kernels::relu_forward(p), go); }, x,
                        kernels::relu_backward(x, go), eps, 1e-6));
  }
  {
    const auto x = random_tensor<double>({9}, rng);
    const auto wt = random_tensor<double>({4, 9}, rng);
    const auto b = random_tensor<double>({4}, rng);
    const auto go = random_tensor<double>({4}, rng);
    const auto g = kernels::fc_backward(x, wt, go);
    note(check_gradient("fc input", [&](const TensorD& p) { return dot(kernels::fc_forward(p, wt, b), go); }, x, g.input, eps, 1e-6));
    note(check_gradient("fc weight", [&](const TensorD& p) { return dot(kernels::fc_forward(x, p, b), go); }, wt, g.weight, eps, 1e-6));
    note(check_gradient("fc bias", [&](const TensorD& p) { return dot(kernels::fc_forward(x, wt, p), go); }, b, g.bias, eps, 1e-6));
  }
  for (auto mode : {PoolingMode::kMax, PoolingMode::kMean}) {
    const std::size_t T = 5;
    const Shape shape{2, 3, 3};
    const auto frames = distinct_frames(T, shape, rng);
    const auto go = random_tensor<double>(shape, rng);
    const auto grads = pool_backward<double>(frames, go, mode);
    for (std::size_t t = 0; t < T; ++t) {
      note(check_gradient(mode == PoolingMode::kMax ? "pool_backward_max" : "pool_backward_mean",
                          [&](const TensorD& p) {
                            auto f = frames;
                            f[t] = p;
                            return dot(pool_frames<double>(f, mode).maps, go);
                          },
                          frames[t], grads[t], eps, 1e-4));
    }
  }
  {
    std::uniform_real_distribution<double> u(-6, 6);
    double loss_worst = 0;
    for (int i = 0; i < 200; ++i) {
      const double a = u(rng), b = u(rng);
      const auto label = i % 2 ? PairLabel::kSame : PairLabel::kDifferent;
      const auto g = pair_loss_grad(a, b, label);
      const auto nd = (pair_loss(a + eps, b, label) - pair_loss(a - eps, b, label)) / (2 * eps);
      const auto ns = (pair_loss(a, b + eps, label) - pair_loss(a, b - eps, label)) / (2 * eps);
      loss_worst = std::max({loss_worst, relative_error(g[0], nd), relative_error(g[1], ns)});
    }
    worst = std::max(worst, loss_worst);
    v.require(loss_worst < 1e-4, fmt::format("softmax cross-entropy p - t rel err {:.2e}", loss_worst));
  }
  {
    const auto cfg = NetConfig::tiny();
    const auto params = init_params(cfg, 40).weights.cast<double>();
    std::vector<TensorD> a, b;
    std::bernoulli_distribution on(0.35);
    for (std::size_t t = 0; t < 7; ++t) {
      TensorD s(cfg.step_shape());
      for (auto& x : s.values()) x = on(rng) ? 1.0 : 0.0;
      (t < 4 ? a : b).push_back(s);
    }
    double net_worst = 0;
    for (auto mode : {PoolingMode::kMax, PoolingMode::kMean}) {
      for (auto label : {PairLabel::kSame, PairLabel::kDifferent}) {
        auto grads = ParamSet<double>::zeros(cfg);
        pair_forward_backward<double>(a, b, label, params, cfg, mode, grads);
        const auto gts = grads.tensors();
        for (std::size_t i = 0; i < ParamSet<double>::kCount; ++i) {
          const auto r = check_gradient(std::string("network ") + std::string(ParamSet<double>::kNames[i]),
                                        [&](const TensorD& x) {
                                          auto probe = params;
                                          *probe.tensors()[i] = x;
                                          auto scratch = ParamSet<double>::zeros(cfg);
                                          return pair_forward_backward<double>(a, b, label, probe, cfg, mode, scratch);
                                        },
                                        *params.tensors()[i], *gts[i], eps, 1e-3);
          net_worst = std::max(net_worst, r.max_relative_error);
          if (!r.passed) v.require(false, fmt::format("{} rel err {:.2e}", r.layer, r.max_relative_error));
        }
      }
    }
    v.notes.push_back(fmt::format("full tiny network worst rel err {:.2e}", net_worst));
  }
  v.notes.insert(v.notes.begin(), fmt::format("worst layer rel err {:.2e}", worst));
  v.notes.resize(std::min<std::size_t>(v.notes.size(), 2));
  report(2, "gradient suite", v, seconds_since(t0), 120.0);
}

// ---------------------------------------------------------------------------
// 3. pooling properties

void criterion_pooling() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 12), dim(1, 4);
  std::size_t failures = 0;
  auto fail = [&](bool ok, const char* what) {
    if (!ok && failures++ < 5) v.notes.push_back(std::string("failed: ") + what);
    if (!ok) v.pass = false;
  };
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(rng);
    const Shape shape{dim(rng), dim(rng), dim(rng)};
    std::vector<TensorD> frames;
    for (std::size_t t = 0; t < T; ++t) frames.push_back(random_tensor<double>(shape, rng));
    const auto mx = pool_max<double>(frames).maps;
    const auto mn = pool_mean<double>(frames).maps;

    auto perm = frames;
    std::shuffle(perm.begin(), perm.end(), rng);
    fail(pool_max<double>(perm).maps == mx, "max permutation invariance");
    double mean_gap = 0;
    const auto mp = pool_mean<double>(perm).maps;
    for (std::size_t k = 0; k < mn.size(); ++k) mean_gap = std::max(mean_gap, std::abs(mp[k] - mn[k]));
    fail(mean_gap < 1e-6, "mean permutation invariance");

    const std::vector<TensorD> one{frames[0]};
    fail(pool_max<double>(one).maps == frames[0] && pool_mean<double>(one).maps == frames[0], "T=1 identity");

    auto doubled = frames;
    doubled.insert(doubled.end(), frames.begin(), frames.end());
    fail(pool_max<double>(doubled).maps == mx, "idempotence under duplication (max)");
    const auto md = pool_mean<double>(doubled).maps;
    double dup_gap = 0;
    for (std::size_t k = 0; k < mn.size(); ++k) dup_gap = std::max(dup_gap, std::abs(md[k] - mn[k]));
    fail(dup_gap < 1e-12, "idempotence under duplication (mean)");

    bool ge = true;
    for (std::size_t k = 0; k < mx.size(); ++k) ge = ge && mx[k] >= mn[k] - 1e-12;
    fail(ge, "max >= mean");

    if (T > 1) {
      const std::vector<TensorD> prefix(frames.begin(), frames.end() - 1);
      const auto mpre = pool_max<double>(prefix).maps;
      bool mono = true;
      for (std::size_t k = 0; k < mx.size(); ++k) mono = mono && mx[k] >= mpre[k];
      fail(mono, "prefix monotonicity of max");
    }

    const auto go = random_tensor<double>(shape, rng);
    for (auto mode : {PoolingMode::kMax, PoolingMode::kMean}) {
      const auto g = pool_backward<double>(frames, go, mode);
      double gap = 0;
      for (std::size_t k = 0; k < go.size(); ++k) {
        double s = 0;
        for (const auto& gt : g) s += gt[k];
        gap = std::max(gap, std::abs(s - go[k]));
      }
      fail(gap < 1e-9, "gradient conservation");
    }
  }
  if (v.pass) v.notes.push_back("1000 randomized cases per property, zero failures");
  report(3, "pooling properties", v, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------------------
// 4. metric oracles

double rank_oracle(const ScoreMatrix& m, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::size_t better = 0;
    const std::size_t g = m.genuine_column[i];
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m.at(i, j) > m.at(i, g) || (m.at(i, j) == m.at(i, g) && j < g)) ++better;
    hits += better < k;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(m.rows());
}

double eer_oracle(const std::vector<double>& gen, const std::vector<double>& imp) {
  std::vector<double> th{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  th.insert(th.end(), gen.begin(), gen.end());
  th.insert(th.end(), imp.begin(), imp.end());
  std::sort(th.begin(), th.end());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  auto far = [&](double t) { return std::count_if(imp.begin(), imp.end(), [t](double s) { return s >= t; }) / double(imp.size()); };
  auto frr = [&](double t) { return std::count_if(gen.begin(), gen.end(), [t](double s) { return s < t; }) / double(gen.size()); };
  for (std::size_t i = 1; i < th.size(); ++i) {
    const double a0 = far(th[i - 1]) - frr(th[i - 1]);
    const double a1 = far(th[i]) - frr(th[i]);
    if (a0 > 0 && a1 <= 0) {
      const double u = a0 / (a0 - a1);
      return 100.0 * (far(th[i - 1]) + u * (far(th[i]) - far(th[i - 1])));
    }
  }
  return 100.0 * far(th.front());
}

void criterion_metrics() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> side(1, 20);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::uniform_real_distribution<double> u(0, 1);
  double worst_rank = 0, worst_eer = 0, worst_invariance = 0;
  bool monotone = true;
  for (int trial = 0; trial < 500; ++trial) {
    ScoreMatrix m;
    const std::size_t rows = side(rng), cols = std::max(rows, side(rng));
    for (std::size_t i = 0; i < rows; ++i) m.probe_subjects.push_back(std::to_string(i));
    for (std::size_t j = 0; j < cols; ++j) m.gallery_subjects.push_back(std::to_string(j));
    for (std::size_t k = 0; k < rows * cols; ++k) m.scores.push_back(trial % 2 ? u(rng) : coarse(rng) / 6.0);
    for (std::size_t i = 0; i < rows; ++i) m.genuine_column.push_back(std::uniform_int_distribution<std::size_t>(0, cols - 1)(rng));
    double prev = 0;
    for (std::size_t k = 1; k <= cols; ++k) {
      const double r = rank_k(m, k);
      worst_rank = std::max(worst_rank, std::abs(r - rank_oracle(m, k)));
      monotone = monotone && r >= prev;
      prev = r;
    }
    monotone = monotone && prev == 100.0;

    const std::size_t ng = 1 + std::uniform_int_distribution<std::size_t>(0, 199)(rng);
    const std::size_t ni = 1 + std::uniform_int_distribution<std::size_t>(0, 199)(rng);
    std::normal_distribution<double> gd(trial % 7 * 0.25, 1.0), id(0, 1);
    std::vector<double> gen(ng), imp(ni);
    for (auto& s : gen) s = trial % 3 == 0 ? coarse(rng) / 6.0 + 0.1 : gd(rng);
    for (auto& s : imp) s = trial % 3 == 0 ? coarse(rng) / 6.0 : id(rng);
    const double e = eer(gen, imp);
    worst_eer = std::max(worst_eer, std::abs(e - eer_oracle(gen, imp)));
    auto tg = gen, ti = imp;
    for (auto& s : tg) s = std::atan(2 * s) + 5;
    for (auto& s : ti) s = std::atan(2 * s) + 5;
    worst_invariance = std::max(worst_invariance, std::abs(eer(tg, ti) - e));
  }
  v.require(worst_rank <= 1e-9, fmt::format("rank_k vs oracle max diff {:.1e}", worst_rank));
  v.require(worst_eer <= 1e-9, fmt::format("eer vs oracle max diff {:.1e}", worst_eer));
  v.require(worst_invariance <= 1e-9, fmt::format("eer under monotone transform max diff {:.1e}", worst_invariance));
  v.require(monotone, "Rank-k non-decreasing in k and 100 at k = gallery size");
  report(4, "metric oracles (500 matrices, 500 score sets)", v, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------------------
// 5. symmetry and cache equivalence

void criterion_symmetry() {
  const auto t0 = Clock::now();
  Verdict v;
  SynthOptions o;
  o.size = 14;
  o.frames = 6;
  o.seed = 5;
  const Dataset ds = synthesize_dataset(random_identities(6, 5), o);
  const StepBank bank(ds);
  const auto params = init_params(NetConfig::tiny(), 5);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, ds.sequences.size() - 1);
  std::size_t asym = 0;
  for (int i = 0; i < 100; ++i) {
    const auto a = pick(rng), b = pick(rng);
    const auto mode = i % 2 ? PoolingMode::kMean : PoolingMode::kMax;
    const auto ab = forward_pair<float>(bank.steps(a), bank.steps(b), params.weights, params.config, mode);
    const auto ba = forward_pair<float>(bank.steps(b), bank.steps(a), params.weights, params.config, mode);
    asym += !(ab.p_same == ba.p_same && ab.p_diff == ba.p_diff);
  }
  v.require(asym == 0, fmt::format("forward_pair symmetric on 100 random pairs ({} mismatches)", asym));

  const auto cache = build_cache(ds, params, PoolingMode::kMax);
  const auto report_cached = cross_view_report(cache, params);
  std::size_t mismatches = 0;
  for (std::size_t pi = 0; pi < report_cached.views.size(); ++pi) {
    for (std::size_t gi = 0; gi < report_cached.views.size(); ++gi) {
      const int pv = report_cached.views[pi], gv = report_cached.views[gi];
      ScoreMatrix direct;
      direct.probe_view = pv;
      direct.gallery_view = gv;
      direct.probe_subjects = ds.subjects();
      direct.gallery_subjects = ds.subjects();
      for (std::size_t i = 0; i < direct.probe_subjects.size(); ++i) {
        const auto a = *ds.find(direct.probe_subjects[i], Role::kProbe, pv);
        for (std::size_t j = 0; j < direct.gallery_subjects.size(); ++j) {
          const auto b = *ds.find(direct.gallery_subjects[j], Role::kGallery, gv);
          direct.scores.push_back(
              forward_pair<float>(bank.steps(a), bank.steps(b), params.weights, params.config, PoolingMode::kMax).p_same);
        }
        direct.genuine_column.push_back(i);
      }
      const auto via_cache = score_matrix(cache, pv, gv, params);
      mismatches += via_cache.scores != direct.scores;
      mismatches += report_cached.rank1.at(pi, gi) != rank_k(direct, 1);
      mismatches += report_cached.rank2.at(pi, gi) != rank_k(direct, 2);
      mismatches += report_cached.rank5.at(pi, gi) != rank_k(direct, 5);
      const auto gs = direct.genuine_scores();
      const auto is = direct.impostor_scores();
      mismatches += report_cached.eer.at(pi, gi) != eer(gs, is);
    }
  }
  v.require(mismatches == 0, fmt::format("cache vs direct: every score, Rank-1/2/5 and EER cell bit-exact ({} mismatches)", mismatches));
  report(5, "symmetry and cache equivalence", v, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------------------
// 6, 7, 9. desk-scale experiment

struct DeskRun {
  DeskExperiment exp;
  Dataset dataset;
  DeskOutcome outcome;
};

DeskRun run_desk(PoolingMode mode, const fs::path& out_dir) {
  DeskRun r;
  r.exp.train.pooling = mode;
  r.dataset = desk_dataset(r.exp);
  std::printf("  desk-scale %s run: %zu sequences, input %zu, %zu iterations\n", std::string(to_string(mode)).c_str(),
              r.dataset.sequences.size(), r.exp.net.input_size, r.exp.train.max_iterations);
  std::fflush(stdout);
  r.outcome = run_desk_experiment(r.exp, r.dataset, [](std::uint64_t it, double loss) {
    if (it % 250 == 0) {
      std::printf("    iteration %llu loss %.4f\n", static_cast<unsigned long long>(it), loss);
      std::fflush(stdout);
    }
  });
  const fs::path dir = out_dir / std::string(to_string(mode));
  fs::create_directories(dir);
  save_checkpoint(r.outcome.training.best, dir / "best.ckpt");
  write_train_log(r.outcome.training.log, dir);
  write_report_csv(r.outcome.test_report, dir);
  return r;
}

void criterion_desk(const DeskRun& r) {
  Verdict v;
  const auto& o = r.outcome;
  const double final_val = o.training.log.validations.back().precision;
  v.require(std::abs(o.untrained_precision - 0.5) <= 0.1, fmt::format("untrained accuracy {:.3f}", o.untrained_precision));
  v.require(final_val > 0.85, fmt::format("final validation accuracy {:.3f} (best {:.3f})", final_val, o.training.best_precision));
  v.require(o.test_report.rank1.diagonal_mean() > 80.0, fmt::format("same-view Rank-1 {:.1f}%", o.test_report.rank1.diagonal_mean()));
  v.require(o.test_report.eer.mean() < 15.0, fmt::format("mean EER {:.2f}%", o.test_report.eer.mean()));
  v.require(r.exp.train.max_iterations <= 2000 && r.exp.train.batch_size == 16 && r.exp.train.lr == 0.001 &&
                r.exp.train.momentum == 0.0,
            "batch 16, lr 0.001, momentum 0, <= 2000 iterations");
  report(6, "desk-scale end-to-end", v, o.train_seconds, 1800.0);
}

void criterion_length(const DeskRun& r) {
  const auto t0 = Clock::now();
  Verdict v;
  const auto split = desk_split(r.exp, r.dataset);
  const Dataset test = r.dataset.subset(split.test);
  Dataset galleries;
  for (const auto& s : test.sequences)
    if (s.role == Role::kGallery) galleries.sequences.push_back(s);
  const auto& best = r.outcome.training.best;
  const auto gallery_cache = build_cache(galleries, best, PoolingMode::kMax);
  const std::vector<std::size_t> lengths{1, r.exp.frames - 1};
  const auto rows = length_sweep(test, best, PoolingMode::kMax, lengths, gallery_cache);
  v.require(rows[1].mean_rank1 >= rows[0].mean_rank1,
            fmt::format("mean Rank-1 full length {:.2f}% vs length 1 {:.2f}%", rows[1].mean_rank1, rows[0].mean_rank1));
  report(7, "sequence-length trend", v, seconds_since(t0), 0);
}

void criterion_pooling_comparison(const DeskRun& max_run, const fs::path& out_dir) {
  const auto t0 = Clock::now();
  Verdict v;
  const auto mean_run = run_desk(PoolingMode::kMean, out_dir);
  const std::vector<PoolingComparisonRow> rows{summarize(PoolingMode::kMax, max_run.outcome),
                                               summarize(PoolingMode::kMean, mean_run.outcome)};
  const fs::path csv = out_dir / "pooling_comparison.csv";
  write_file_bytes(csv, pooling_comparison_csv(rows));
  v.require(fs::exists(csv), "wrote " + csv.string());
  v.notes.push_back(fmt::format("observed mean Rank-1 max {:.2f}% vs mean {:.2f}%, EER max {:.2f}% vs mean {:.2f}%",
                                rows[0].rank1_mean, rows[1].rank1_mean, rows[0].eer_mean, rows[1].eer_mean));
  report(9, "max-vs-mean comparison harness", v, seconds_since(t0), 0);
}

// ---------------------------------------------------------------------------
// 8. determinism through the command-line tool

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GAITNET_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_determinism(const fs::path& out_dir) {
  const auto t0 = Clock::now();
  Verdict v;
  const fs::path root = out_dir / "determinism";
  fs::remove_all(root);
  const std::string data = (root / "data").string();
  v.require(run_cli("synth --out " + data + " --identities 6 --frames 6 --size 22 --seed 8") == 0, "synth");
  for (const char* run : {"a", "b", "c"}) {
    const std::string dir = (root / run).string();
    const std::string threads = std::string(run) == "c" ? " --threads 2" : "";
    v.require(run_cli("train --data " + data + " --out " + dir +
                      " --input-size 22 --conv1 3x3 --conv2 4x3 --mcnn 8x1 --batch 4 --max-iterations 12"
                      " --validate-every 4 --val-pairs 20 --lr 0.05 --seed 8" + threads) == 0,
              std::string("train ") + run);
    v.require(run_cli("extract --data " + data + " --checkpoint " + dir + "/best.ckpt --out " + dir + "/features.cache" + threads) == 0,
              std::string("extract ") + run);
    v.require(run_cli("eval --cache " + dir + "/features.cache --checkpoint " + dir + "/best.ckpt --out " + dir + "/report" + threads) == 0,
              std::string("eval ") + run);
  }
  std::size_t compared = 0, differing = 0;
  for (const char* name : {"best.ckpt", "last.ckpt", "features.cache", "loss.csv", "val_precision.csv",
                           "report/rank1.csv", "report/rank2.csv", "report/rank5.csv", "report/eer.csv"}) {
    const auto a = read_file_bytes(root / "a" / name);
    for (const char* other : {"b", "c"}) {
      ++compared;
      differing += read_file_bytes(root / other / name) != a;
    }
  }
  v.require(differing == 0, fmt::format("{} file pairs compared across repeated runs (1 and 2 threads), {} differ", compared, differing));
  report(8, "determinism", v, seconds_since(t0), 0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-9"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "Directory for run artifacts")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const fs::path out_dir = fs::absolute(out);
  fs::create_directories(out_dir);
  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  if (want(1)) criterion_shapes();
  if (want(2)) criterion_gradients();
  if (want(3)) criterion_pooling();
  if (want(4)) criterion_metrics();
  if (want(5)) criterion_symmetry();
  if (want(8)) criterion_determinism(out_dir);
  if (want(6) || want(7) || want(9)) {
    const auto max_run = run_desk(PoolingMode::kMax, out_dir);
    if (want(6)) criterion_desk(max_run);
    if (want(7)) criterion_length(max_run);
    if (want(9)) criterion_pooling_comparison(max_run, out_dir);
  }
  fmt::print("{} criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
