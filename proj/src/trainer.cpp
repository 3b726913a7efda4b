#include "gait/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "gait/checkpoint.hpp"
#include "gait/error.hpp"
#include "gait/rng.hpp"

namespace gait {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(momentum >= 0.0)) throw std::invalid_argument("momentum must be non-negative");
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw std::invalid_argument("batch size must be even and positive");
  }
  if (validate_every == 0) throw std::invalid_argument("validate_every must be >= 1");
  if (val_pairs == 0 || val_pairs % 2 != 0) {
    throw std::invalid_argument("val_pairs must be even and positive");
  }
}

double pair_loss(double logit_diff, double logit_same, PairLabel label) {
  const double m = std::max(logit_diff, logit_same);
  const double lse = m + std::log(std::exp(logit_diff - m) + std::exp(logit_same - m));
  return lse - (label == PairLabel::kSame ? logit_same : logit_diff);
}

double pair_loss(const SimilarityScore& score, PairLabel label) {
  const double t_same = label == PairLabel::kSame ? 1.0 : 0.0;
  const double t_diff = 1.0 - t_same;
  double loss = 0.0;
  if (t_diff > 0) loss -= t_diff * std::log(score.p_diff);
  if (t_same > 0) loss -= t_same * std::log(score.p_same);
  return loss;
}

std::array<double, 2> pair_loss_grad(double logit_diff, double logit_same, PairLabel label) {
  const SimilarityScore p = score_from_logits(logit_diff, logit_same);
  const double t_same = label == PairLabel::kSame ? 1.0 : 0.0;
  return {p.p_diff - (1.0 - t_same), p.p_same - t_same};
}

StepBank::StepBank(const Dataset& dataset) {
  steps_.reserve(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) steps_.push_back(make_step_inputs(seq));
}

namespace {

template <typename T>
void backprop_sequence(std::span<const BasicTensor<T>> steps,
                       const std::vector<BasicTensor<T>>& frame_features,
                       const BasicTensor<T>& grad_fused, const ParamSet<T>& params,
                       const NetConfig& config, PoolingMode mode, ParamSet<T>& grads) {
  const auto per_frame = pool_backward<T>(frame_features, grad_fused, mode);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& g = per_frame[t].values();
    if (std::all_of(g.begin(), g.end(), [](T v) { return v == T{0}; })) continue;
    fcnn_backward(steps[t], params, config, per_frame[t], grads);
  }
}

}  // namespace

template <typename T>
double pair_forward_backward(std::span<const BasicTensor<T>> steps_a,
                             std::span<const BasicTensor<T>> steps_b, PairLabel label,
                             const ParamSet<T>& params, const NetConfig& config, PoolingMode mode,
                             ParamSet<T>& grads) {
  std::vector<BasicTensor<T>> frames_a, frames_b;
  const auto fused_a = embed_sequence(steps_a, params, config, mode, &frames_a);
  const auto fused_b = embed_sequence(steps_b, params, config, mode, &frames_b);

  CompareTrace<T> trace;
  const auto logits = compare_logits(fused_a.maps, fused_b.maps, params, config, &trace);
  const double l_diff = static_cast<double>(logits[kDiffIndex]);
  const double l_same = static_cast<double>(logits[kSameIndex]);
  const double loss = pair_loss(l_diff, l_same, label);

  const auto dl = pair_loss_grad(l_diff, l_same, label);
  BasicTensor<T> grad_logits({2});
  grad_logits[kDiffIndex] = static_cast<T>(dl[0]);
  grad_logits[kSameIndex] = static_cast<T>(dl[1]);
  auto [grad_a, grad_b] =
      compare_backward(fused_a.maps, fused_b.maps, params, config, trace, grad_logits, grads);

  backprop_sequence(steps_a, frames_a, grad_a, params, config, mode, grads);
  backprop_sequence(steps_b, frames_b, grad_b, params, config, mode, grads);
  return loss;
}

template double pair_forward_backward(std::span<const BasicTensor<float>>,
                                      std::span<const BasicTensor<float>>, PairLabel,
                                      const ParamSet<float>&, const NetConfig&, PoolingMode,
                                      ParamSet<float>&);
template double pair_forward_backward(std::span<const BasicTensor<double>>,
                                      std::span<const BasicTensor<double>>, PairLabel,
                                      const ParamSet<double>&, const NetConfig&, PoolingMode,
                                      ParamSet<double>&);

double train_step(ModelParams& params, const Dataset& dataset, const StepBank& bank,
                  std::span<const TrainingPair> batch, const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const std::size_t n = batch.size();
  std::vector<ParamSet<float>> grads(n);
  std::vector<double> losses(n, 0.0);
  std::exception_ptr failure;

  // Pairs fan out across threads; gradients are reduced below in pair order.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      grads[i] = ParamSet<float>::zeros(params.config);
      losses[i] = pair_forward_backward(bank.steps(batch[i].probe), bank.steps(batch[i].gallery),
                                        batch[i].label, params.weights, params.config,
                                        config.pooling, grads[i]);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::string bad;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(losses[i])) {
      const auto& a = dataset.sequences[batch[i].probe];
      const auto& b = dataset.sequences[batch[i].gallery];
      bad += fmt::format(" ({}/{}/{} vs {}/{}/{})", a.subject_id, to_string(a.role), a.view,
                         b.subject_id, to_string(b.role), b.view);
    }
  }
  if (!bad.empty()) throw NumericError("non-finite loss; step aborted for pairs:" + bad);

  ParamSet<float> total = std::move(grads[0]);
  double loss_sum = losses[0];
  for (std::size_t i = 1; i < n; ++i) {
    total.add(grads[i]);
    loss_sum += losses[i];
  }
  total.scale(1.0f / static_cast<float>(n));
  sgd_step(params, total, config.lr, config.momentum);
  ++params.iteration;
  return loss_sum / static_cast<double>(n);
}

double pair_accuracy(std::span<const SimilarityScore> scores, std::span<const PairLabel> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("pair_accuracy: need equally many non-zero scores and labels");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const PairLabel predicted =
        scores[i].p_same > scores[i].p_diff ? PairLabel::kSame : PairLabel::kDifferent;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double validate(const ModelParams& params, const StepBank& bank,
                std::span<const TrainingPair> pairs, PoolingMode mode) {
  std::vector<std::size_t> needed;
  for (const auto& p : pairs) {
    needed.push_back(p.probe);
    needed.push_back(p.gallery);
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());

  std::vector<Tensor> fused(needed.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(needed.size()); ++i) {
    fused[i] = embed_sequence(bank.steps(needed[i]), params.weights, params.config, mode).maps;
  }
  auto feature = [&](std::size_t seq) -> const Tensor& {
    return fused[std::lower_bound(needed.begin(), needed.end(), seq) - needed.begin()];
  };

  std::vector<SimilarityScore> scores(pairs.size());
  std::vector<PairLabel> labels(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs.size()); ++i) {
    scores[i] = compare(feature(pairs[i].probe), feature(pairs[i].gallery), params.weights,
                        params.config);
    labels[i] = pairs[i].label;
  }
  return pair_accuracy(scores, labels);
}

TrainResult train_loop(const Dataset& dataset, const DatasetSplit& split, ModelParams initial,
                       const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  const PairSampler train_sampler(dataset, split.train);
  const PairSampler val_sampler(dataset, split.val);
  const auto val_pairs = val_sampler.sample(config.val_pairs, derive_seed(config.seed, "validation"));
  const StepBank bank(dataset);

  TrainResult result;
  result.log.first_iteration = initial.iteration;
  result.best = initial;
  result.best_precision = -1.0;
  ModelParams params = std::move(initial);

  const bool save = !config.checkpoint_dir.empty();
  auto run_validation = [&]() {
    const double precision = validate(params, bank, val_pairs, config.pooling);
    result.log.validations.push_back({params.iteration, precision});
    if (precision > result.best_precision) {
      result.best_precision = precision;
      result.best = params;
      result.log.checkpoints.push_back({params.iteration, precision});
      if (save) save_checkpoint(params, config.checkpoint_dir / "best.ckpt");
    }
  };

  run_validation();
  while (params.iteration < config.max_iterations) {
    const auto batch = train_sampler.sample(config.batch_size,
                                            derive_seed(config.seed, "sampler", params.iteration));
    const double loss = train_step(params, dataset, bank, batch, config);
    result.log.losses.push_back(loss);
    if (progress) progress(params.iteration, loss);
    if (params.iteration % config.validate_every == 0 ||
        params.iteration == config.max_iterations) {
      run_validation();
    }
  }
  if (save) save_checkpoint(params, config.checkpoint_dir / "last.ckpt");
  result.last = std::move(params);
  return result;
}

void write_train_log(const TrainLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream loss(dir / "loss.csv", std::ios::trunc);
  std::ofstream val(dir / "val_precision.csv", std::ios::trunc);
  if (!loss || !val) throw DataError("cannot write training logs under " + dir.string());
  loss << "iteration,loss\n";
  for (std::size_t i = 0; i < log.losses.size(); ++i) {
    loss << fmt::format("{},{:.9g}\n", log.first_iteration + i + 1, log.losses[i]);
  }
  val << "iteration,val_precision\n";
  for (const auto& v : log.validations) val << fmt::format("{},{:.6f}\n", v.iteration, v.precision);
}

}  // namespace gait
