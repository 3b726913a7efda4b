#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gait/dataset.hpp"
#include "gait/gait_net.hpp"
#include "gait/sampler.hpp"

namespace gait {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.0;
  std::size_t batch_size = 128;
  std::size_t max_iterations = 1000;
  std::size_t validate_every = 100;
  std::size_t val_pairs = 200;
  PoolingMode pooling = PoolingMode::kMax;
  std::uint64_t seed = 0;
  // When set, best.ckpt is rewritten on every validation improvement and
  // last.ckpt is written when the loop ends.
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

/// Negative log-likelihood -(t0 ln p0 + t1 ln p1) of the softmax over
/// {logit_diff, logit_same}, evaluated as log-sum-exp minus the target logit.
double pair_loss(double logit_diff, double logit_same, PairLabel label);
// Same loss from already-normalized probabilities.
double pair_loss(const SimilarityScore& score, PairLabel label);
// dLoss/dlogits = p - t, ordered {diff, same}.
std::array<double, 2> pair_loss_grad(double logit_diff, double logit_same, PairLabel label);

/// Step inputs of every sequence of a dataset, computed once.
class StepBank {
 public:
  explicit StepBank(const Dataset& dataset);
  std::span<const Tensor> steps(std::size_t sequence) const { return steps_.at(sequence); }
  std::size_t size() const noexcept { return steps_.size(); }

 private:
  std::vector<std::vector<Tensor>> steps_;
};

/// Forward and backward pass for one labelled pair, through the temporal
/// pooling into every frame's fCNN. Parameter gradients are accumulated into
/// `grads`; returns the pair loss.
template <typename T>
double pair_forward_backward(std::span<const BasicTensor<T>> steps_a,
                             std::span<const BasicTensor<T>> steps_b, PairLabel label,
                             const ParamSet<T>& params, const NetConfig& config, PoolingMode mode,
                             ParamSet<T>& grads);

// One SGD step on the batch-mean gradient. Returns the mean loss before the
// update. A non-finite loss aborts the step with a NumericError naming the
// offending pairs.
double train_step(ModelParams& params, const Dataset& dataset, const StepBank& bank,
                  std::span<const TrainingPair> batch, const TrainConfig& config);

// Fraction of pairs where argmax(p_diff, p_same) matches the label. A tie
// counts as "different".
double pair_accuracy(std::span<const SimilarityScore> scores, std::span<const PairLabel> labels);

// pair_accuracy over `pairs`, embedding each distinct sequence once.
double validate(const ModelParams& params, const StepBank& bank,
                std::span<const TrainingPair> pairs, PoolingMode mode);

struct ValidationRecord {
  std::uint64_t iteration = 0;
  double precision = 0.0;
};

struct TrainLog {
  std::uint64_t first_iteration = 0;
  std::vector<double> losses;  // one per completed iteration, from first_iteration
  std::vector<ValidationRecord> validations;
  std::vector<ValidationRecord> checkpoints;  // validations that improved on the best
};

struct TrainResult {
  ModelParams best;
  double best_precision = 0.0;
  ModelParams last;
  TrainLog log;
};

using TrainProgress = std::function<void(std::uint64_t iteration, double loss)>;

/// Trains from `initial` (continuing at initial.iteration) until
/// config.max_iterations. Validation runs before the first step, every
/// validate_every iterations and after the last step; the best-scoring
/// parameters are kept. Batch i is drawn from sampler substream i, so a resumed
/// run repeats the uninterrupted trajectory.
TrainResult train_loop(const Dataset& dataset, const DatasetSplit& split, ModelParams initial,
                       const TrainConfig& config, const TrainProgress& progress = {});

// loss.csv (iteration,loss) and val_precision.csv (iteration,val_precision).
void write_train_log(const TrainLog& log, const std::filesystem::path& dir);

}  // namespace gait
