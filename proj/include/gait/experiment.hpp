#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gait/dataset.hpp"
#include "gait/evaluator.hpp"
#include "gait/gait_net.hpp"
#include "gait/sampler.hpp"
#include "gait/trainer.hpp"

namespace gait {

/// A complete synthetic train-and-evaluate run at CPU scale.
struct DeskExperiment {
  std::size_t identities = 20;
  std::vector<int> views{55, 65, 75, 85};
  std::size_t frames = 25;
  double noise = 0.0;
  std::size_t train_subjects = 12;
  std::size_t val_subjects = 4;
  std::size_t test_subjects = 4;
  NetConfig net = NetConfig::desk();
  TrainConfig train = default_train();
  std::uint64_t seed = 7;

  // batch 16, lr 0.001, momentum 0, 2000 iterations, 500 validation pairs.
  static TrainConfig default_train();
};

// Walkers rendered natively at net.input_size; identities and frames drawn
// from substreams of `seed`.
Dataset desk_dataset(const DeskExperiment& exp);
DatasetSplit desk_split(const DeskExperiment& exp, const Dataset& dataset);

struct DeskOutcome {
  double untrained_precision = 0.0;  // validation before the first step
  TrainResult training;
  EvalReport test_report;            // best parameters on the test subjects
  double train_seconds = 0.0;
};

DeskOutcome run_desk_experiment(const DeskExperiment& exp, const Dataset& dataset,
                                const TrainProgress& progress = {});

/// One row per pooling mode of a max-vs-mean comparison.
struct PoolingComparisonRow {
  PoolingMode mode = PoolingMode::kMax;
  double best_val_precision = 0.0;
  double rank1_mean = 0.0;
  double rank1_same_view = 0.0;
  double eer_mean = 0.0;
  double train_seconds = 0.0;
};

PoolingComparisonRow summarize(PoolingMode mode, const DeskOutcome& outcome);
std::string pooling_comparison_csv(const std::vector<PoolingComparisonRow>& rows);

}  // namespace gait
