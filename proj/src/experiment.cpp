#include "gait/experiment.hpp"

#include <chrono>

#include <fmt/format.h>

#include "gait/rng.hpp"
#include "gait/synth.hpp"

namespace gait {

TrainConfig DeskExperiment::default_train() {
  TrainConfig t;
  t.lr = 0.001;
  t.momentum = 0.0;
  t.batch_size = 16;
  t.max_iterations = 2000;
  t.validate_every = 100;
  t.val_pairs = 500;
  t.pooling = PoolingMode::kMax;
  return t;
}

Dataset desk_dataset(const DeskExperiment& exp) {
  SynthOptions opts;
  opts.views = exp.views;
  opts.frames = exp.frames;
  opts.size = exp.net.input_size;
  opts.noise = exp.noise;
  opts.seed = derive_seed(exp.seed, "synth");
  const auto ids = random_identities(exp.identities, derive_seed(exp.seed, "identities"));
  return synthesize_dataset(ids, opts);
}

DatasetSplit desk_split(const DeskExperiment& exp, const Dataset& dataset) {
  return split_dataset(dataset.subjects(), exp.train_subjects, exp.val_subjects,
                       exp.test_subjects, derive_seed(exp.seed, "split"));
}

DeskOutcome run_desk_experiment(const DeskExperiment& exp, const Dataset& dataset,
                                const TrainProgress& progress) {
  const auto split = desk_split(exp, dataset);
  TrainConfig tc = exp.train;
  tc.seed = exp.seed;
  const auto initial = init_params(exp.net, derive_seed(exp.seed, "init"));

  DeskOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  out.training = train_loop(dataset, split, initial, tc, progress);
  out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.untrained_precision = out.training.log.validations.front().precision;

  const Dataset test = dataset.subset(split.test);
  const auto cache = build_cache(test, out.training.best, tc.pooling);
  out.test_report = cross_view_report(cache, out.training.best);
  return out;
}

PoolingComparisonRow summarize(PoolingMode mode, const DeskOutcome& outcome) {
  return {mode,
          outcome.training.best_precision,
          outcome.test_report.rank1.mean(),
          outcome.test_report.rank1.diagonal_mean(),
          outcome.test_report.eer.mean(),
          outcome.train_seconds};
}

std::string pooling_comparison_csv(const std::vector<PoolingComparisonRow>& rows) {
  std::string out = "pooling,best_val_precision,mean_rank1,same_view_rank1,mean_eer,train_seconds\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.4f},{:.2f},{:.2f},{:.2f},{:.1f}\n", to_string(r.mode),
                       r.best_val_precision, r.rank1_mean, r.rank1_same_view, r.eer_mean,
                       r.train_seconds);
  }
  return out;
}

}  // namespace gait
