#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gait/dataset.hpp"
#include "gait/gait_net.hpp"

namespace gait {

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Seeded shuffle of `subjects`, then the first train_n / val_n / test_n.
// Requests exceeding the pool are rejected. Each part is returned sorted.
DatasetSplit split_dataset(std::vector<std::string> subjects, std::size_t train_n,
                           std::size_t val_n, std::size_t test_n, std::uint64_t seed);

// Plain-text split file: lines `train <id>`, `val <id>`, `test <id>`.
void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

/// Probe sequence paired with a gallery sequence; indices into Dataset::sequences.
struct TrainingPair {
  std::size_t probe = 0;
  std::size_t gallery = 0;
  PairLabel label = PairLabel::kDifferent;
};

/// Balanced pair sampler over a subject subset of a dataset.
class PairSampler {
 public:
  // Rejects subsets with fewer than two subjects or subjects lacking probe or
  // gallery sequences.
  PairSampler(const Dataset& dataset, std::span<const std::string> subjects);

  // batch_size / 2 positives (probe with a random-view gallery of the same
  // subject) followed by batch_size / 2 negatives (random other subject,
  // random views). Odd batch sizes are rejected. Deterministic in `seed`.
  std::vector<TrainingPair> sample(std::size_t batch_size, std::uint64_t seed) const;

 private:
  struct SubjectSequences {
    std::vector<std::size_t> probes;
    std::vector<std::size_t> galleries;
  };
  std::vector<SubjectSequences> subjects_;
};

std::vector<TrainingPair> sample_batch(const Dataset& dataset,
                                       std::span<const std::string> subjects,
                                       std::size_t batch_size, std::uint64_t seed);

}  // namespace gait
