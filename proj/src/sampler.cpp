#include "gait/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "gait/error.hpp"

namespace gait {

DatasetSplit split_dataset(std::vector<std::string> subjects, std::size_t train_n,
                           std::size_t val_n, std::size_t test_n, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (train_n + val_n + test_n > subjects.size()) {
    throw std::invalid_argument(fmt::format("split of {}+{}+{} subjects requested from a pool of {}",
                                            train_n, val_n, test_n, subjects.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  DatasetSplit s;
  auto take = [&](std::size_t begin, std::size_t n) {
    std::vector<std::string> part(subjects.begin() + static_cast<std::ptrdiff_t>(begin),
                                  subjects.begin() + static_cast<std::ptrdiff_t>(begin + n));
    std::sort(part.begin(), part.end());
    return part;
  };
  s.train = take(0, train_n);
  s.val = take(train_n, val_n);
  s.test = take(train_n + val_n, test_n);
  return s;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write split file " + path.string());
  for (const auto& id : split.train) out << "train " << id << '\n';
  for (const auto& id : split.val) out << "val " << id << '\n';
  for (const auto& id : split.test) out << "test " << id << '\n';
}

DatasetSplit read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  DatasetSplit s;
  std::string part, id;
  while (in >> part >> id) {
    if (part == "train") s.train.push_back(id);
    else if (part == "val") s.val.push_back(id);
    else if (part == "test") s.test.push_back(id);
    else throw DataError("split file " + path.string() + ": unknown part '" + part + "'");
  }
  return s;
}

PairSampler::PairSampler(const Dataset& dataset, std::span<const std::string> subjects) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  if (wanted.size() < 2) {
    throw DataError("pair sampling needs at least 2 subjects for negative pairs, got " +
                    std::to_string(wanted.size()));
  }
  std::map<std::string, SubjectSequences> by_subject;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& seq = dataset.sequences[i];
    if (!wanted.contains(seq.subject_id)) continue;
    auto& entry = by_subject[seq.subject_id];
    (seq.role == Role::kProbe ? entry.probes : entry.galleries).push_back(i);
  }
  for (const auto& id : wanted) {
    auto it = by_subject.find(id);
    if (it == by_subject.end() || it->second.probes.empty() || it->second.galleries.empty()) {
      throw DataError("subject " + id + " needs both probe and gallery sequences");
    }
    subjects_.push_back(std::move(it->second));
  }
}

std::vector<TrainingPair> PairSampler::sample(std::size_t batch_size, std::uint64_t seed) const {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw std::invalid_argument("batch size must be even and positive, got " +
                                std::to_string(batch_size));
  }
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  std::vector<TrainingPair> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size / 2; ++i) {
    const auto& s = subjects_[pick(subjects_.size())];
    const std::size_t probe = s.probes[pick(s.probes.size())];
    batch.push_back({probe, s.galleries[pick(s.galleries.size())], PairLabel::kSame});
  }
  for (std::size_t i = 0; i < batch_size / 2; ++i) {
    const std::size_t a = pick(subjects_.size());
    std::size_t b = pick(subjects_.size() - 1);
    if (b >= a) ++b;
    const auto& sa = subjects_[a];
    const auto& sb = subjects_[b];
    batch.push_back({sa.probes[pick(sa.probes.size())], sb.galleries[pick(sb.galleries.size())],
                     PairLabel::kDifferent});
  }
  return batch;
}

std::vector<TrainingPair> sample_batch(const Dataset& dataset,
                                       std::span<const std::string> subjects,
                                       std::size_t batch_size, std::uint64_t seed) {
  return PairSampler(dataset, subjects).sample(batch_size, seed);
}

}  // namespace gait
