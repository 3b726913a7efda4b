#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gait/dataset.hpp"
#include "gait/gait_net.hpp"

namespace gait {

struct SequenceKey {
  std::string subject;
  Role role = Role::kProbe;
  int view = 0;

  // "subject/role/view"
  std::string to_string() const;
  static SequenceKey parse(std::string_view text);
  auto operator<=>(const SequenceKey&) const = default;
};

/// Fused features of evaluated sequences, tagged with the parameters and
/// pooling mode that produced them.
class FeatureCache {
 public:
  FeatureCache(std::string checkpoint_hash, PoolingMode mode);

  const std::string& checkpoint_hash() const noexcept { return hash_; }
  PoolingMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<SequenceKey, Tensor>& entries() const noexcept { return entries_; }

  void insert(SequenceKey key, Tensor feature);
  const Tensor& at(const SequenceKey& key) const;
  bool contains(const SequenceKey& key) const { return entries_.contains(key); }

  // Adds every entry of `other`; a different checkpoint hash or pooling mode
  // is rejected with DataError.
  void merge(const FeatureCache& other);

  void save(const std::filesystem::path& path) const;
  static FeatureCache load(const std::filesystem::path& path);

 private:
  std::string hash_;
  PoolingMode mode_;
  std::map<SequenceKey, Tensor> entries_;
};

// One embed_sequence per sequence of `dataset`.
FeatureCache build_cache(const Dataset& dataset, const ModelParams& params, PoolingMode mode);

/// p_same for every (probe, gallery) pair of one probe view / gallery view
/// cell. Rows are probe subjects and columns gallery subjects, both sorted.
struct ScoreMatrix {
  int probe_view = 0;
  int gallery_view = 0;
  std::vector<std::string> probe_subjects;
  std::vector<std::string> gallery_subjects;
  std::vector<double> scores;  // row-major
  std::vector<std::size_t> genuine_column;  // per probe row

  std::size_t rows() const noexcept { return probe_subjects.size(); }
  std::size_t cols() const noexcept { return gallery_subjects.size(); }
  double at(std::size_t i, std::size_t j) const { return scores[i * cols() + j]; }

  std::vector<double> genuine_scores() const;
  std::vector<double> impostor_scores() const;
};

// Every probe subject must have a gallery sequence in `gallery_view`.
ScoreMatrix score_matrix(const FeatureCache& cache, int probe_view, int gallery_view,
                         const ModelParams& params);

/// Percentage of probe rows whose genuine gallery ranks in the top k by
/// descending score; equal scores rank by ascending gallery index.
double rank_k(const ScoreMatrix& matrix, std::size_t k);

/// Equal error rate in percent. FAR(th) = share of impostors >= th, FRR(th) =
/// share of genuine < th, over every distinct score plus +inf; the crossing is
/// linearly interpolated between the two bracketing thresholds.
double eer(std::span<const double> genuine, std::span<const double> impostor);

/// views x views grid; row = probe view, column = gallery view.
struct MetricGrid {
  std::vector<int> views;
  std::vector<double> cells;

  double at(std::size_t probe, std::size_t gallery) const {
    return cells[probe * views.size() + gallery];
  }
  double row_mean(std::size_t probe) const;
  double mean() const;
  double diagonal_mean() const;
  double off_diagonal_mean() const;
};

struct EvalReport {
  std::vector<int> views;
  MetricGrid rank1, rank2, rank5, eer;
};

// Probe and gallery views are the views present in the cache.
EvalReport cross_view_report(const FeatureCache& cache, const ModelParams& params);

// rank1.csv, rank2.csv, rank5.csv, eer.csv; percentages with 2 decimals and a
// trailing row-mean column.
void write_report_csv(const EvalReport& report, const std::filesystem::path& dir);
std::string grid_csv(const MetricGrid& grid);

struct LengthSweepRow {
  std::size_t length = 0;
  double mean_rank1 = 0.0;
  double mean_eer = 0.0;
};

/// For each L, re-embeds every probe from its first L step inputs (galleries
/// use their full length, taken from `gallery_cache`) and reports the grid
/// means of Rank-1 and EER.
std::vector<LengthSweepRow> length_sweep(const Dataset& dataset, const ModelParams& params,
                                         PoolingMode mode, std::span<const std::size_t> lengths,
                                         const FeatureCache& gallery_cache);

void write_length_sweep_csv(std::span<const LengthSweepRow> rows, const std::filesystem::path& path);

}  // namespace gait
