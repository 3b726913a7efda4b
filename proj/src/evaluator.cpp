#include "gait/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "gait/checkpoint.hpp"
#include "gait/error.hpp"

namespace gait {

namespace {
constexpr std::string_view kCacheFormat = "gaitnet-feature-cache";
}

std::string SequenceKey::to_string() const {
  return fmt::format("{}/{}/{}", subject, gait::to_string(role), view);
}

SequenceKey SequenceKey::parse(std::string_view text) {
  const auto a = text.find('/');
  const auto b = text.rfind('/');
  if (a == std::string_view::npos || a == b) {
    throw DataError("bad sequence key '" + std::string(text) + "'");
  }
  try {
    return {std::string(text.substr(0, a)), parse_role(text.substr(a + 1, b - a - 1)),
            std::stoi(std::string(text.substr(b + 1)))};
  } catch (const std::exception&) {
    throw DataError("bad sequence key '" + std::string(text) + "'");
  }
}

FeatureCache::FeatureCache(std::string checkpoint_hash, PoolingMode mode)
    : hash_(std::move(checkpoint_hash)), mode_(mode) {}

void FeatureCache::insert(SequenceKey key, Tensor feature) {
  entries_.insert_or_assign(std::move(key), std::move(feature));
}

const Tensor& FeatureCache::at(const SequenceKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw DataError("feature cache has no entry " + key.to_string());
  return it->second;
}

void FeatureCache::merge(const FeatureCache& other) {
  if (other.hash_ != hash_ || other.mode_ != mode_) {
    throw DataError(fmt::format("feature cache mismatch: checkpoint {} ({}) vs {} ({})", hash_,
                                to_string(mode_), other.hash_, to_string(other.mode_)));
  }
  for (const auto& [k, v] : other.entries_) entries_.insert_or_assign(k, v);
}

void FeatureCache::save(const std::filesystem::path& path) const {
  TensorContainer c;
  c.meta = {{"format", std::string(kCacheFormat)},
            {"pool", std::string(to_string(mode_))},
            {"checkpoint", hash_}};
  for (const auto& [k, v] : entries_) c.tensors.emplace_back(k.to_string(), v);
  write_container(path, c);
}

FeatureCache FeatureCache::load(const std::filesystem::path& path) {
  const TensorContainer c = read_container(path);
  const auto* format = c.find_meta("format");
  if (!format || *format != kCacheFormat) {
    throw DataError(path.string() + ": not a feature cache");
  }
  PoolingMode mode;
  try {
    mode = parse_pooling_mode(c.meta_value("pool"));
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  FeatureCache cache(c.meta_value("checkpoint"), mode);
  for (const auto& [name, t] : c.tensors) cache.insert(SequenceKey::parse(name), t);
  return cache;
}

FeatureCache build_cache(const Dataset& dataset, const ModelParams& params, PoolingMode mode) {
  const auto& seqs = dataset.sequences;
  std::vector<Tensor> features(seqs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(seqs.size()); ++i) {
    try {
      const auto steps = make_step_inputs(seqs[i]);
      features[i] = embed_sequence<float>(steps, params.weights, params.config, mode).maps;
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  FeatureCache cache(params_hash(params), mode);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    cache.insert({seqs[i].subject_id, seqs[i].role, seqs[i].view}, std::move(features[i]));
  }
  return cache;
}

std::vector<double> ScoreMatrix::genuine_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows(); ++i) out.push_back(at(i, genuine_column[i]));
  return out;
}

std::vector<double> ScoreMatrix::impostor_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) {
      if (j != genuine_column[i]) out.push_back(at(i, j));
    }
  }
  return out;
}

ScoreMatrix score_matrix(const FeatureCache& cache, int probe_view, int gallery_view,
                         const ModelParams& params) {
  ScoreMatrix m;
  m.probe_view = probe_view;
  m.gallery_view = gallery_view;
  std::vector<const Tensor*> probes, galleries;
  for (const auto& [k, v] : cache.entries()) {
    if (k.role == Role::kProbe && k.view == probe_view) {
      m.probe_subjects.push_back(k.subject);
      probes.push_back(&v);
    } else if (k.role == Role::kGallery && k.view == gallery_view) {
      m.gallery_subjects.push_back(k.subject);
      galleries.push_back(&v);
    }
  }
  if (m.probe_subjects.empty() || m.gallery_subjects.empty()) {
    throw DataError(fmt::format("no probe/gallery features for views {}/{}", probe_view,
                                gallery_view));
  }
  for (const auto& s : m.probe_subjects) {
    auto it = std::lower_bound(m.gallery_subjects.begin(), m.gallery_subjects.end(), s);
    if (it == m.gallery_subjects.end() || *it != s) {
      throw DataError(fmt::format("probe subject {} has no gallery sequence at view {}", s,
                                  gallery_view));
    }
    m.genuine_column.push_back(static_cast<std::size_t>(it - m.gallery_subjects.begin()));
  }

  const std::size_t rows = m.rows(), cols = m.cols();
  m.scores.resize(rows * cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(rows * cols); ++idx) {
    const std::size_t i = idx / cols, j = idx % cols;
    m.scores[idx] = compare(*probes[i], *galleries[j], params.weights, params.config).p_same;
  }
  return m;
}

double rank_k(const ScoreMatrix& matrix, std::size_t k) {
  if (k == 0) throw std::invalid_argument("rank_k: k must be >= 1");
  if (matrix.rows() == 0) throw std::invalid_argument("rank_k: empty score matrix");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const std::size_t g = matrix.genuine_column[i];
    const double s = matrix.at(i, g);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      const double v = matrix.at(i, j);
      if (v > s || (v == s && j < g)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(matrix.rows());
}

double eer(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw std::invalid_argument("eer: genuine and impostor score lists must be non-empty");
  }
  std::vector<double> gen(genuine.begin(), genuine.end());
  std::vector<double> imp(impostor.begin(), impostor.end());
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> thresholds(gen);
  thresholds.insert(thresholds.end(), imp.begin(), imp.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  double prev_far = 1.0, prev_frr = 0.0;  // below the lowest score
  std::size_t gi = 0, ii = 0;
  for (double th : thresholds) {
    while (gi < gen.size() && gen[gi] < th) ++gi;
    while (ii < imp.size() && imp[ii] < th) ++ii;
    const double far = static_cast<double>(imp.size() - ii) / ni;
    const double frr = static_cast<double>(gi) / ng;
    if (frr >= far) {
      const double d_prev = prev_far - prev_frr;
      const double d_cur = far - frr;
      const double lambda = d_prev == d_cur ? 0.0 : d_prev / (d_prev - d_cur);
      return 100.0 * (prev_far + lambda * (far - prev_far));
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 100.0 * prev_far;  // unreachable: FRR is 1 at +inf
}

double MetricGrid::row_mean(std::size_t probe) const {
  double s = 0.0;
  for (std::size_t j = 0; j < views.size(); ++j) s += at(probe, j);
  return s / static_cast<double>(views.size());
}

double MetricGrid::mean() const {
  double s = 0.0;
  for (double v : cells) s += v;
  return s / static_cast<double>(cells.size());
}

double MetricGrid::diagonal_mean() const {
  double s = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i) s += at(i, i);
  return s / static_cast<double>(views.size());
}

double MetricGrid::off_diagonal_mean() const {
  if (views.size() < 2) return diagonal_mean();
  double s = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = 0; j < views.size(); ++j)
      if (i != j) s += at(i, j);
  return s / static_cast<double>(views.size() * (views.size() - 1));
}

EvalReport cross_view_report(const FeatureCache& cache, const ModelParams& params) {
  std::vector<int> views;
  for (const auto& [k, v] : cache.entries()) views.push_back(k.view);
  std::sort(views.begin(), views.end());
  views.erase(std::unique(views.begin(), views.end()), views.end());
  if (views.empty()) throw DataError("cross_view_report: empty feature cache");

  EvalReport r;
  r.views = views;
  for (MetricGrid* g : {&r.rank1, &r.rank2, &r.rank5, &r.eer}) {
    g->views = views;
    g->cells.assign(views.size() * views.size(), 0.0);
  }
  for (std::size_t p = 0; p < views.size(); ++p) {
    for (std::size_t g = 0; g < views.size(); ++g) {
      const ScoreMatrix m = score_matrix(cache, views[p], views[g], params);
      const std::size_t cell = p * views.size() + g;
      r.rank1.cells[cell] = rank_k(m, 1);
      r.rank2.cells[cell] = rank_k(m, 2);
      r.rank5.cells[cell] = rank_k(m, 5);
      const auto imp = m.impostor_scores();
      r.eer.cells[cell] = imp.empty() ? 0.0 : eer(m.genuine_scores(), imp);
    }
  }
  return r;
}

std::string grid_csv(const MetricGrid& grid) {
  std::string out = "probe\\gallery";
  for (int v : grid.views) out += fmt::format(",{}", v);
  out += ",mean\n";
  for (std::size_t p = 0; p < grid.views.size(); ++p) {
    out += fmt::format("{}", grid.views[p]);
    for (std::size_t g = 0; g < grid.views.size(); ++g) out += fmt::format(",{:.2f}", grid.at(p, g));
    out += fmt::format(",{:.2f}\n", grid.row_mean(p));
  }
  return out;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const MetricGrid*> files[] = {
      {"rank1.csv", &report.rank1}, {"rank2.csv", &report.rank2},
      {"rank5.csv", &report.rank5}, {"eer.csv", &report.eer}};
  for (const auto& [name, grid] : files) write_file_bytes(dir / name, grid_csv(*grid));
}

std::vector<LengthSweepRow> length_sweep(const Dataset& dataset, const ModelParams& params,
                                         PoolingMode mode, std::span<const std::size_t> lengths,
                                         const FeatureCache& gallery_cache) {
  if (lengths.empty()) throw std::invalid_argument("length_sweep: no lengths given");
  std::vector<std::size_t> probes;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    if (dataset.sequences[i].role == Role::kProbe) probes.push_back(i);
  }
  std::vector<LengthSweepRow> rows;
  for (std::size_t length : lengths) {
    if (length == 0) throw std::invalid_argument("length_sweep: lengths must be >= 1");
    FeatureCache cache = gallery_cache;
    std::vector<Tensor> features(probes.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(probes.size()); ++i) {
      const auto steps = make_step_inputs(dataset.sequences[probes[i]], length);
      features[i] = embed_sequence<float>(steps, params.weights, params.config, mode).maps;
    }
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const auto& s = dataset.sequences[probes[i]];
      cache.insert({s.subject_id, s.role, s.view}, std::move(features[i]));
    }
    const EvalReport r = cross_view_report(cache, params);
    rows.push_back({length, r.rank1.mean(), r.eer.mean()});
  }
  return rows;
}

void write_length_sweep_csv(std::span<const LengthSweepRow> rows, const std::filesystem::path& path) {
  std::string out = "length,mean_rank1,mean_eer\n";
  for (const auto& r : rows) out += fmt::format("{},{:.2f},{:.2f}\n", r.length, r.mean_rank1, r.mean_eer);
  write_file_bytes(path, out);
}

}  // namespace gait
