#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gait/checkpoint.hpp"
#include "gait/dataset.hpp"
#include "gait/error.hpp"
#include "gait/evaluator.hpp"
#include "gait/experiment.hpp"
#include "gait/rng.hpp"
#include "gait/sampler.hpp"
#include "gait/synth.hpp"
#include "gait/trainer.hpp"

namespace fs = std::filesystem;
using namespace gait;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Shared {
  std::uint64_t seed = 0;
  std::string pool = "max";
  int threads = 1;
};

struct NetFlags {
  std::string preset = "desk";
  std::optional<std::size_t> input_size;
  std::optional<std::string> conv1, conv2, mcnn;
};

// "FxK", e.g. "16x7".
ConvSpec parse_conv(const std::string& text, const char* flag) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("missing 'x'");
    std::size_t used = 0;
    const auto f = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("bad filters");
    const auto k = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument("bad kernel");
    return ConvSpec{f, k};
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("{} expects FILTERSxKERNEL, got '{}'", flag, text));
  }
}

NetConfig resolve_net(const NetFlags& f) {
  NetConfig c;
  if (f.preset == "paper") c = NetConfig::paper();
  else if (f.preset == "desk") c = NetConfig::desk();
  else if (f.preset == "tiny") c = NetConfig::tiny();
  else throw std::invalid_argument("unknown --net preset '" + f.preset + "'");
  if (f.input_size) c.input_size = *f.input_size;
  if (f.conv1) c.conv1 = parse_conv(*f.conv1, "--conv1");
  if (f.conv2) c.conv2 = parse_conv(*f.conv2, "--conv2");
  if (f.mcnn) c.mcnn = parse_conv(*f.mcnn, "--mcnn");
  c.validate();
  return c;
}

void add_net_flags(CLI::App* cmd, NetFlags& f) {
  cmd->add_option("--net", f.preset, "Network preset")
      ->check(CLI::IsMember({"paper", "desk", "tiny"}))
      ->capture_default_str();
  cmd->add_option("--input-size", f.input_size, "Square input size (overrides preset)");
  cmd->add_option("--conv1", f.conv1, "conv1 as FILTERSxKERNEL");
  cmd->add_option("--conv2", f.conv2, "conv2 as FILTERSxKERNEL");
  cmd->add_option("--mcnn", f.mcnn, "mCNN as FILTERSxKERNEL");
}

struct SubjectSelection {
  std::string split_file;
  std::string part = "all";
};

void add_selection_flags(CLI::App* cmd, SubjectSelection& s) {
  cmd->add_option("--split", s.split_file, "Split file restricting the subjects");
  cmd->add_option("--part", s.part, "Part of the split to use")
      ->check(CLI::IsMember({"all", "train", "val", "test"}))
      ->capture_default_str();
}

Dataset select_subjects(Dataset ds, const SubjectSelection& s) {
  if (s.split_file.empty()) {
    if (s.part != "all") throw std::invalid_argument("--part needs --split");
    return ds;
  }
  const auto split = read_split(s.split_file);
  std::vector<std::string> ids;
  if (s.part == "train" || s.part == "all") ids.insert(ids.end(), split.train.begin(), split.train.end());
  if (s.part == "val" || s.part == "all") ids.insert(ids.end(), split.val.begin(), split.val.end());
  if (s.part == "test" || s.part == "all") ids.insert(ids.end(), split.test.begin(), split.test.end());
  Dataset out = ds.subset(ids);
  if (out.sequences.empty()) throw DataError("no sequences left after subject selection");
  return out;
}

std::vector<int> parse_int_list(const std::vector<std::string>& items) {
  std::vector<int> out;
  for (const auto& s : items) out.push_back(std::stoi(s));
  return out;
}

void print_grid(const char* name, const MetricGrid& g) {
  fmt::print("{} (rows probe view, columns gallery view)\n{}", name, grid_csv(g));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence-level cross-view gait recognition: synthesis, training and evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read option values from a TOML/INI file; flags take precedence");

  Shared shared;
  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--seed", shared.seed, "Run seed")->capture_default_str();
    cmd->add_option("--pool", shared.pool, "Temporal pooling")
        ->check(CLI::IsMember({"max", "mean"}))
        ->capture_default_str();
    cmd->add_option("--threads", shared.threads, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Render synthetic walkers into the dataset layout");
  std::string synth_out, synth_spec;
  std::size_t synth_ids = 20;
  std::vector<std::string> synth_views{"55", "65", "75", "85"};
  SynthOptions synth_opts;
  synth_opts.size = NetConfig::desk().input_size;
  synth->add_option("--out", synth_out, "Dataset root to create")->required();
  synth->add_option("--spec", synth_spec, "Identity file, one JSON object per line");
  synth->add_option("--identities", synth_ids, "Random identities when no --spec is given")
      ->capture_default_str();
  synth->add_option("--views", synth_views, "View angles")->delimiter(',')->capture_default_str();
  synth->add_option("--frames", synth_opts.frames, "Frames per sequence")->capture_default_str();
  synth->add_option("--size", synth_opts.size, "Frame size in pixels")->capture_default_str();
  synth->add_option("--noise", synth_opts.noise, "Per-pixel flip probability")->capture_default_str();
  add_shared(synth);

  // train
  auto* train = app.add_subcommand("train", "Train the pairwise network");
  std::string data_dir, out_dir, checkpoint_path, split_file;
  NetFlags net_flags;
  TrainConfig tc;
  std::optional<std::size_t> train_n, val_n, test_n;
  train->add_option("--data", data_dir, "Dataset root")->required();
  train->add_option("--out", out_dir, "Output directory for checkpoints and logs")->required();
  train->add_option("--checkpoint", checkpoint_path, "Start from this checkpoint instead of a fresh init");
  add_net_flags(train, net_flags);
  train->add_option("--lr", tc.lr, "Learning rate")->capture_default_str();
  train->add_option("--momentum", tc.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--batch", tc.batch_size, "Pairs per batch (even)")->capture_default_str();
  train->add_option("--max-iterations", tc.max_iterations, "Stop after this many iterations in total")
      ->capture_default_str();
  train->add_option("--validate-every", tc.validate_every, "Validation interval")->capture_default_str();
  train->add_option("--val-pairs", tc.val_pairs, "Balanced validation pairs")->capture_default_str();
  train->add_option("--split", split_file, "Split file; otherwise a seeded split is drawn and written");
  train->add_option("--train-subjects", train_n, "Subjects for training (default: the rest)");
  train->add_option("--val-subjects", val_n, "Subjects for validation (default: a fifth, at least 2)");
  train->add_option("--test-subjects", test_n, "Subjects held out for testing (default: a fifth)");
  add_shared(train);

  // extract
  auto* extract = app.add_subcommand("extract", "Embed every sequence once into a feature cache");
  std::string cache_path;
  SubjectSelection selection;
  extract->add_option("--data", data_dir, "Dataset root")->required();
  extract->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  extract->add_option("--out", cache_path, "Cache file to write")->required();
  add_selection_flags(extract, selection);
  add_shared(extract);

  // compare
  auto* cmp = app.add_subcommand("compare", "Print p_same for two sequence directories");
  std::string seq_a, seq_b;
  cmp->add_option("seq_a", seq_a, "First sequence directory")->required();
  cmp->add_option("seq_b", seq_b, "Second sequence directory")->required();
  cmp->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  add_shared(cmp);

  // eval
  auto* eval = app.add_subcommand("eval", "Cross-view Rank-1/2/5 and EER grids");
  auto* eval_data = eval->add_option("--data", data_dir, "Dataset root");
  auto* eval_cache = eval->add_option("--cache", cache_path, "Feature cache from extract");
  eval_data->excludes(eval_cache);
  eval->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  eval->add_option("--out", out_dir, "Directory for the CSV grids")->required();
  add_selection_flags(eval, selection);
  add_shared(eval);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Mean metrics against probe sequence length");
  std::vector<std::size_t> lengths;
  sweep->add_option("--data", data_dir, "Dataset root")->required();
  sweep->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  sweep->add_option("--lengths", lengths, "Probe lengths in step inputs")->delimiter(',')->required();
  sweep->add_option("--out", out_dir, "Directory for length_sweep.csv")->required();
  add_selection_flags(sweep, selection);
  add_shared(sweep);

  // pool-compare
  auto* pcmp = app.add_subcommand("pool-compare", "Train and evaluate max and mean pooling on synthetic walkers");
  DeskExperiment exp;
  pcmp->add_option("--out", out_dir, "Directory for pooling_comparison.csv")->required();
  pcmp->add_option("--identities", exp.identities, "Synthetic identities")->capture_default_str();
  pcmp->add_option("--max-iterations", exp.train.max_iterations, "Iterations per mode")->capture_default_str();
  pcmp->add_option("--validate-every", exp.train.validate_every, "Validation interval")->capture_default_str();
  add_net_flags(pcmp, net_flags);
  add_shared(pcmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  omp_set_num_threads(shared.threads);
  const PoolingMode pool = parse_pooling_mode(shared.pool);
  CLI::App* active = app.get_subcommands().front();
  fmt::print("# effective configuration\n[{}]\n{}", active->get_name(), active->config_to_str(true, false));
  std::fflush(stdout);

  try {
    if (*synth) {
      std::vector<WalkerIdentity> ids = synth_spec.empty()
                                            ? random_identities(synth_ids, derive_seed(shared.seed, "identities"))
                                            : read_identity_file(synth_spec);
      if (ids.empty()) throw DataError("no identities to render");
      synth_opts.views = parse_int_list(synth_views);
      synth_opts.seed = derive_seed(shared.seed, "synth");
      const Dataset ds = synthesize_dataset(ids, synth_opts);
      write_dataset(ds, synth_out);
      write_identity_file(fs::path(synth_out) / "identities.jsonl", ids);
      fmt::print("subjects {} sequences {}\n", ds.subjects().size(), ds.sequences.size());
    } else if (*train) {
      ModelParams initial = checkpoint_path.empty()
                                ? init_params(resolve_net(net_flags), derive_seed(shared.seed, "init"))
                                : load_checkpoint(checkpoint_path);
      const Dataset ds = load_dataset(data_dir, initial.config.input_size);
      DatasetSplit split;
      if (!split_file.empty()) {
        split = read_split(split_file);
      } else {
        const std::size_t n = ds.subjects().size();
        const std::size_t v = val_n.value_or(std::max<std::size_t>(2, n / 5));
        const std::size_t t = test_n.value_or(n / 5);
        if (v + t > n) throw std::invalid_argument("not enough subjects for the requested split");
        split = split_dataset(ds.subjects(), train_n.value_or(n - v - t), v, t,
                              derive_seed(shared.seed, "split"));
      }
      fs::create_directories(out_dir);
      write_split(fs::path(out_dir) / "split.txt", split);
      tc.pooling = pool;
      tc.seed = shared.seed;
      tc.checkpoint_dir = out_dir;
      const auto result = train_loop(ds, split, std::move(initial), tc, [](std::uint64_t it, double loss) {
        if (it % 50 == 0) {
          fmt::print("iteration {} loss {:.6f}\n", it, loss);
          std::fflush(stdout);
        }
      });
      write_train_log(result.log, out_dir);
      const auto& last = result.log.validations.back();
      fmt::print("final validation precision {:.4f} (iteration {})\n", last.precision, last.iteration);
      fmt::print("best validation precision {:.4f}\n", result.best_precision);
    } else if (*extract) {
      const auto params = load_checkpoint(checkpoint_path);
      const Dataset ds = select_subjects(load_dataset(data_dir, params.config.input_size), selection);
      const auto cache = build_cache(ds, params, pool);
      cache.save(cache_path);
      fmt::print("entries {}\n", cache.size());
    } else if (*cmp) {
      const auto params = load_checkpoint(checkpoint_path);
      const auto a = make_step_inputs(load_sequence(seq_a, params.config.input_size));
      const auto b = make_step_inputs(load_sequence(seq_b, params.config.input_size));
      const auto s = forward_pair<float>(a, b, params.weights, params.config, pool);
      fmt::print("{:.6f}\n", s.p_same);
    } else if (*eval) {
      const auto params = load_checkpoint(checkpoint_path);
      FeatureCache cache = [&] {
        if (!cache_path.empty()) {
          auto c = FeatureCache::load(cache_path);
          if (c.checkpoint_hash() != params_hash(params)) {
            throw DataError("cache " + cache_path + " was built from a different checkpoint");
          }
          return c;
        }
        if (data_dir.empty()) throw std::invalid_argument("eval needs --data or --cache");
        const Dataset ds = select_subjects(load_dataset(data_dir, params.config.input_size), selection);
        return build_cache(ds, params, pool);
      }();
      const auto report = cross_view_report(cache, params);
      write_report_csv(report, out_dir);
      print_grid("Rank-1 %", report.rank1);
      print_grid("Rank-2 %", report.rank2);
      print_grid("Rank-5 %", report.rank5);
      print_grid("EER %", report.eer);
      fmt::print("mean Rank-1 {:.2f} same-view Rank-1 {:.2f} mean EER {:.2f}\n", report.rank1.mean(),
                 report.rank1.diagonal_mean(), report.eer.mean());
    } else if (*sweep) {
      if (lengths.empty()) throw std::invalid_argument("--lengths must list at least one length");
      const auto params = load_checkpoint(checkpoint_path);
      const Dataset ds = select_subjects(load_dataset(data_dir, params.config.input_size), selection);
      const Dataset galleries = [&] {
        Dataset g;
        for (const auto& s : ds.sequences)
          if (s.role == Role::kGallery) g.sequences.push_back(s);
        return g;
      }();
      const auto rows = length_sweep(ds, params, pool, lengths, build_cache(galleries, params, pool));
      fs::create_directories(out_dir);
      write_length_sweep_csv(rows, fs::path(out_dir) / "length_sweep.csv");
      for (const auto& r : rows) {
        fmt::print("length {} mean Rank-1 {:.2f} mean EER {:.2f}\n", r.length, r.mean_rank1, r.mean_eer);
      }
    } else if (*pcmp) {
      exp.net = resolve_net(net_flags);
      exp.seed = shared.seed;
      const Dataset ds = desk_dataset(exp);
      std::vector<PoolingComparisonRow> rows;
      for (PoolingMode mode : {PoolingMode::kMax, PoolingMode::kMean}) {
        exp.train.pooling = mode;
        const auto outcome = run_desk_experiment(exp, ds);
        rows.push_back(summarize(mode, outcome));
        fmt::print("{}: best validation {:.4f} mean Rank-1 {:.2f} mean EER {:.2f}\n", to_string(mode),
                   rows.back().best_val_precision, rows.back().rank1_mean, rows.back().eer_mean);
        std::fflush(stdout);
      }
      fs::create_directories(out_dir);
      write_file_bytes(fs::path(out_dir) / "pooling_comparison.csv", pooling_comparison_csv(rows));
    }
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return kNumeric;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kData;
  }
  return kOk;
}
