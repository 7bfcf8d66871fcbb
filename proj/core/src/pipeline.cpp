#include "ltmx/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "ltmx/checkpoint.hpp"
#include "ltmx/error.hpp"
#include "ltmx/hash.hpp"
#include "ltmx/plot.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {

namespace fs = std::filesystem;

namespace {

void note(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> parse_indices(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoul(item));
  return out;
}

const std::string& meta(const CheckpointMetadata& m, const std::string& key, const std::string& path) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(path + ": checkpoint metadata lacks '" + key + "'");
  return it->second;
}

Manifest read_required_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing manifest " + path.string() + " (run prepare-data first)");
  return read_manifest(path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw Error("missing " + what + " " + path.string());
}

PairedDataset load_split(const ExperimentConfig& config, const SourceSet& sources, const Manifest& manifest,
                         const std::vector<std::size_t>& keep) {
  return materialize(manifest, sources.ptrs(), config.dataset.num_classes).select_modalities(keep);
}

std::string trace_header() { return "epoch,L_ce,L_bal,L_inv,sum_L_cls,sum_L_conf,unified"; }

std::string trace_row(const EpochLoss& e) {
  std::ostringstream s;
  s << e.epoch << ',' << format_real(e.ce) << ',' << format_real(e.bal) << ',' << format_real(e.inv) << ','
    << format_real(e.cls_sum) << ',' << format_real(e.conf_sum) << ',' << format_real(e.unified);
  return s.str();
}

void write_lines(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::vector<std::string> read_rows(const fs::path& path) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (!line.empty()) rows.push_back(line);
  }
  return rows;
}

fs::path out_dir(const ExperimentConfig& config, const CommandOptions& options) {
  return fs::path(options.out.value_or(config.output_dir));
}

std::uint64_t run_seed(const ExperimentConfig& config, const CommandOptions& options) {
  return options.seed.value_or(config.seed);
}

std::string ratio_label(const DistributionSpec& s) { return format_real(s.ratio); }

void write_plots(const fs::path& dir, const std::vector<EvalReport>& summary) {
  fs::create_directories(dir);
  // Group by train ratio: F1 per test split, one line per variant.
  std::vector<std::string> trains, variants, splits;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : summary) {
    add_unique(trains, r.train_ir);
    add_unique(variants, r.variant);
    add_unique(splits, r.test_spec);
  }
  for (const auto& t : trains) {
    std::vector<LineSeries> lines;
    for (const auto& v : variants) {
      LineSeries ls{v, {}};
      for (const auto& s : splits) {
        for (const auto& r : summary) {
          if (r.train_ir == t && r.variant == v && r.test_spec == s) ls.y.push_back(r.macro_f1.mean);
        }
      }
      if (ls.y.size() == splits.size()) lines.push_back(std::move(ls));
    }
    write_line_chart((dir / ("f1-ir" + t + ".svg")).string(), "Macro F1, train IR " + t, splits, lines, "macro F1");
    for (const auto& v : variants) {
      std::vector<BarGroup> groups;
      for (const auto& r : summary) {
        if (r.train_ir == t && r.variant == v) groups.push_back({r.test_spec, {r.weights[0], r.weights[1], r.weights[2]}});
      }
      if (groups.empty()) continue;
      write_bar_chart((dir / ("weights-ir" + t + "-" + v + ".svg")).string(),
                      "Aggregation weights, " + v + ", train IR " + t, {"w1", "w2", "w3"}, groups, 1.0);
    }
  }
}

std::vector<EvalReport> summarize_grid(const std::vector<EvalRecord>& records) {
  std::vector<EvalReport> out;
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.variant, r.train_ir, r.test_spec);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& key : keys) {
    std::vector<EvalRecord> cell;
    for (const auto& r : records) {
      if (std::make_tuple(r.variant, r.train_ir, r.test_spec) == key) cell.push_back(r);
    }
    out.push_back(summarize_records(std::move(cell)));
  }
  return out;
}

}  // namespace

std::vector<const LabeledSource*> SourceSet::ptrs() const {
  std::vector<const LabeledSource*> p;
  for (const auto& s : owned) p.push_back(s.get());
  return p;
}

std::vector<ModalityShape> SourceSet::shapes() const {
  std::vector<ModalityShape> s;
  for (const auto& src : owned) s.push_back(src->shape());
  return s;
}

SourceSet open_sources(const ExperimentConfig& config) { return SourceSet{build_sources(config.dataset)}; }

SplitManifests build_manifests(const ExperimentConfig& config, const std::vector<const LabeledSource*>& sources,
                               const DistributionSpec& train_spec, std::uint64_t seed) {
  const int k = config.dataset.num_classes;
  const auto& d = config.dataset;
  auto head = [](std::int64_t h) { return h > 0 ? std::optional<std::int64_t>(h) : std::nullopt; };
  const Manifest pool = pair_modalities(sources, seed);
  SplitManifests out;
  if (d.split == SplitMode::pools) {
    auto [train_pool, test_pool] = split_stratified(pool, k, 1.0 - d.test_pool_fraction, derive_seed(seed, "pools"));
    out.train = subsample_longtailed(train_pool, k, train_spec, seed, head(d.head_count));
    for (const auto& spec : config.tests) {
      out.tests[spec.id()] = subsample_longtailed(test_pool, k, spec, derive_seed(seed, "test"), head(d.test_head_count));
    }
  } else {
    const auto subset = subsample_longtailed(pool, k, train_spec, seed, head(d.head_count));
    auto [train, test] = split_stratified(subset, k, d.train_fraction, derive_seed(seed, "holdout"));
    out.train = std::move(train);
    out.tests["matched"] = std::move(test);
  }
  return out;
}

void train_run(const ExperimentConfig& config, const SourceSet& sources, const fs::path& data_dir,
               const fs::path& run_dir, Variant variant, std::uint64_t seed, bool resume, const Logger& log) {
  RunPaths data{data_dir};
  RunPaths run{run_dir};
  fs::create_directories(run_dir);
  const Manifest manifest = read_required_manifest(data.train_manifest());
  const auto shapes = sources.shapes();
  const auto keep = variant_modalities(config, shapes.size(), variant);
  const PairedDataset train = load_split(config, sources, manifest, keep);
  const ModelConfig model = model_config_for(config, shapes, variant);
  TrainConfig tc = config.optimizer;
  tc.seed = seed;

  const CheckpointMetadata metadata{{"variant", to_string(variant)},
                                    {"modalities", join_indices(keep)},
                                    {"train_split", manifest.spec.id()},
                                    {"train_ir", ratio_label(manifest.spec)},
                                    {"seed", std::to_string(seed)}};

  ExpertBundle bundle;
  TrainState state;
  std::vector<std::string> rows;
  if (resume && fs::exists(run.checkpoint())) {
    auto ck = load_checkpoint(run.checkpoint().string());
    if (!(ck.bundle.config() == model)) throw ConfigError("resume: checkpoint architecture differs from the config");
    TrainConfig saved = ck.train;
    saved.epochs = tc.epochs;
    if (!(saved == tc)) throw ConfigError("resume: checkpoint training settings differ from the config");
    bundle = std::move(ck.bundle);
    state = std::move(ck.state);
    rows = read_rows(run.trace());
    if (rows.size() < static_cast<std::size_t>(state.epochs_done)) throw Error("resume: trace is shorter than the checkpoint");
    rows.resize(static_cast<std::size_t>(state.epochs_done));
    note(log, "resuming " + run_dir.string() + " after epoch " + std::to_string(state.epochs_done));
  } else {
    bundle = ExpertBundle(model, seed);
    state = make_train_state(train, tc);
  }

  write_lines(run.trace(), trace_header(), rows);
  train_experts(train, bundle, tc, state, [&](const EpochLoss& e, const TrainState& s) {
    rows.push_back(trace_row(e));
    write_lines(run.trace(), trace_header(), rows);
    save_checkpoint(run.checkpoint().string(), bundle, tc, s, metadata);
    note(log, run_dir.string() + ": epoch " + std::to_string(e.epoch) + " unified " + format_real(e.unified));
  });
  if (state.epochs_done == 0 || !fs::exists(run.checkpoint())) {
    save_checkpoint(run.checkpoint().string(), bundle, tc, state, metadata);
  }
}

AggregationWeights adapt_run(const ExperimentConfig& config, const SourceSet& sources, const fs::path& data_dir,
                             const fs::path& checkpoint, const fs::path& run_dir, const std::string& split,
                             std::uint64_t seed, const Logger& log) {
  RunPaths data{data_dir};
  RunPaths run{run_dir};
  fs::create_directories(run_dir);
  require_file(checkpoint, "checkpoint");
  const auto ck = load_checkpoint(checkpoint.string());
  const auto keep = parse_indices(meta(ck.metadata, "modalities", checkpoint.string()));
  AdaptConfig ac = config.adaptation;
  ac.seed = derive_seed(seed, "adapt/" + split);

  AdaptResult result;
  std::string method;
  if (config.case_kind == CaseKind::case1) {
    const Manifest m = read_required_manifest(data.split_manifest(split));
    result = adapt_test_time(load_split(config, sources, m, keep), ck.bundle, config.augment, ac);
    method = "test-time-stability";
  } else {
    const Manifest m = read_required_manifest(data.train_manifest());
    if (fs::exists(data.split_manifest(split))) {
      const auto target = read_manifest(data.split_manifest(split).string());
      if (auto warn = distribution_mismatch(m.spec, target.spec)) note(log, "warning: " + *warn);
    }
    result = phase2_fit(load_split(config, sources, m, keep), ck.bundle, ac);
    method = "phase2-ce";
  }

  write_weights(run.weights(split).string(),
                WeightsFile{result.weights, hash_file(checkpoint.string()), split, method, seed});
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < result.trace.size(); ++i) rows.push_back(std::to_string(i) + "," + format_real(result.trace[i]));
  write_lines(run.adapt_trace(split), "epoch,objective", rows);
  const auto w = result.weights.w();
  note(log, run_dir.string() + ": " + split + " weights " + format_real(w[0]) + " " + format_real(w[1]) + " " +
                format_real(w[2]));
  return result.weights;
}

EvalRecord evaluate_run(const ExperimentConfig& config, const SourceSet& sources, const fs::path& data_dir,
                        const fs::path& checkpoint, const fs::path& weights, const std::string& split,
                        std::uint64_t seed) {
  RunPaths data{data_dir};
  require_file(checkpoint, "checkpoint");
  require_file(weights, "weights file");
  const auto ck = load_checkpoint(checkpoint.string());
  const auto wf = read_weights(weights.string());
  const auto ck_hash = hash_file(checkpoint.string());
  if (wf.checkpoint_hash != ck_hash) {
    throw Error(weights.string() + " was learned for checkpoint " + wf.checkpoint_hash + ", not " + ck_hash);
  }
  const auto keep = parse_indices(meta(ck.metadata, "modalities", checkpoint.string()));
  const Manifest m = read_required_manifest(data.split_manifest(split));
  const auto test = load_split(config, sources, m, keep);
  const auto logits = compute_expert_logits(ck.bundle, test);
  const auto preds = predict(logits, wf.weights);
  const auto labels = test.labels();
  const int k = config.dataset.num_classes;

  EvalRecord r;
  r.variant = meta(ck.metadata, "variant", checkpoint.string());
  r.train_ir = meta(ck.metadata, "train_ir", checkpoint.string());
  r.test_spec = split;
  r.seed = seed;
  r.accuracy = accuracy(preds, labels);
  r.macro_f1 = macro_f1(preds, labels, k);
  r.binary_f1 = k == 2 ? binary_f1(preds, labels, 1) : std::numeric_limits<double>::quiet_NaN();
  r.weights = wf.weights.w();
  r.per_class_f1 = per_class_f1(preds, labels, k);
  return r;
}

void cmd_prepare_data(const ExperimentConfig& config, const CommandOptions& options) {
  const auto dir = out_dir(config, options);
  const auto seed = run_seed(config, options);
  fs::create_directories(dir);
  const auto sources = open_sources(config);
  const auto manifests = build_manifests(config, sources.ptrs(), config.train, seed);
  RunPaths run{dir};
  write_manifest(run.train_manifest().string(), manifests.train);
  for (const auto& [id, m] : manifests.tests) write_manifest(run.test_manifest(id).string(), m);
  note(options.log, "wrote " + std::to_string(1 + manifests.tests.size()) + " manifests to " + dir.string());
}

void cmd_train(const ExperimentConfig& config, const CommandOptions& options, bool resume) {
  const auto dir = out_dir(config, options);
  const auto sources = open_sources(config);
  train_run(config, sources, dir, dir, config.variant, run_seed(config, options), resume, options.log);
}

void cmd_adapt(const ExperimentConfig& config, const CommandOptions& options, const std::string& checkpoint,
               const std::string& split) {
  const auto dir = out_dir(config, options);
  const auto sources = open_sources(config);
  const fs::path ck = checkpoint.empty() ? RunPaths{dir}.checkpoint() : fs::path(checkpoint);
  adapt_run(config, sources, dir, ck, dir, split, run_seed(config, options), options.log);
}

void cmd_evaluate(const ExperimentConfig& config, const CommandOptions& options, const std::string& checkpoint,
                  const std::map<std::string, std::string>& weights, const std::vector<std::string>& splits) {
  const auto dir = out_dir(config, options);
  RunPaths run{dir};
  const auto sources = open_sources(config);
  const fs::path ck = checkpoint.empty() ? run.checkpoint() : fs::path(checkpoint);
  const auto ids = splits.empty() ? config.test_split_ids() : splits;
  std::vector<EvalRecord> records;
  for (const auto& split : ids) {
    auto it = weights.find(split);
    const fs::path wpath = it != weights.end() ? fs::path(it->second) : run.weights(split);
    records.push_back(evaluate_run(config, sources, dir, ck, wpath, split, run_seed(config, options)));
    note(options.log, split + ": accuracy " + format_real(records.back().accuracy) + " macro F1 " +
                          format_real(records.back().macro_f1));
  }
  write_results_csv(run.results().string(), records);
  const auto summary = summarize_grid(records);
  write_summary_csv(run.summary().string(), summary);
  write_plots(dir / "plots", summary);
}

ReportResult cmd_report(const ExperimentConfig& config, const CommandOptions& options) {
  const auto root = out_dir(config, options);
  fs::create_directories(root);
  const auto sources = open_sources(config);
  const auto trains = config.grid.train.empty() ? std::vector<DistributionSpec>{config.train} : config.grid.train;
  const auto variants = config.grid.variants.empty() ? std::vector<Variant>{config.variant} : config.grid.variants;
  const auto seeds = options.seed ? std::vector<std::uint64_t>{*options.seed} : config.repetition_seeds();
  const auto splits = config.test_split_ids();

  struct Job {
    DistributionSpec train;
    std::uint64_t seed;
    std::vector<EvalRecord> records;
    std::string error;
  };
  std::vector<Job> jobs;
  for (const auto& t : trains) {
    for (auto s : seeds) jobs.push_back({t, s, {}, {}});
  }

  std::mutex log_mutex;
  Logger log = [&](const std::string& msg) {
    if (!options.log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    options.log(msg);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        const fs::path data_dir = root / job.train.id() / ("seed-" + std::to_string(job.seed));
        fs::create_directories(data_dir);
        const auto manifests = build_manifests(config, sources.ptrs(), job.train, job.seed);
        RunPaths data{data_dir};
        write_manifest(data.train_manifest().string(), manifests.train);
        for (const auto& [id, m] : manifests.tests) write_manifest(data.test_manifest(id).string(), m);
        for (auto v : variants) {
          const fs::path run_dir = data_dir / to_string(v);
          train_run(config, sources, data_dir, run_dir, v, job.seed, false, log);
          const RunPaths run{run_dir};
          for (const auto& split : splits) {
            adapt_run(config, sources, data_dir, run.checkpoint(), run_dir, split, job.seed, log);
            job.records.push_back(
                evaluate_run(config, sources, data_dir, run.checkpoint(), run.weights(split), split, job.seed));
          }
        }
      } catch (const std::exception& e) {
        job.records.clear();
        job.error = job.train.id() + " seed " + std::to_string(job.seed) + ": " + e.what();
        log("error: " + job.error);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.parallel_reps, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic order: train spec, variant, test split, seed.
  ReportResult result;
  for (const auto& t : trains) {
    for (auto v : variants) {
      for (const auto& split : splits) {
        for (const auto& job : jobs) {
          if (!(job.train == t)) continue;
          for (const auto& r : job.records) {
            if (r.variant == to_string(v) && r.test_spec == split) result.records.push_back(r);
          }
        }
      }
    }
  }
  std::vector<std::uint64_t> failed;
  for (const auto& job : jobs) {
    if (!job.error.empty()) {
      result.failures.push_back(job.error);
      failed.push_back(job.seed);
    }
  }
  if (result.records.empty()) {
    std::string msg = "every repetition failed";
    for (const auto& f : result.failures) msg += "; " + f;
    throw Error(msg);
  }
  result.summary = summarize_grid(result.records);
  for (auto& r : result.summary) {
    for (const auto& job : jobs) {
      if (!job.error.empty() && ratio_label(job.train) == r.train_ir) {
        r.partial = true;
        r.failed_seeds.push_back(job.seed);
        r.failures.push_back(job.error);
      }
    }
  }
  RunPaths out{root};
  write_results_csv(out.results().string(), result.records);
  write_summary_csv(out.summary().string(), result.summary);
  write_plots(root / "plots", result.summary);
  return result;
}

}  // namespace ltmx
