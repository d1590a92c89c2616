#include "fgt/experiment.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "fgt/checkpoint.hpp"
#include "fgt/data/io.hpp"
#include "fgt/data/synthetic.hpp"
#include "fgt/evaluate.hpp"
#include "json.hpp"
#include "json_util.hpp"

namespace fgt {

namespace {

using json = nlohmann::json;

using detail::reject_unknown;

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string_view to_string(DatasetSource s) {
  switch (s) {
    case DatasetSource::Synthetic: return "synthetic";
    case DatasetSource::PixelCsv: return "fer_csv";
    case DatasetSource::Manifest: return "manifest";
  }
  return "?";
}

DatasetRef ref_from_json(const json& j, DatasetRef ref, const std::string& where, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::string type = j.value("type", std::string(to_string(ref.type)));
  if (type == "synthetic") {
    reject_unknown(j, {"type", "shift", "params", "train_per_class", "val_per_class", "test_per_class", "seed"}, where);
    ref.type = DatasetSource::Synthetic;
    ref.shift = j.value("shift", ref.shift);
    if (j.contains("params")) ref.params = resolve_path(j.at("params").get<std::string>(), base);
    ref.train_per_class = j.value("train_per_class", ref.train_per_class);
    ref.val_per_class = j.value("val_per_class", ref.val_per_class);
    ref.test_per_class = j.value("test_per_class", ref.test_per_class);
    ref.data_seed = j.value("seed", ref.data_seed);
  } else if (type == "fer_csv") {
    reject_unknown(j, {"type", "path"}, where);
    ref.type = DatasetSource::PixelCsv;
    ref.path = resolve_path(j.at("path").get<std::string>(), base);
  } else if (type == "manifest") {
    reject_unknown(j, {"type", "path", "split"}, where);
    ref.type = DatasetSource::Manifest;
    ref.path = resolve_path(j.at("path").get<std::string>(), base);
    if (j.contains("split")) {
      const json& s = j.at("split");
      reject_unknown(s, {"train", "val", "test", "subject_disjoint", "seed"}, where + ".split");
      ref.split.train = s.value("train", ref.split.train);
      ref.split.val = s.value("val", ref.split.val);
      ref.split.test = s.value("test", ref.split.test);
      ref.split.subject_disjoint = s.value("subject_disjoint", ref.split.subject_disjoint);
      ref.split.seed = s.value("seed", ref.split.seed);
    }
  } else {
    throw ConfigError(where + ": unknown dataset type '" + type + "' (expected synthetic, fer_csv or manifest)");
  }
  return ref;
}

json ref_to_json(const DatasetRef& ref) {
  switch (ref.type) {
    case DatasetSource::Synthetic: {
      json j{{"type", "synthetic"},
             {"shift", ref.shift},
             {"train_per_class", ref.train_per_class},
             {"val_per_class", ref.val_per_class},
             {"test_per_class", ref.test_per_class},
             {"seed", ref.data_seed}};
      if (!ref.params.empty()) j["params"] = ref.params.string();
      return j;
    }
    case DatasetSource::PixelCsv:
      return {{"type", "fer_csv"}, {"path", ref.path.string()}};
    case DatasetSource::Manifest:
      return {{"type", "manifest"},
              {"path", ref.path.string()},
              {"split", {{"train", ref.split.train},
                         {"val", ref.split.val},
                         {"test", ref.split.test},
                         {"subject_disjoint", ref.split.subject_disjoint},
                         {"seed", ref.split.seed}}}};
  }
  return {};
}

json config_json(const ExperimentConfig& c, bool with_location) {
  json strategies = json::array();
  for (auto k : c.strategies) strategies.push_back(std::string(to_string(k)));
  json j{{"source", ref_to_json(c.source)},
         {"target", ref_to_json(c.target)},
         {"strategies", strategies},
         {"fractions", c.fractions},
         {"seeds", c.seeds},
         {"hyper", detail::hyper_to_json(c.hyper)},
         {"arch", std::string(to_string(c.arch))},
         {"record_wall_time", c.record_wall_time}};
  if (with_location) {
    j["out"] = c.out.string();
    j["workers"] = c.workers;
  }
  return j;
}

void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RowKey {
  StrategyKind kind;
  double fraction;
  std::uint64_t seed;

  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

RowKey key_of(const ExperimentResult& r) { return {r.strategy, r.fraction, r.seed}; }

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(n)); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::string epoch_log_text(const ExecutionResult& r) {
  std::string s = "epoch\ttrain_loss\tval_accuracy\tsamples\n";
  for (const auto& e : r.log)
    s += std::to_string(e.epoch) + '\t' + format_double(e.train_loss) + '\t' + format_double(e.val_accuracy) + '\t' +
         std::to_string(e.samples) + '\n';
  s += "best_epoch\t" + std::to_string(r.best_epoch) + '\n';
  return s;
}

}  // namespace

DatasetRef DatasetRef::default_source() { return DatasetRef{}; }

DatasetRef DatasetRef::default_target() {
  DatasetRef ref;
  ref.shift = kDefaultShift;
  ref.train_per_class = 30;
  ref.val_per_class = 10;
  ref.test_per_class = 40;
  ref.data_seed = 2;
  return ref;
}

std::string DatasetRef::describe() const {
  std::ostringstream os;
  switch (type) {
    case DatasetSource::Synthetic:
      os << "synthetic(shift=" << format_double(shift) << ",n=" << train_per_class << '/' << val_per_class << '/'
         << test_per_class << ",seed=" << data_seed;
      if (!params.empty()) os << ",params=" << params.string();
      os << ')';
      break;
    case DatasetSource::PixelCsv:
      os << "fer_csv(" << path.string() << ')';
      break;
    case DatasetSource::Manifest:
      os << "manifest(" << path.string() << ')';
      break;
  }
  return os.str();
}

DataSplits resolve(const DatasetRef& ref, const std::string& name) {
  DataSplits out;
  switch (ref.type) {
    case DatasetSource::Synthetic: {
      if (ref.train_per_class == 0 || ref.val_per_class == 0 || ref.test_per_class == 0)
        throw ConfigError(name + ": synthetic subsets need at least one sample per class");
      DomainParams base = default_source_domain();
      if (!ref.params.empty()) {
        require_file(ref.params, name + " domain params");
        base = load_domain_params(ref.params);
      }
      const DomainParams p = shifted_domain(base, ref.shift);
      out.train = gen_synthetic_domain(p, ref.train_per_class, ref.data_seed << 2 | 0, name);
      out.val = gen_synthetic_domain(p, ref.val_per_class, ref.data_seed << 2 | 1, name);
      out.test = gen_synthetic_domain(p, ref.test_per_class, ref.data_seed << 2 | 2, name);
      break;
    }
    case DatasetSource::PixelCsv: {
      require_file(ref.path, name + " pixel CSV");
      auto splits = load_pixel_csv(ref.path);
      out = {std::move(splits.train), std::move(splits.val), std::move(splits.test)};
      break;
    }
    case DatasetSource::Manifest: {
      require_file(ref.path, name + " manifest");
      auto s = split(load_image_manifest(ref.path), ref.split);
      out = {std::move(s.train), std::move(s.val), std::move(s.test)};
      break;
    }
  }
  for (Dataset* ds : {&out.train, &out.val, &out.test}) {
    ds->name = name;
    for (auto& s : ds->samples) s.origin = name;
    validate(*ds);
  }
  if (out.train.empty() || out.val.empty() || out.test.empty())
    throw DataError(name + ": train, validation and test subsets must all be non-empty");
  return out;
}

ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  try {
    reject_unknown(j, {"source", "target", "strategies", "fractions", "seeds", "hyper", "out", "arch",
                       "record_wall_time", "workers"},
                   "config");
    if (j.contains("source")) c.source = ref_from_json(j.at("source"), c.source, "config.source", base_dir);
    if (j.contains("target")) c.target = ref_from_json(j.at("target"), c.target, "config.target", base_dir);
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_string(s.get<std::string>()));
    }
    if (j.contains("fractions")) c.fractions = j.at("fractions").get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("hyper")) detail::update_hyper(j.at("hyper"), c.hyper, "config.hyper");
    if (j.contains("out")) c.out = resolve_path(j.at("out").get<std::string>(), base_dir);
    if (j.contains("arch")) c.arch = architecture_from_string(j.at("arch").get<std::string>());
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  require_file(path, "config");
  return config_from_json(read_text(path), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& config) { return config_json(config, true).dump(2) + "\n"; }

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (c.fractions.empty()) throw ConfigError("config: at least one fraction is required");
  for (double f : c.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("config: fraction " + format_double(f) + " outside (0,1]");
  if (c.workers < 1) throw ConfigError("config: workers must be >= 1");
  detail::validate_hyper(c.hyper, "config");
  auto unique = [](auto v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!unique(c.seeds) || !unique(c.fractions) || !unique(c.strategies))
    throw ConfigError("config: seeds, fractions and strategies must not repeat");
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_json(config, false).dump();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData d{resolve(config.source, "source"), resolve(config.target, "target")};
  if (d.source.train.class_names != d.target.train.class_names)
    throw DataError("source and target datasets use different label spaces");
  return d;
}

std::string cell_stem(StrategyKind kind, double fraction, std::uint64_t seed) {
  return std::string(to_string(kind)) + "_f" + format_double(fraction) + "_s" + std::to_string(seed);
}

MatrixOutcome run_matrix(const ExperimentConfig& config, const LogSink& log) {
  validate(config);
  return run_matrix(config, load_experiment_data(config), log);
}

MatrixOutcome run_matrix(const ExperimentConfig& config, const ExperimentData& data, const LogSink& log) {
  validate(config);
  namespace fs = std::filesystem;
  const fs::path out = config.out;
  const fs::path results_path = out / "results.csv";
  const fs::path hash_path = out / "config.hash";
  const std::string hash = config_hash(config);

  std::mutex mu;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(mu);
    log(msg);
  };

  std::map<RowKey, ExperimentResult> rows;
  if (fs::exists(results_path) || fs::exists(hash_path)) {
    const std::string old = fs::exists(hash_path) ? read_text(hash_path) : "";
    if (old != hash + "\n")
      throw ConfigError("output directory " + out.string() +
                        " holds results of a different configuration; choose another --out");
    if (fs::exists(results_path))
      for (auto& r : read_results_csv(results_path)) rows[key_of(r)] = std::move(r);
  }
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(config));
  write_text(hash_path, hash + "\n");
  write_text(out / "failures.jsonl", "");

  MatrixOutcome outcome;
  auto record = [&](const ExperimentResult& r) {
    std::lock_guard lock(mu);
    rows[key_of(r)] = r;
    std::vector<ExperimentResult> all;
    for (const auto& [k, v] : rows) all.push_back(v);
    write_results_csv(results_path, std::move(all));
    ++outcome.computed;
  };
  auto fail = [&](const RowKey& k, const std::string& what) {
    std::lock_guard lock(mu);
    ++outcome.failed;
    json j{{"strategy", std::string(to_string(k.kind))}, {"fraction", k.fraction}, {"seed", k.seed}, {"error", what}};
    std::ofstream(out / "failures.jsonl", std::ios::app) << j.dump() << '\n';
    if (log) log("cell " + cell_stem(k.kind, k.fraction, k.seed) + " failed: " + what);
  };

  const std::string source_ref = config.source.describe();
  const std::string target_ref = config.target.describe();
  auto checkpoint_rel = [](StrategyKind k, double f, std::uint64_t s) {
    return "checkpoints/" + cell_stem(k, f, s) + ".fgtb";
  };

  // Runs one cell end to end: train, evaluate on both test sets, audit, persist.
  auto run_cell = [&](const StrategyPlan& plan, const Dataset& target_train, double fraction,
                      const ExperimentResult* baseline) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string stem = cell_stem(plan.kind, fraction, plan.seed);
    say("cell " + stem + ": training on " + std::string(to_string(plan.train_data)) + " data");
    save_plan(plan, out / "plans" / (stem + ".json"));
    const TrainingData td{&data.source.train, &data.source.val, &target_train, &data.target.val};
    auto result = execute(plan, td, [&](const EpochRecord& e) {
      say("cell " + stem + ": epoch " + std::to_string(e.epoch) + " loss " + format_double(e.train_loss) +
          " val " + format_double(e.val_accuracy));
    });
    const AuditReport audit = freeze_audit(initial_network(plan), result.model, plan);
    write_text(out / "audits" / (stem + ".txt"), audit.to_text());
    if (!audit.passed) throw IntegrityError("freeze audit failed for " + stem);
    write_text(out / "logs" / (stem + ".tsv"), epoch_log_text(result));
    const std::string rel = checkpoint_rel(plan.kind, fraction, plan.seed);
    save_checkpoint(result.model, out / rel);

    ExperimentResult r;
    r.strategy = plan.kind;
    r.fraction = fraction;
    r.seed = plan.seed;
    r.source_test_acc = evaluate(result.model, data.source.test).accuracy;
    r.target_test_acc = evaluate(result.model, data.target.test).accuracy;
    if (baseline) {
      r.delta_source = r.source_test_acc - baseline->source_test_acc;
      r.delta_target = r.target_test_acc - baseline->target_test_acc;
    }
    r.epochs_run = result.epochs_run;
    if (config.record_wall_time)
      r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.checkpoint = rel;
    say("cell " + stem + ": source " + format_double(r.source_test_acc) + " target " +
        format_double(r.target_test_acc));
    return r;
  };

  // Baselines, one per seed.
  std::map<std::uint64_t, ExperimentResult> baselines;
  parallel_for(config.seeds.size(), config.workers, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const RowKey key{StrategyKind::BL, 1.0, seed};
    {
      std::lock_guard lock(mu);
      auto it = rows.find(key);
      if (it != rows.end() && fs::exists(out / it->second.checkpoint)) {
        baselines[seed] = it->second;
        ++outcome.skipped;
        return;
      }
    }
    try {
      const auto plan = make_plan(StrategyKind::BL, source_ref, target_ref, config.hyper, seed, config.arch);
      auto r = run_cell(plan, data.target.train, 1.0, nullptr);
      record(r);
      std::lock_guard lock(mu);
      baselines[seed] = r;
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  });

  std::vector<RowKey> cells;
  for (auto kind : kAllStrategies) {
    if (kind == StrategyKind::BL ||
        std::find(config.strategies.begin(), config.strategies.end(), kind) == config.strategies.end())
      continue;
    for (double f : config.fractions)
      for (auto seed : config.seeds) cells.push_back({kind, f, seed});
  }
  parallel_for(cells.size(), config.workers, [&](std::size_t i) {
    const RowKey key = cells[i];
    std::optional<ExperimentResult> baseline;
    {
      std::lock_guard lock(mu);
      if (rows.count(key)) {
        ++outcome.skipped;
        return;
      }
      if (auto it = baselines.find(key.seed); it != baselines.end()) baseline = it->second;
    }
    try {
      if (!baseline) throw Error("baseline for seed " + std::to_string(key.seed) + " is unavailable");
      const auto plan = make_plan(key.kind, source_ref, target_ref, config.hyper, key.seed, config.arch,
                                  out / baseline->checkpoint);
      const Dataset target_train = take_fraction(data.target.train, key.fraction, key.seed);
      record(run_cell(plan, target_train, key.fraction, &*baseline));
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  });

  for (const auto& [k, v] : rows) outcome.results.push_back(v);
  sort_canonical(outcome.results);
  write_results_csv(results_path, outcome.results);
  write_text(out / "summary.json", summary_to_json(aggregate(outcome.results)));
  return outcome;
}

}  // namespace fgt
