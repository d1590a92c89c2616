// fgtbench: command-line front end for training, adaptation experiments and reports.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fgt/checkpoint.hpp"
#include "fgt/data/io.hpp"
#include "fgt/data/synthetic.hpp"
#include "fgt/evaluate.hpp"
#include "fgt/experiment.hpp"
#include "fgt/results.hpp"
#include "fgt/strategy.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

bool g_quiet = false;

void log_line(std::string_view msg) {
  if (g_quiet) return;
  std::cerr << "[fgtbench] " << msg << '\n';
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string arch;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--arch", o.arch, "Architecture variant")->check(CLI::IsMember({"paper", "desk"}));
}

fgt::ExperimentConfig make_config(const CommonOptions& o) {
  fgt::ExperimentConfig c = o.config.empty() ? fgt::ExperimentConfig{} : fgt::load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.out = o.out;
  if (!o.arch.empty()) c.arch = fgt::architecture_from_string(o.arch);
  fgt::validate(c);
  return c;
}

json evaluation_json(const fgt::Evaluation& ev) {
  json confusion = json::array();
  for (const auto& row : ev.confusion) confusion.push_back(row);
  return {{"accuracy", ev.accuracy}, {"correct", ev.correct}, {"total", ev.total}, {"confusion", confusion}};
}

int cmd_train_baseline(const CommonOptions& o) {
  const auto config = make_config(o);
  const auto data = fgt::load_experiment_data(config);
  json out = json::array();
  for (auto seed : config.seeds) {
    const auto plan = fgt::make_plan(fgt::StrategyKind::BL, config.source.describe(), config.target.describe(),
                                     config.hyper, seed, config.arch);
    const fgt::TrainingData td{&data.source.train, &data.source.val, &data.target.train, &data.target.val};
    log_line("training BL seed " + std::to_string(seed) + " (" + std::string(fgt::to_string(config.arch)) + ")");
    const auto result = fgt::execute(plan, td, [](const fgt::EpochRecord& e) {
      log_line("epoch " + std::to_string(e.epoch) + " loss " + fgt::format_double(e.train_loss) + " val " +
               fgt::format_double(e.val_accuracy));
    });
    const fs::path ckpt = fs::path(config.out) / "checkpoints" / (fgt::cell_stem(plan.kind, 1.0, seed) + ".fgtb");
    fgt::save_checkpoint(result.model, ckpt);
    fgt::save_plan(plan, fs::path(config.out) / "plans" / (fgt::cell_stem(plan.kind, 1.0, seed) + ".json"));
    out.push_back({{"seed", seed},
                   {"checkpoint", ckpt.string()},
                   {"epochs_run", result.epochs_run},
                   {"best_epoch", result.best_epoch},
                   {"source_test_acc", fgt::evaluate(result.model, data.source.test).accuracy},
                   {"target_test_acc", fgt::evaluate(result.model, data.target.test).accuracy}});
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_run(const CommonOptions& o, int workers) {
  auto config = make_config(o);
  if (workers > 0) config.workers = workers;
  fgt::validate(config);
  log_line("running matrix into " + config.out.string());
  const auto outcome = fgt::run_matrix(config, log_line);
  log_line(std::to_string(outcome.computed) + " cells computed, " + std::to_string(outcome.skipped) + " reused, " +
           std::to_string(outcome.failed) + " failed");
  std::cout << (config.out / "results.csv").string() << '\n';
  return outcome.failed ? kExitRuntime : kExitOk;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  const auto config = make_config(o);
  const auto data = fgt::load_experiment_data(config);
  const auto net = fgt::load_checkpoint(checkpoint);
  const json out{{"checkpoint", checkpoint},
                 {"source", evaluation_json(fgt::evaluate(net, data.source.test))},
                 {"target", evaluation_json(fgt::evaluate(net, data.target.test))}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_gen_data(const CommonOptions& o, std::optional<double> shift) {
  auto config = make_config(o);
  if (o.seed) {
    config.source.data_seed = *o.seed;
    config.target.data_seed = *o.seed + 1;
  }
  if (shift) config.target.shift = *shift;
  const fs::path out = o.out.empty() ? fs::path("data") : fs::path(o.out);
  fs::create_directories(out);
  for (auto [ref, name] : {std::pair{&config.source, "source"}, std::pair{&config.target, "target"}}) {
    if (ref->type != fgt::DatasetSource::Synthetic)
      throw fgt::ConfigError(std::string("gen-data: ") + name + " is not a synthetic dataset");
    auto splits = fgt::resolve(*ref, name);
    const fs::path csv = out / (std::string(name) + ".csv");
    fgt::write_pixel_csv(csv, {std::move(splits.train), std::move(splits.val), std::move(splits.test)});
    const auto base = ref->params.empty() ? fgt::default_source_domain() : fgt::load_domain_params(ref->params);
    fgt::save_domain_params(fgt::shifted_domain(base, ref->shift), out / (std::string(name) + "_params.json"));
    log_line("wrote " + csv.string());
    std::cout << csv.string() << '\n';
  }
  return kExitOk;
}

int cmd_audit(const std::string& before, const std::string& after, const std::string& plan_path) {
  const auto plan = fgt::load_plan(plan_path);
  const auto report = fgt::freeze_audit(before, after, plan);
  std::cout << report.to_text();
  return report.passed ? kExitOk : kExitRuntime;
}

int cmd_report(const CommonOptions& o, std::string results) {
  const fs::path out = o.out.empty() ? (results.empty() ? fs::path("results") : fs::path(results).parent_path())
                                     : fs::path(o.out);
  if (results.empty()) results = (out / "results.csv").string();
  if (!fs::exists(results)) throw fgt::ConfigError("no results file at " + results);
  const auto rows = fgt::read_results_csv(results);
  const auto summary = fgt::aggregate(rows);
  const std::string text = fgt::summary_to_json(summary);
  fs::create_directories(out);
  std::ofstream(out / "summary.json", std::ios::binary) << text;
  std::ofstream(out / "plot.csv", std::ios::binary) << fgt::plot_csv(rows);
  log_line("wrote " + (out / "summary.json").string() + " and " + (out / "plot.csv").string());
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forgetting and plasticity benchmark for CNN transfer strategies"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", g_quiet, "Suppress log output");

  CommonOptions common;
  int workers = 0;
  std::string checkpoint, before, after, plan, results;
  std::optional<double> shift;

  auto* train = app.add_subcommand("train-baseline", "Train the baseline on the source dataset");
  add_common(train, common);
  auto* run = app.add_subcommand("run", "Run the strategy x fraction x seed matrix");
  add_common(run, common);
  run->add_option("--workers", workers, "Parallel cells (results are identical to a sequential run)")
      ->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the source and target test sets");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic source and target domains to pixel CSV");
  add_common(gen, common);
  gen->add_option("--shift", shift, "Target shift magnitude");
  auto* audit = app.add_subcommand("audit", "Compare two checkpoints against a plan's freeze mask");
  audit->add_option("--before", before, "Checkpoint before training")->required();
  audit->add_option("--after", after, "Checkpoint after training")->required();
  audit->add_option("--plan", plan, "Plan file")->required();
  auto* report = app.add_subcommand("report", "Aggregate results.csv into summary.json and plot.csv");
  add_common(report, common);
  report->add_option("--results", results, "Results CSV (default <out>/results.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train_baseline(common);
    if (*run) return cmd_run(common, workers);
    if (*eval) return cmd_eval(common, checkpoint);
    if (*gen) return cmd_gen_data(common, shift);
    if (*audit) return cmd_audit(before, after, plan);
    if (*report) return cmd_report(common, results);
  } catch (const fgt::ConfigError& e) {
    std::cerr << "fgtbench: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "fgtbench: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
