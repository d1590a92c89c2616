#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fgt/data/synthetic.hpp"
#include "fgt/evaluate.hpp"
#include "fgt/experiment.hpp"
#include "fgt/results.hpp"
#include "json.hpp"

using namespace fgt;
namespace fs = std::filesystem;

namespace {

const Dataset& small_test_set() {
  static const Dataset d = gen_synthetic_domain(default_source_domain(), 3, 77, "source");
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentResult row(StrategyKind k, double f, std::uint64_t seed, double src, double tgt, double ds, double dt) {
  ExperimentResult r;
  r.strategy = k;
  r.fraction = f;
  r.seed = seed;
  r.source_test_acc = src;
  r.target_test_acc = tgt;
  r.delta_source = ds;
  r.delta_target = dt;
  r.epochs_run = 3;
  r.checkpoint = "checkpoints/" + cell_stem(k, f, seed) + ".fgtb";
  return r;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.source.train_per_class = 4;
  c.source.val_per_class = 1;
  c.source.test_per_class = 2;
  c.target.train_per_class = 2;
  c.target.val_per_class = 1;
  c.target.test_per_class = 2;
  c.seeds = {1};
  c.hyper.epochs = 1;
  c.hyper.batch_size = 8;
  c.out = out;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fgt_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("evaluate") {
  TEST_CASE("a constant-class model scores 1/7 on a balanced set") {
    Network net = build_baseline(1, Architecture::Desk);
    auto& fc3 = std::get<DenseLayer>(net.layer("fc3").state);
    std::fill(fc3.weight.value.values().begin(), fc3.weight.value.values().end(), 0.0);
    std::fill(fc3.bias.value.values().begin(), fc3.bias.value.values().end(), 0.0);
    fc3.bias.value[3] = 10.0;
    const auto ev = evaluate(net, small_test_set());
    CHECK(ev.accuracy == doctest::Approx(1.0 / 7.0));
    CHECK(ev.total == 21);
    CHECK(ev.correct == 3);
    for (int c = 0; c < kNumClasses; ++c) CHECK(ev.confusion[c][3] == 3);
  }

  TEST_CASE("empty test sets are errors") {
    const Dataset empty{"x", {}, kClassNames};
    CHECK_THROWS_AS(evaluate(build_baseline(1, Architecture::Desk), empty), DataError);
  }

  TEST_CASE("matches a per-sample oracle and ignores order and batch size") {
    const Network net = build_baseline(4, Architecture::Desk);
    const auto& data = small_test_set();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto logits = net.predict(make_batch(data, std::vector<std::size_t>{i}).images);
      if (argmax_row(logits, 0) == data.samples[i].label) ++correct;
    }
    const auto ev = evaluate(net, data);
    CHECK(ev.correct == correct);
    CHECK(evaluate(net, data, 5).confusion == ev.confusion);

    Dataset shuffled = data;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), rng);
    CHECK(evaluate(net, shuffled).confusion == ev.confusion);
  }

  TEST_CASE("argmax ties go to the lowest index") {
    const Tensor logits({2, 3}, {1.0, 5.0, 5.0, 2.0, 2.0, 2.0});
    CHECK(argmax_row(logits, 0) == 1);
    CHECK(argmax_row(logits, 1) == 0);
  }
}

TEST_SUITE("results") {
  TEST_CASE("doubles survive text round trips exactly") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(rng) * std::pow(10.0, i % 9 - 4);
      CHECK(parse_double(format_double(v), "t") == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
    CHECK_THROWS_AS(parse_double("0.5x", "t"), DataError);
  }

  TEST_CASE("rows round-trip through CSV in canonical order") {
    const auto dir = fresh_dir("csv");
    std::vector<ExperimentResult> rows{row(StrategyKind::FU, 1.0, 2, 0.9, 0.8, -0.01, 0.5),
                                       row(StrategyKind::BL, 1.0, 1, 0.95, 0.3, 0.0, 0.0),
                                       row(StrategyKind::FT_FC, 0.5, 2, 0.6, 0.7, -1.0 / 3.0, 0.4),
                                       row(StrategyKind::FT_FC, 0.5, 1, 0.6, 0.7, -0.3, 0.4)};
    rows[0].wall_time_s = 12.25;
    write_results_csv(dir / "r.csv", rows);
    const auto back = read_results_csv(dir / "r.csv");
    REQUIRE(back.size() == 4);
    CHECK(back[0].strategy == StrategyKind::BL);
    CHECK(back[1].seed == 1);
    CHECK(back[2].delta_source == -1.0 / 3.0);
    CHECK(back[3] == rows[0]);
    CHECK(slurp(dir / "r.csv").rfind(std::string(kResultsHeader) + "\n", 0) == 0);

    write_results_csv(dir / "r2.csv", back);
    CHECK(slurp(dir / "r.csv") == slurp(dir / "r2.csv"));
  }

  TEST_CASE("malformed result files are rejected") {
    const auto dir = fresh_dir("bad_csv");
    std::ofstream(dir / "a.csv") << "strategy,fraction\nBL,1\n";
    CHECK_THROWS_AS(read_results_csv(dir / "a.csv"), DataError);
    std::ofstream(dir / "b.csv") << kResultsHeader << "\nBL,1,1,0.5\n";
    CHECK_THROWS_AS(read_results_csv(dir / "b.csv"), DataError);
    std::ofstream(dir / "c.csv") << kResultsHeader << "\nXX,1,1,0.5,0.5,0,0,1,0,c\n";
    CHECK_THROWS(read_results_csv(dir / "c.csv"));
  }

  TEST_CASE("describe on hand-computed values") {
    const std::vector<double> one{0.25};
    const auto s1 = describe(one);
    CHECK(s1.mean == 0.25);
    CHECK(s1.min == 0.25);
    CHECK(s1.max == 0.25);
    CHECK(s1.n == 1);
    const std::vector<double> pair{-0.375, 0.375};
    CHECK(describe(pair).mean == 0.0);
    const std::vector<double> four{0.5, 0.25, 0.125, 1.0};
    const auto s4 = describe(four);
    CHECK(s4.mean == 0.46875);
    CHECK(s4.min == 0.125);
    CHECK(s4.max == 1.0);
  }

  TEST_CASE("aggregate groups by strategy and ranks, with Pareto dominance") {
    const std::vector<ExperimentResult> rows{
        row(StrategyKind::BL, 1.0, 1, 1.0, 0.25, 0.0, 0.0),
        row(StrategyKind::FT_FC, 0.5, 1, 0.5, 0.5, -0.5, 0.25),
        row(StrategyKind::FT_FC, 1.0, 1, 0.5, 0.75, -0.5, 0.5),
        row(StrategyKind::FU, 0.5, 1, 1.0, 0.75, 0.0, 0.5),
        row(StrategyKind::FU, 1.0, 1, 1.0, 1.0, 0.0, 0.75),
    };
    const auto s = aggregate(rows);
    REQUIRE(s.strategies.size() == 3);
    const auto* ft = s.find(StrategyKind::FT_FC);
    REQUIRE(ft);
    CHECK(ft->rows == 2);
    CHECK(ft->delta_target.mean == 0.375);
    CHECK(ft->score == -0.125);
    CHECK(ft->target_acc_by_fraction.at(0.5) == 0.5);
    CHECK(ft->target_acc_by_fraction.at(1.0) == 0.75);
    CHECK(ft->dominated_by == std::vector<StrategyKind>{StrategyKind::FU});
    CHECK(s.find(StrategyKind::FU)->dominated_by.empty());
    CHECK(s.find(StrategyKind::RE) == nullptr);
    CHECK(s.ranking == std::vector<StrategyKind>{StrategyKind::FU, StrategyKind::FT_FC, StrategyKind::BL});

    const auto j = nlohmann::json::parse(summary_to_json(s));
    CHECK(j.at("strategies").at("FU").at("delta_target").at("mean") == 0.625);
    CHECK(j.at("ranking").at(0) == "FU");
    CHECK(j.at("strategies").at("FT_FC").at("pareto_dominated_by").at(0) == "FU");
  }

  TEST_CASE("plot CSV has two lines per row") {
    const std::vector<ExperimentResult> rows{row(StrategyKind::RE, 0.5, 2, 0.5, 0.75, -0.25, 0.5)};
    CHECK(plot_csv(rows) == "strategy,fraction,seed,test_set,accuracy\nRE,0.5,2,source,0.5\nRE,0.5,2,target,0.75\n");
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const auto c = config_from_json("{}");
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(c.fractions == std::vector<double>{0.5, 1.0});
    CHECK(c.strategies.size() == 5);
    CHECK(c.target.shift == kDefaultShift);
    CHECK(c.source.train_per_class == 200);
    CHECK(c.target.train_per_class == 30);
    CHECK(c.hyper.patience == 10);
    CHECK(c.hyper.epochs == 100);
    CHECK(c.hyper.finetune_lr_scale == 0.1);
    CHECK(c.hyper.lr_decay_epochs == 0);
    CHECK(c.arch == Architecture::Desk);
  }

  TEST_CASE("round trip and hash") {
    auto c = config_from_json(R"({"seeds":[4],"fractions":[0.25],"hyper":{"epochs":7,"optimizer":"sgd-momentum","lr_decay_epochs":4},
                                 "target":{"shift":0.3,"train_per_class":5}})");
    CHECK(c.seeds == std::vector<std::uint64_t>{4});
    CHECK(c.hyper.epochs == 7);
    CHECK(c.hyper.optimizer == OptimizerKind::SgdMomentum);
    CHECK(c.hyper.lr_decay_epochs == 4);
    CHECK(c.target.shift == 0.3);
    const auto again = config_from_json(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));
    CHECK(config_hash(again) == config_hash(c));
    auto moved = c;
    moved.out = "elsewhere";
    moved.workers = 4;
    CHECK(config_hash(moved) == config_hash(c));
    moved.hyper.epochs = 8;
    CHECK(config_hash(moved) != config_hash(c));
  }

  TEST_CASE("bad configs are rejected") {
    CHECK_THROWS_AS(config_from_json(R"({"seed":[1]})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"hyper":{"lr":0.1}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"source":{"type":"imagenet"}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{"), ConfigError);
    CHECK_THROWS_AS(validate(config_from_json(R"({"seeds":[]})")), ConfigError);
    CHECK_THROWS_AS(validate(config_from_json(R"({"fractions":[0]})")), ConfigError);
    CHECK_THROWS_AS(validate(config_from_json(R"({"fractions":[1.5]})")), ConfigError);
    CHECK_THROWS_AS(resolve(config_from_json(R"({"source":{"type":"fer_csv","path":"/nonexistent.csv"}})").source,
                            "source"),
                    ConfigError);
  }

  TEST_CASE("relative paths resolve against the config directory") {
    const auto c = config_from_json(R"({"source":{"type":"fer_csv","path":"data/fer.csv"}})", "/base/dir");
    CHECK(c.source.path == fs::path("/base/dir/data/fer.csv"));
  }
}

TEST_SUITE("matrix") {
  TEST_CASE("a tiny matrix runs, resumes and refuses a changed config") {
    const auto dir = fresh_dir("matrix");
    const auto config = tiny_config(dir / "out");
    const auto first = run_matrix(config);
    CHECK(first.failed == 0);
    CHECK(first.computed == 9);
    REQUIRE(first.results.size() == 9);
    for (const auto& r : first.results) {
      CHECK(fs::exists(dir / "out" / r.checkpoint));
      if (r.strategy == StrategyKind::BL) {
        CHECK(r.delta_source == 0.0);
        CHECK(r.delta_target == 0.0);
        CHECK(r.fraction == 1.0);
      }
      CHECK(r.wall_time_s == 0.0);
    }
    for (const auto& entry : fs::directory_iterator(dir / "out" / "audits"))
      CHECK(slurp(entry.path()).find("PASS") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "summary.json"));
    const std::string csv = slurp(dir / "out" / "results.csv");

    // Drop one cell and resume.
    {
      std::istringstream in(csv);
      std::ostringstream kept;
      std::string line;
      while (std::getline(in, line))
        if (line.rfind("RE,0.5,", 0) != 0) kept << line << '\n';
      std::ofstream(dir / "out" / "results.csv", std::ios::binary) << kept.str();
    }
    const auto second = run_matrix(config);
    CHECK(second.computed == 1);
    CHECK(second.skipped == 8);
    CHECK(slurp(dir / "out" / "results.csv") == csv);

    auto changed = config;
    changed.hyper.epochs = 2;
    CHECK_THROWS_AS(run_matrix(changed), ConfigError);
  }

  TEST_CASE("parallel workers give the same results file") {
    const auto dir = fresh_dir("parallel");
    auto config = tiny_config(dir / "seq");
    config.strategies = {StrategyKind::BL, StrategyKind::FT_FC, StrategyKind::FU};
    config.fractions = {1.0};
    run_matrix(config);
    config.out = dir / "par";
    config.workers = 2;
    run_matrix(config);
    CHECK(slurp(dir / "seq" / "results.csv") == slurp(dir / "par" / "results.csv"));
    CHECK(slurp(dir / "seq" / "checkpoints" / "FU_f1_s1.fgtb") == slurp(dir / "par" / "checkpoints" / "FU_f1_s1.fgtb"));
  }

  TEST_CASE("cell stems") {
    CHECK(cell_stem(StrategyKind::FT_FC, 0.5, 1) == "FT_FC_f0.5_s1");
    CHECK(cell_stem(StrategyKind::BL, 1.0, 3) == "BL_f1_s3");
  }
}
