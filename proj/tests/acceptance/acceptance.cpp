// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fgt/checkpoint.hpp"
#include "fgt/data/io.hpp"
#include "fgt/data/synthetic.hpp"
#include "fgt/evaluate.hpp"
#include "fgt/experiment.hpp"
#include "fgt/grad_check.hpp"
#include "fgt/ops/batchnorm.hpp"
#include "fgt/ops/conv.hpp"
#include "fgt/ops/dense.hpp"
#include "fgt/ops/elementwise.hpp"
#include "fgt/ops/loss.hpp"
#include "fgt/ops/pool.hpp"
#include "fgt/optimizer.hpp"
#include "fgt/results.hpp"
#include "fgt/strategy.hpp"
#include "test_util.hpp"

using namespace fgt;
using fgt::testing::random_extent;
using fgt::testing::random_tensor;
using fgt::testing::weighted_sum;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fgt_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// 1 -------------------------------------------------------------------------

Outcome param_count() {
  const Index n = build_baseline(1, Architecture::Paper).param_count();
  return {n == 19271431, fmt("paper architecture has %lld parameters, expected 19271431", static_cast<long long>(n))};
}

// 2 -------------------------------------------------------------------------

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr int kShapes = 20;

struct LayerCheck {
  int shapes = 0;
  int failures = 0;
  double worst = 0.0;

  void add(const GradCheckReport& r) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) ++failures;
  }
};

std::map<std::string, LayerCheck> run_grad_checks() {
  std::map<std::string, LayerCheck> out;
  std::mt19937_64 rng(2024);

  auto& conv = out["conv"];
  for (int t = 0; t < kShapes; ++t, ++conv.shapes) {
    const Index B = random_extent(rng, 1, 3), C = random_extent(rng, 1, 4), O = random_extent(rng, 1, 4),
                K = random_extent(rng, 1, 3);
    const Index H = random_extent(rng, K, 7), W = random_extent(rng, K, 7);
    const Tensor x = random_tensor({B, C, H, W}, rng), w = random_tensor({O, C, K, K}, rng),
                 b = random_tensor({O}, rng), go = random_tensor({B, O, H - K + 1, W - K + 1}, rng);
    const auto g = conv2d_backward(x, w, go);
    conv.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(conv2d_forward(v, w, b), go); }, x, g.x));
    conv.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(conv2d_forward(x, v, b), go); }, w, g.w));
    conv.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(conv2d_forward(x, w, v), go); }, b, g.b));
  }

  auto& bn = out["batchnorm"];
  for (int t = 0; t < kShapes; ++t, ++bn.shapes) {
    const Index B = random_extent(rng, 2, 5), C = random_extent(rng, 1, 4);
    const Shape shape = t % 2 ? Shape{B, C} : Shape{B, C, random_extent(rng, 1, 4), random_extent(rng, 1, 4)};
    const Tensor x = random_tensor(shape, rng), go = random_tensor(shape, rng),
                 gamma = random_tensor({C}, rng, 0.5, 1.5), beta = random_tensor({C}, rng);
    auto state = BatchNormState<double>::initial(C);
    BatchNormCache<double> cache;
    batchnorm_forward(x, gamma, beta, Mode::Train, state, &cache);
    const auto g = batchnorm_backward(cache, gamma, go);
    auto f = [&](const Tensor& xx, const Tensor& gg, const Tensor& bb) {
      auto s = BatchNormState<double>::initial(C);
      return weighted_sum(batchnorm_forward(xx, gg, bb, Mode::Train, s), go);
    };
    bn.add(grad_check<double>([&](const Tensor& v) { return f(v, gamma, beta); }, x, g.x));
    bn.add(grad_check<double>([&](const Tensor& v) { return f(x, v, beta); }, gamma, g.gamma));
    bn.add(grad_check<double>([&](const Tensor& v) { return f(x, gamma, v); }, beta, g.beta));
  }

  auto& relu = out["relu"];
  for (int t = 0; t < kShapes; ++t, ++relu.shapes) {
    const Tensor x = random_tensor({random_extent(rng, 1, 4), random_extent(rng, 1, 9)}, rng);
    const Tensor go = random_tensor(x.shape(), rng);
    relu.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(relu_forward(v), go); }, x,
                                relu_backward(x, go), kEps, kTol, [&](Index i) { return std::abs(x[i]) <= 1e-3; }));
  }

  auto& pool = out["maxpool"];
  for (int t = 0; t < kShapes; ++t, ++pool.shapes) {
    const Index B = random_extent(rng, 1, 2), C = random_extent(rng, 1, 3), H = random_extent(rng, 2, 8),
                W = random_extent(rng, 2, 8);
    Tensor x({B, C, H, W});
    std::vector<double> vals(static_cast<std::size_t>(x.size()));
    std::iota(vals.begin(), vals.end(), 0.0);
    std::shuffle(vals.begin(), vals.end(), rng);
    for (Index i = 0; i < x.size(); ++i) x[i] = 0.01 * vals[static_cast<std::size_t>(i)];
    const auto r = maxpool2x2_forward(x);
    const Tensor go = random_tensor(r.output.shape(), rng);
    pool.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(maxpool2x2_forward(v).output, go); }, x,
                                maxpool2x2_backward(r.index, go)));
  }

  auto& dense = out["dense"];
  for (int t = 0; t < kShapes; ++t, ++dense.shapes) {
    const Index B = random_extent(rng, 1, 4), I = random_extent(rng, 1, 10), O = random_extent(rng, 1, 8);
    const Tensor x = random_tensor({B, I}, rng), w = random_tensor({O, I}, rng), b = random_tensor({O}, rng),
                 go = random_tensor({B, O}, rng);
    const auto g = dense_backward(x, w, go);
    dense.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(dense_forward(v, w, b), go); }, x, g.x));
    dense.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(dense_forward(x, v, b), go); }, w, g.w));
    dense.add(grad_check<double>([&](const Tensor& v) { return weighted_sum(dense_forward(x, w, v), go); }, b, g.b));
  }

  auto& dropout = out["dropout"];
  for (int t = 0; t < kShapes; ++t, ++dropout.shapes) {
    const Tensor x = random_tensor({random_extent(rng, 1, 4), random_extent(rng, 2, 12)}, rng);
    const Tensor go = random_tensor(x.shape(), rng);
    std::mt19937_64 mask_rng(t);
    const Tensor mask = dropout_forward(x, 0.5, Mode::Train, mask_rng).mask;
    auto f = [&](const Tensor& v) {
      std::mt19937_64 r(t);
      return weighted_sum(dropout_forward(v, 0.5, Mode::Train, r).output, go);
    };
    dropout.add(grad_check<double>(f, x, dropout_backward(mask, go)));
  }

  auto& loss = out["softmax_cross_entropy"];
  for (int t = 0; t < kShapes; ++t, ++loss.shapes) {
    const Index B = random_extent(rng, 1, 6);
    const Tensor logits = random_tensor({B, kNumClasses}, rng, -3.0, 3.0);
    std::vector<int> labels(static_cast<std::size_t>(B));
    for (auto& l : labels) l = static_cast<int>(random_extent(rng, 0, kNumClasses - 1));
    const auto r = softmax_cross_entropy(logits, std::span<const int>(labels));
    loss.add(grad_check<double>([&](const Tensor& v) { return softmax_cross_entropy(v, std::span<const int>(labels)).loss; },
                                logits, r.grad_logits));
  }
  return out;
}

Outcome grad_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_grad_checks();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& [name, c] : checks) {
    ok = ok && c.failures == 0 && c.shapes >= kShapes;
    detail += fmt("%s %d shapes worst %.2e; ", name.c_str(), c.shapes, c.worst);
  }
  return {ok, detail + fmt("%.1fs (limit 60s)", secs)};
}

// 3 -------------------------------------------------------------------------

std::vector<Tensor> layer_snapshot(const Layer& layer) {
  std::vector<Tensor> out;
  for (const Tensor* t : layer.persistent_tensors()) out.push_back(*t);
  return out;
}

Outcome freeze_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch("freeze");
  const auto src = default_source_domain();
  const Dataset source = gen_synthetic_domain(src, 20, 31, "source");
  const Dataset target = gen_synthetic_domain(shifted_domain(src, kDefaultShift), 20, 32, "target");

  // A briefly trained network so running statistics are not at their initial values.
  Hyper warm;
  warm.epochs = 2;
  const TrainingData warm_data{&source, &source, nullptr, nullptr};
  save_checkpoint(execute(make_plan(StrategyKind::BL, "s", "t", warm, 1), warm_data).model, dir / "bl.fgtb");

  const std::map<StrategyKind, std::set<std::string>> expected{
      {StrategyKind::FT_FC, {"fc1", "fc2", "fc3"}},
      {StrategyKind::FT_FC_CL, {"conv5", "bn5", "fc1", "fc2", "fc3"}}};
  bool ok = true;
  std::string detail;
  for (const auto& [kind, want] : expected) {
    Hyper h;
    h.finetune_lr_scale = 1.0;
    const auto plan = make_plan(kind, "s", "t", h, 5, Architecture::Desk, dir / "bl.fgtb");
    Network net = initial_network(plan);
    const Network before = net;
    net.set_trainable(plan.trainable_layers);
    Optimizer opt({plan.hyper.optimizer, plan.learning_rate});

    std::vector<std::pair<std::string, std::vector<Tensor>>> frozen;
    for (const auto& layer : net.layers())
      if (!plan.trainable_layers.count(layer.spec.name)) frozen.emplace_back(layer.spec.name, layer_snapshot(layer));

    std::mt19937_64 rng(9);
    int violations = 0;
    for (int step = 0; step < 100; ++step) {
      std::vector<std::size_t> idx(16);
      for (auto& i : idx) i = std::uniform_int_distribution<std::size_t>(0, target.size() - 1)(rng);
      const Batch batch = make_batch(target, idx);
      net.zero_grad();
      const auto loss = softmax_cross_entropy(net.forward(batch.images, Mode::Train), std::span<const int>(batch.labels));
      net.backward(loss.grad_logits);
      opt.step(net);
      for (const auto& [name, tensors] : frozen)
        if (layer_snapshot(net.layer(name)) != tensors) ++violations;
    }
    const auto audit = freeze_audit(before, net, plan);
    const bool kind_ok = violations == 0 && audit.passed && audit.changed == want;
    ok = ok && kind_ok;
    std::string changed;
    for (const auto& n : audit.changed) changed += (changed.empty() ? "" : ",") + n;
    detail += fmt("%s: %d frozen-layer diffs over 100 steps, changed {%s}; ", std::string(to_string(kind)).c_str(),
                  violations, changed.c_str());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok && secs < 120.0, detail + fmt("%.1fs (limit 120s)", secs)};
}

// 4 -------------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset data = gen_synthetic_domain(default_source_domain(), 5, 41, "source");
  data.samples.resize(32);
  // Random labels: the network has to memorize rather than generalize.
  std::mt19937_64 rng(43);
  for (auto& sample : data.samples) sample.label = std::uniform_int_distribution<int>(0, kNumClasses - 1)(rng);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch batch = make_batch(data, all);

  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    Network net = build_baseline(seed, Architecture::Desk);
    Optimizer opt({OptimizerKind::Adam, 3e-4});
    int reached = -1;
    double acc = 0.0;
    for (int epoch = 1; epoch <= 500 && reached < 0; ++epoch) {
      net.zero_grad();
      const auto loss =
          softmax_cross_entropy(net.forward(batch.images, Mode::Train), std::span<const int>(batch.labels));
      net.backward(loss.grad_logits);
      opt.step(net);
      acc = evaluate(net, data).accuracy;
      if (acc == 1.0) reached = epoch;
    }
    ok = ok && reached > 0;
    detail += reached > 0 ? fmt("seed %llu at epoch %d; ", static_cast<unsigned long long>(seed), reached)
                          : fmt("seed %llu stuck at %.3f; ", static_cast<unsigned long long>(seed), acc);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok && secs < 120.0,
          fmt("100%% train accuracy on 32 randomly labeled samples: %s%.1fs (limit 120s)", detail.c_str(), secs)};
}

// 5 -------------------------------------------------------------------------

Outcome forgetting() {
  const double c0 = cpu_seconds();
  auto config = load_config(fs::path(FGT_ACCEPTANCE_DIR) / "forgetting.json");
  config.out = scratch("forgetting");
  const auto outcome = run_matrix(config);
  const double cpu = cpu_seconds() - c0;
  if (outcome.failed) return {false, fmt("%zu cells failed", outcome.failed)};

  std::map<StrategyKind, std::vector<double>> ds, dt;
  std::map<StrategyKind, std::map<double, std::vector<double>>> acc;
  for (const auto& r : outcome.results) {
    if (r.strategy == StrategyKind::BL) continue;
    ds[r.strategy].push_back(r.delta_source);
    dt[r.strategy].push_back(r.delta_target);
    acc[r.strategy][r.fraction].push_back(r.target_test_acc);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const StrategyKind adapt[] = {StrategyKind::FT_FC, StrategyKind::FT_FC_CL, StrategyKind::RE, StrategyKind::FU};

  bool a = true, b = true, d = true;
  std::string detail;
  for (auto k : adapt) {
    a = a && mean(dt[k]) > 0.0;
    b = b && mean(dt[StrategyKind::FU]) >= mean(dt[k]);
    d = d && mean(acc[k][1.0]) >= mean(acc[k][0.5]);
    detail += fmt("%s dt %+.3f ds %+.3f acc@0.5 %.3f acc@1 %.3f; ", std::string(to_string(k)).c_str(), mean(dt[k]),
                  mean(ds[k]), mean(acc[k][0.5]), mean(acc[k][1.0]));
  }
  std::vector<double> fu_abs;
  for (double v : ds[StrategyKind::FU]) fu_abs.push_back(std::abs(v));
  const bool c = mean(fu_abs) <= 0.03 && mean(ds[StrategyKind::FT_FC]) <= -0.05 &&
                 mean(ds[StrategyKind::FT_FC_CL]) <= -0.05;
  const bool t = cpu < 1200.0;
  detail += fmt("FU mean|ds| %.3f; (a)%s (b)%s (c)%s (d)%s time %s; %.0fs CPU (limit 1200s)", mean(fu_abs),
                a ? "ok" : "FAIL", b ? "ok" : "FAIL", c ? "ok" : "FAIL", d ? "ok" : "FAIL", t ? "ok" : "FAIL", cpu);
  return {a && b && c && d && t, detail};
}

// 6 -------------------------------------------------------------------------

std::map<std::string, std::string> artifact_bytes(const fs::path& out) {
  std::map<std::string, std::string> files{{"results.csv", slurp(out / "results.csv")}};
  for (const auto& e : fs::directory_iterator(out / "checkpoints"))
    files["checkpoints/" + e.path().filename().string()] = slurp(e.path());
  return files;
}

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = load_config(fs::path(FGT_ACCEPTANCE_DIR) / "determinism.json");
  const auto dir = scratch("determinism");
  config.out = dir / "run1";
  const auto first = run_matrix(config);
  config.out = dir / "run2";
  const auto second = run_matrix(config);
  const auto a = artifact_bytes(dir / "run1"), b = artifact_bytes(dir / "run2");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a)
    if (!b.count(name) || b.at(name) != bytes) ++differing;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = first.failed == 0 && second.failed == 0 && a.size() == b.size() && differing == 0 && secs < 300.0;
  return {ok, fmt("%zu files compared (results.csv + %zu checkpoints), %zu differ, %.1fs (limit 300s)", a.size(),
                  a.size() - 1, differing, secs)};
}

// 7 -------------------------------------------------------------------------

Outcome round_trips() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch("roundtrip");
  const fs::path fixture = fs::path(FGT_FIXTURE_DIR) / "fer_3rows.csv";
  write_pixel_csv(dir / "fer.csv", load_pixel_csv(fixture));
  const bool csv_ok = slurp(fixture) == slurp(dir / "fer.csv");

  const Network net = build_baseline(7, Architecture::Paper);
  save_checkpoint(net, dir / "a.fgtb");
  save_checkpoint(load_checkpoint(dir / "a.fgtb"), dir / "b.fgtb");
  const std::string bytes = slurp(dir / "a.fgtb");
  const bool fixpoint = bytes == slurp(dir / "b.fgtb");

  std::ofstream(dir / "cut.fgtb", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  bool integrity = false;
  std::string message;
  try {
    load_checkpoint(dir / "cut.fgtb");
  } catch (const IntegrityError& e) {
    integrity = true;
    message = e.what();
  } catch (const std::exception& e) {
    message = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {csv_ok && fixpoint && integrity && secs < 10.0,
          fmt("pixel CSV byte round trip %s; checkpoint fixpoint %s (%zu bytes); truncated load %s (%s); %.1fs (limit 10s)",
              csv_ok ? "ok" : "FAIL", fixpoint ? "ok" : "FAIL", bytes.size(),
              integrity ? "IntegrityError" : "no IntegrityError", message.c_str(), secs)};
}

// 8 -------------------------------------------------------------------------

Outcome aggregate_fixture() {
  auto row = [](StrategyKind k, double f, std::uint64_t s, double src, double tgt, double ds, double dt) {
    ExperimentResult r;
    r.strategy = k;
    r.fraction = f;
    r.seed = s;
    r.source_test_acc = src;
    r.target_test_acc = tgt;
    r.delta_source = ds;
    r.delta_target = dt;
    return r;
  };
  // Dyadic values whose column sums are three times a dyadic mean, so every
  // statistic is exact in binary floating point.
  const std::vector<ExperimentResult> rows{
      row(StrategyKind::FT_FC, 0.5, 1, 0.5, 0.625, -0.25, 0.375),
      row(StrategyKind::FT_FC, 0.5, 2, 0.75, 0.5, -0.125, 0.25),
      row(StrategyKind::FT_FC, 1.0, 1, 0.25, 0.75, -0.375, 0.5),
      row(StrategyKind::FU, 0.5, 1, 1.0, 0.75, 0.0, 0.5),
      row(StrategyKind::FU, 1.0, 1, 0.9375, 0.8125, -0.0625, 0.5625),
      row(StrategyKind::FU, 1.0, 2, 0.875, 0.875, 0.0625, 0.625),
  };
  struct Expect {
    StrategyKind kind;
    Stat ds, dt, src, tgt;
  };
  const Expect expect[] = {
      {StrategyKind::FT_FC, {-0.25, -0.375, -0.125, 3}, {0.375, 0.25, 0.5, 3}, {0.5, 0.25, 0.75, 3},
       {0.625, 0.5, 0.75, 3}},
      {StrategyKind::FU, {0.0, -0.0625, 0.0625, 3}, {0.5625, 0.5, 0.625, 3}, {0.9375, 0.875, 1.0, 3},
       {0.8125, 0.75, 0.875, 3}},
  };
  const auto summary = aggregate(rows);
  bool ok = summary.strategies.size() == 2;
  int mismatches = 0;
  auto same = [&](const Stat& got, const Stat& want) {
    if (got.mean != want.mean || got.min != want.min || got.max != want.max || got.n != want.n) ++mismatches;
  };
  for (const auto& e : expect) {
    const auto* s = summary.find(e.kind);
    if (!s) {
      ok = false;
      continue;
    }
    same(s->delta_source, e.ds);
    same(s->delta_target, e.dt);
    same(s->source_acc, e.src);
    same(s->target_acc, e.tgt);
  }
  return {ok && mismatches == 0, fmt("6-row fixture, %d of 16 statistics differ from hand-computed values", mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter count", param_count},   {"gradient checks", grad_checks},
      {"freeze bit-identity", freeze_identity}, {"overfit 32 samples", overfit},
      {"forgetting vs plasticity", forgetting}, {"run determinism", determinism},
      {"serialization round trips", round_trips}, {"aggregation", aggregate_fixture},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("criterion %d %s: %s | %s\n", id, o.passed ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
