#include "fgt/strategy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fgt/checkpoint.hpp"
#include "fgt/evaluate.hpp"
#include "fgt/ops/loss.hpp"
#include "json.hpp"
#include "json_util.hpp"

namespace fgt {

namespace {

using json = nlohmann::json;

constexpr std::pair<StrategyKind, std::string_view> kStrategyNames[] = {
    {StrategyKind::BL, "BL"}, {StrategyKind::FT_FC, "FT_FC"}, {StrategyKind::FT_FC_CL, "FT_FC_CL"},
    {StrategyKind::RE, "RE"}, {StrategyKind::FU, "FU"},
};

InitKind init_kind_from_string(std::string_view s) {
  if (s == "random") return InitKind::Random;
  if (s == "pretrained") return InitKind::Pretrained;
  throw ConfigError("plan: unknown init '" + std::string(s) + "'");
}

TrainData train_data_from_string(std::string_view s) {
  if (s == "source") return TrainData::Source;
  if (s == "target") return TrainData::Target;
  if (s == "merged") return TrainData::Merged;
  throw ConfigError("plan: unknown train_data '" + std::string(s) + "'");
}

bool any_training_batchnorm(const Network& net) {
  for (const auto& l : net.layers())
    if (l.trainable && std::holds_alternative<BatchNormLayer>(l.state)) return true;
  return false;
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  for (const auto& [k, n] : kStrategyNames)
    if (k == kind) return n;
  return "?";
}

StrategyKind strategy_from_string(std::string_view name) {
  for (const auto& [k, n] : kStrategyNames)
    if (n == name) return k;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected BL, FT_FC, FT_FC_CL, RE or FU)");
}

bool is_finetune(StrategyKind kind) { return kind == StrategyKind::FT_FC || kind == StrategyKind::FT_FC_CL; }

std::string_view to_string(InitKind kind) { return kind == InitKind::Random ? "random" : "pretrained"; }

std::string_view to_string(TrainData data) {
  switch (data) {
    case TrainData::Source: return "source";
    case TrainData::Target: return "target";
    case TrainData::Merged: return "merged";
  }
  return "?";
}

std::set<std::string> canonical_trainable(StrategyKind kind, Architecture arch) {
  switch (kind) {
    case StrategyKind::FT_FC:
      return {"fc1", "fc2", "fc3"};
    case StrategyKind::FT_FC_CL:
      return {"conv5", "bn5", "fc1", "fc2", "fc3"};
    default: {
      const auto names = parametrized_layer_names(baseline_specs(arch));
      return {names.begin(), names.end()};
    }
  }
}

StrategyPlan make_plan(StrategyKind kind, std::string source_ref, std::string target_ref, const Hyper& hyper,
                       std::uint64_t seed, Architecture arch, const std::filesystem::path& pretrained,
                       const std::optional<std::set<std::string>>& trainable_override) {
  detail::validate_hyper(hyper, "plan");
  StrategyPlan plan;
  plan.kind = kind;
  plan.hyper = hyper;
  plan.arch = arch;
  plan.seed = seed;
  plan.source_ref = std::move(source_ref);
  plan.target_ref = std::move(target_ref);
  plan.trainable_layers = canonical_trainable(kind, arch);
  plan.learning_rate = is_finetune(kind) ? hyper.learning_rate * hyper.finetune_lr_scale : hyper.learning_rate;

  const bool needs_pretrained = kind == StrategyKind::FT_FC || kind == StrategyKind::FT_FC_CL || kind == StrategyKind::RE;
  if (needs_pretrained) {
    if (pretrained.empty() || !std::filesystem::exists(pretrained))
      throw ConfigError(std::string("plan ") + std::string(to_string(kind)) + ": pretrained checkpoint missing" +
                        (pretrained.empty() ? "" : " at " + pretrained.string()));
    plan.init = {InitKind::Pretrained, pretrained.string(), 0};
  } else {
    plan.init = {InitKind::Random, "", seed};
  }
  plan.train_data = kind == StrategyKind::BL ? TrainData::Source
                    : kind == StrategyKind::FU ? TrainData::Merged
                                               : TrainData::Target;

  if (trainable_override) {
    const auto& canon = plan.trainable_layers;
    for (const auto& name : *trainable_override)
      if (!canon.count(name))
        throw ConfigError("plan " + std::string(to_string(kind)) + ": layer '" + name +
                          "' cannot be trainable for this strategy");
    if (trainable_override->empty() || (!is_finetune(kind) && *trainable_override != canon))
      throw ConfigError("plan " + std::string(to_string(kind)) + ": trainable override contradicts the strategy");
    plan.trainable_layers = *trainable_override;
  }
  return plan;
}

std::string plan_to_json(const StrategyPlan& plan) {
  json j{{"kind", std::string(to_string(plan.kind))},
         {"init", {{"kind", std::string(to_string(plan.init.kind))},
                   {"checkpoint", plan.init.checkpoint},
                   {"seed", plan.init.seed}}},
         {"trainable_layers", plan.trainable_layers},
         {"train_data", std::string(to_string(plan.train_data))},
         {"hyper", detail::hyper_to_json(plan.hyper)},
         {"learning_rate", plan.learning_rate},
         {"arch", std::string(to_string(plan.arch))},
         {"source_ref", plan.source_ref},
         {"target_ref", plan.target_ref},
         {"seed", plan.seed}};
  return j.dump(2);
}

StrategyPlan plan_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    detail::reject_unknown(j, {"kind", "init", "trainable_layers", "train_data", "hyper", "learning_rate", "arch",
                       "source_ref", "target_ref", "seed"},
                   "plan");
    StrategyPlan plan;
    plan.kind = strategy_from_string(j.at("kind").get<std::string>());
    const json& init = j.at("init");
    detail::reject_unknown(init, {"kind", "checkpoint", "seed"}, "plan.init");
    plan.init = {init_kind_from_string(init.at("kind").get<std::string>()), init.value("checkpoint", ""),
                 init.value("seed", std::uint64_t{0})};
    plan.trainable_layers = j.at("trainable_layers").get<std::set<std::string>>();
    plan.train_data = train_data_from_string(j.at("train_data").get<std::string>());
    detail::update_hyper(j.at("hyper"), plan.hyper, "plan.hyper");
    plan.learning_rate = j.at("learning_rate").get<double>();
    plan.arch = architecture_from_string(j.at("arch").get<std::string>());
    plan.source_ref = j.value("source_ref", "");
    plan.target_ref = j.value("target_ref", "");
    plan.seed = j.at("seed").get<std::uint64_t>();
    return plan;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
}

void save_plan(const StrategyPlan& plan, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write plan " + path.string());
  out << plan_to_json(plan) << '\n';
}

StrategyPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

Network initial_network(const StrategyPlan& plan) {
  Network net = plan.init.kind == InitKind::Random ? build_baseline(plan.init.seed, plan.arch)
                                                   : load_checkpoint(plan.init.checkpoint);
  if (net.specs() != baseline_specs(plan.arch))
    throw ConfigError("plan: initial network does not match the '" + std::string(to_string(plan.arch)) +
                      "' architecture");
  net.set_trainable(plan.trainable_layers);
  net.reseed(plan.seed);
  return net;
}

ExecutionResult execute(const StrategyPlan& plan, const TrainingData& data, const EpochCallback& on_epoch) {
  auto require = [](const Dataset* ds, const char* what) -> const Dataset& {
    if (!ds) throw ConfigError(std::string("execute: missing ") + what);
    return *ds;
  };
  Dataset train, val;
  switch (plan.train_data) {
    case TrainData::Source:
      train = require(data.source_train, "source train set");
      val = require(data.source_val, "source validation set");
      break;
    case TrainData::Target:
      train = require(data.target_train, "target train set");
      val = require(data.target_val, "target validation set");
      break;
    case TrainData::Merged:
      train = merge(require(data.source_train, "source train set"), require(data.target_train, "target train set"));
      val = merge(require(data.source_val, "source validation set"), require(data.target_val, "target validation set"));
      break;
  }

  ExecutionResult result{initial_network(plan), {}, 0, 0, 0.0};
  if (plan.hyper.epochs == 0) return result;
  if (train.empty()) throw DataError("execute: training set is empty");

  Network& net = result.model;
  Optimizer opt({plan.hyper.optimizer, plan.learning_rate});
  const bool fold_singletons = any_training_batchnorm(net);
  std::optional<Network> best;
  double best_acc = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= plan.hyper.epochs; ++epoch) {
    opt.set_learning_rate(step_decay(plan.learning_rate, epoch, plan.hyper.lr_decay_epochs, plan.hyper.lr_decay_factor));
    auto batches = ShuffledBatches(train, plan.hyper.batch_size, plan.seed, static_cast<std::uint64_t>(epoch))
                       .index_batches();
    if (fold_singletons && batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch batch = make_batch(train, batches[b]);
      const Tensor logits = net.forward(batch.images, Mode::Train);
      const auto loss = softmax_cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.loss))
        throw NonFiniteError("execute " + std::string(to_string(plan.kind)) + ": non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(b));
      net.backward(loss.grad_logits);
      opt.step(net);
      loss_sum += loss.loss * static_cast<double>(batch.labels.size());
      seen += batch.labels.size();
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.empty() ? 0.0 : evaluate(net, val).accuracy, seen};
    result.log.push_back(rec);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(rec);

    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      result.best_epoch = epoch;
      best = net;
      since_best = 0;
    } else if (++since_best >= plan.hyper.patience) {
      break;
    }
  }
  result.best_val_accuracy = best_acc;
  if (best) result.model = std::move(*best);
  result.model.zero_grad();
  return result;
}

std::string AuditReport::to_text() const {
  std::ostringstream os;
  for (const auto& l : layers)
    os << l.layer << '\t' << (l.changed ? "changed" : "unchanged") << '\t'
       << (l.trainable ? "trainable" : "frozen") << (l.changed && !l.trainable ? "\tVIOLATION" : "") << '\n';
  os << (passed ? "PASS" : "FAIL") << '\n';
  return os.str();
}

AuditReport freeze_audit(const Network& before, const Network& after, const StrategyPlan& plan) {
  if (before.specs() != after.specs()) throw IntegrityError("freeze_audit: networks have different architectures");
  AuditReport report;
  report.passed = true;
  for (std::size_t i = 0; i < before.layers().size(); ++i) {
    const Layer& a = before.layers()[i];
    const Layer& b = after.layers()[i];
    if (!a.has_params()) continue;
    const auto ta = a.persistent_tensors();
    const auto tb = b.persistent_tensors();
    bool changed = false;
    for (std::size_t k = 0; k < ta.size(); ++k) changed |= !(*ta[k] == *tb[k]);
    const bool trainable = plan.trainable_layers.count(a.spec.name) > 0;
    report.layers.push_back({a.spec.name, changed, trainable});
    if (changed) report.changed.insert(a.spec.name);
    if (changed && !trainable) report.passed = false;
  }
  return report;
}

AuditReport freeze_audit(const std::filesystem::path& before, const std::filesystem::path& after,
                         const StrategyPlan& plan) {
  return freeze_audit(load_checkpoint(before), load_checkpoint(after), plan);
}

namespace detail {

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError(where + ": unknown key '" + k + "'");
}

json hyper_to_json(const Hyper& h) {
  return {{"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"learning_rate", h.learning_rate},
          {"finetune_lr_scale", h.finetune_lr_scale},
          {"optimizer", std::string(to_string(h.optimizer))},
          {"patience", h.patience},
          {"lr_decay_epochs", h.lr_decay_epochs},
          {"lr_decay_factor", h.lr_decay_factor}};
}

void update_hyper(const json& j, Hyper& h, const std::string& where) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "finetune_lr_scale", "optimizer", "patience",
                     "lr_decay_epochs", "lr_decay_factor"},
                 where);
  h.epochs = j.value("epochs", h.epochs);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.finetune_lr_scale = j.value("finetune_lr_scale", h.finetune_lr_scale);
  if (j.contains("optimizer")) h.optimizer = optimizer_kind_from_string(j.at("optimizer").get<std::string>());
  h.patience = j.value("patience", h.patience);
  h.lr_decay_epochs = j.value("lr_decay_epochs", h.lr_decay_epochs);
  h.lr_decay_factor = j.value("lr_decay_factor", h.lr_decay_factor);
}

void validate_hyper(const Hyper& h, const std::string& where) {
  if (h.epochs < 0 || h.batch_size == 0 || h.patience < 1 || !(h.learning_rate >= 0.0) ||
      !(h.finetune_lr_scale > 0.0) || h.lr_decay_epochs < 0 || !(h.lr_decay_factor > 0.0 && h.lr_decay_factor <= 1.0))
    throw ConfigError(where + ": invalid hyper-parameters");
}

}  // namespace detail

}  // namespace fgt
