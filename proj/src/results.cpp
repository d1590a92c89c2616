#include "fgt/results.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fgt {

namespace {

int strategy_rank(StrategyKind k) { return static_cast<int>(k); }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view text, const std::string& where) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError(where + ": expected an integer, got '" + std::string(text) + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError(where + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

std::string format_result_row(const ExperimentResult& r) {
  std::string s;
  s += to_string(r.strategy);
  s += ',' + format_double(r.fraction);
  s += ',' + std::to_string(r.seed);
  for (double v : {r.source_test_acc, r.target_test_acc, r.delta_source, r.delta_target}) s += ',' + format_double(v);
  s += ',' + std::to_string(r.epochs_run);
  s += ',' + format_double(r.wall_time_s);
  s += ',' + r.checkpoint;
  return s;
}

ExperimentResult parse_result_row(std::string_view line, const std::string& where) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = split_fields(line);
  if (f.size() != 10)
    throw DataError(where + ": expected 10 fields, got " + std::to_string(f.size()));
  ExperimentResult r;
  try {
    r.strategy = strategy_from_string(f[0]);
  } catch (const ConfigError& e) {
    throw DataError(where + ": " + e.what());
  }
  r.fraction = parse_double(f[1], where);
  r.seed = parse_int<std::uint64_t>(f[2], where);
  r.source_test_acc = parse_double(f[3], where);
  r.target_test_acc = parse_double(f[4], where);
  r.delta_source = parse_double(f[5], where);
  r.delta_target = parse_double(f[6], where);
  r.epochs_run = parse_int<int>(f[7], where);
  r.wall_time_s = parse_double(f[8], where);
  r.checkpoint = std::string(f[9]);
  return r;
}

bool canonical_less(const ExperimentResult& a, const ExperimentResult& b) {
  if (a.strategy != b.strategy) return strategy_rank(a.strategy) < strategy_rank(b.strategy);
  if (a.fraction != b.fraction) return a.fraction < b.fraction;
  return a.seed < b.seed;
}

void sort_canonical(std::vector<ExperimentResult>& rows) { std::stable_sort(rows.begin(), rows.end(), canonical_less); }

void write_results_csv(const std::filesystem::path& path, std::vector<ExperimentResult> rows) {
  sort_canonical(rows);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << kResultsHeader << '\n';
    for (const auto& r : rows) out << format_result_row(r) << '\n';
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ExperimentResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open results " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw DataError(path.string() + ": unexpected header '" + line + "'");
  std::vector<ExperimentResult> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(parse_result_row(line, path.string() + " line " + std::to_string(n)));
  }
  return rows;
}

Stat describe(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

const StrategySummary* Summary::find(StrategyKind kind) const {
  for (const auto& s : strategies)
    if (s.strategy == kind) return &s;
  return nullptr;
}

Summary aggregate(std::span<const ExperimentResult> input) {
  std::vector<ExperimentResult> rows(input.begin(), input.end());
  sort_canonical(rows);
  Summary summary;
  for (StrategyKind kind : kAllStrategies) {
    std::vector<double> ds, dt, sa, ta;
    std::map<double, std::vector<double>> ta_by_f, sa_by_f;
    for (const auto& r : rows) {
      if (r.strategy != kind) continue;
      ds.push_back(r.delta_source);
      dt.push_back(r.delta_target);
      sa.push_back(r.source_test_acc);
      ta.push_back(r.target_test_acc);
      ta_by_f[r.fraction].push_back(r.target_test_acc);
      sa_by_f[r.fraction].push_back(r.source_test_acc);
    }
    if (ds.empty()) continue;
    StrategySummary s;
    s.strategy = kind;
    s.rows = ds.size();
    s.delta_source = describe(ds);
    s.delta_target = describe(dt);
    s.source_acc = describe(sa);
    s.target_acc = describe(ta);
    s.score = s.delta_target.mean + s.delta_source.mean;
    for (const auto& [f, v] : ta_by_f) s.target_acc_by_fraction[f] = describe(v).mean;
    for (const auto& [f, v] : sa_by_f) s.source_acc_by_fraction[f] = describe(v).mean;
    summary.strategies.push_back(std::move(s));
  }

  for (auto& b : summary.strategies)
    for (const auto& a : summary.strategies) {
      const double at = a.delta_target.mean, as = a.delta_source.mean;
      const double bt = b.delta_target.mean, bs = b.delta_source.mean;
      if (at >= bt && as >= bs && (at > bt || as > bs)) b.dominated_by.push_back(a.strategy);
    }

  for (const auto& s : summary.strategies) summary.ranking.push_back(s.strategy);
  std::stable_sort(summary.ranking.begin(), summary.ranking.end(), [&](StrategyKind x, StrategyKind y) {
    const auto* a = summary.find(x);
    const auto* b = summary.find(y);
    if (a->delta_target.mean != b->delta_target.mean) return a->delta_target.mean > b->delta_target.mean;
    return a->delta_source.mean > b->delta_source.mean;
  });
  return summary;
}

std::string summary_to_json(const Summary& summary) {
  using json = nlohmann::ordered_json;
  auto stat = [](const Stat& s) { return json{{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"n", s.n}}; };
  auto by_fraction = [](const std::map<double, double>& m) {
    json j = json::object();
    for (const auto& [f, v] : m) j[format_double(f)] = v;
    return j;
  };
  json strategies = json::object();
  for (const auto& s : summary.strategies) {
    json dominated = json::array();
    for (auto k : s.dominated_by) dominated.push_back(std::string(to_string(k)));
    strategies[std::string(to_string(s.strategy))] = {
        {"rows", s.rows},
        {"delta_source", stat(s.delta_source)},
        {"delta_target", stat(s.delta_target)},
        {"source_test_acc", stat(s.source_acc)},
        {"target_test_acc", stat(s.target_acc)},
        {"score", s.score},
        {"target_test_acc_by_fraction", by_fraction(s.target_acc_by_fraction)},
        {"source_test_acc_by_fraction", by_fraction(s.source_acc_by_fraction)},
        {"pareto_dominated_by", dominated},
    };
  }
  json ranking = json::array();
  for (auto k : summary.ranking) ranking.push_back(std::string(to_string(k)));
  json j{{"strategies", strategies}, {"ranking", ranking}};
  return j.dump(2) + "\n";
}

std::string plot_csv(std::vector<ExperimentResult> rows) {
  sort_canonical(rows);
  std::ostringstream os;
  os << "strategy,fraction,seed,test_set,accuracy\n";
  for (const auto& r : rows) {
    const std::string key =
        std::string(to_string(r.strategy)) + ',' + format_double(r.fraction) + ',' + std::to_string(r.seed);
    os << key << ",source," << format_double(r.source_test_acc) << '\n';
    os << key << ",target," << format_double(r.target_test_acc) << '\n';
  }
  return os.str();
}

}  // namespace fgt
