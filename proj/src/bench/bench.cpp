#include "treeopf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "treeopf/casegen.hpp"
#include "treeopf/errors.hpp"
#include "treeopf/intervaldp.hpp"
#include "treeopf/oracle.hpp"

namespace treeopf {

void BenchmarkConfig::validate() const {
  if (epsilons.empty()) throw Error("at least one epsilon is required");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw Error("epsilons must be positive");
  }
  if (instances < 1) throw Error("instance count must be positive");
  if (!(perturbation >= 0.0 && perturbation < 1.0)) throw Error("perturbation must lie in [0, 1)");
  if (facets < 8) throw Error("at least eight cone facets are required");
  if (workers < 1) throw Error("worker count must be positive");
}

std::vector<Network> perturbed_instances(const Network& base, const BenchmarkConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::vector<Network> out;
  out.reserve(static_cast<std::size_t>(config.instances));
  for (int i = 0; i < config.instances; ++i) out.push_back(perturb_loads(base, config.perturbation, rng));
  return out;
}

namespace {

std::vector<BenchmarkRow> run_instance(const Network& net, int index, const BenchmarkConfig& config) {
  std::optional<double> opt;
  try {
    const auto best = brute_force_opf(CurtailmentInstance::from_network(net));
    if (best.feasible) opt = best.cost;
  } catch (const Error& e) {
    spdlog::info("instance {}: no oracle ({})", index, e.what());
  }

  DpOptions dp;
  dp.relax.facets = config.facets;
  dp.tighten.relax.facets = config.facets;
  std::vector<BenchmarkRow> rows;
  for (double eps : config.epsilons) {
    dp.epsilon = eps;
    const auto res = solve(net, dp);
    if (!dp.bounds && res.tree && !res.bounds.buses.empty()) dp.bounds = res.bounds;
    BenchmarkRow row;
    row.epsilon = eps;
    row.instance = index;
    row.solved = res.solved();
    row.wall_ms = config.timing ? res.stats.wall_ms : 0.0;
    row.propbound_calls = res.stats.propbound_calls;
    row.oracle_opt = opt;
    if (row.solved) {
      row.violation = res.stats.max_violation;
      row.resolved_violation = res.stats.resolved_violation;
      row.lower_bound = res.stats.lower_bound;
      if (opt && *opt != 0.0) row.ratio = row.lower_bound / *opt;
    }
    spdlog::debug("instance {} eps {}: lb {} violation {}", index, eps, row.lower_bound, row.violation);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  const double shift = xs.front();
  double sum = 0.0;
  for (double x : xs) sum += x - shift;
  const double offset = sum / n;
  s.mean = shift + offset;
  double var = 0.0;
  for (double x : xs) var += (x - shift - offset) * (x - shift - offset);
  s.stddev = std::sqrt(var / n);
  return s;
}

BenchmarkReport run_benchmark(const Network& base, const BenchmarkConfig& config,
                              const InstanceCallback& on_instance) {
  config.validate();
  const auto nets = perturbed_instances(base, config);
  std::vector<std::vector<BenchmarkRow>> per(nets.size());
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < nets.size(); i = next++) {
      try {
        auto rows = run_instance(nets[i], static_cast<int>(i), config);
        const std::lock_guard lock(mutex);
        if (on_instance) on_instance(static_cast<int>(i), rows);
        per[i] = std::move(rows);
      } catch (...) {
        const std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(config.workers), nets.size());
  if (count <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  BenchmarkReport report;
  for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
    BenchmarkAggregate agg;
    agg.epsilon = config.epsilons[e];
    std::vector<double> viol, ms, calls, lb, ratio;
    for (const auto& rows : per) {
      const auto& row = rows[e];
      report.rows.push_back(row);
      ++agg.instances;
      ms.push_back(row.wall_ms);
      calls.push_back(static_cast<double>(row.propbound_calls));
      if (!row.solved) continue;
      ++agg.solved;
      viol.push_back(row.violation);
      lb.push_back(row.lower_bound);
      if (row.ratio) ratio.push_back(*row.ratio);
    }
    agg.violation = summarize(viol);
    agg.wall_ms = summarize(ms);
    agg.propbound_calls = summarize(calls);
    agg.lower_bound = summarize(lb);
    agg.ratio = summarize(ratio);
    report.aggregates.push_back(agg);
  }
  return report;
}

namespace {

std::string num(double x) { return fmt::format("{:.10g}", x); }
std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

}  // namespace

std::string rows_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "epsilon,instance,violation,wall_ms,propbound_calls,lower_bound,oracle_opt,ratio\n";
  for (const auto& r : report.rows) {
    out << num(r.epsilon) << ',' << r.instance << ',' << (r.solved ? num(r.violation) : "") << ','
        << fmt::format("{:.3f}", r.wall_ms) << ',' << r.propbound_calls << ','
        << (r.solved ? num(r.lower_bound) : "") << ',' << opt_num(r.oracle_opt) << ',' << opt_num(r.ratio) << '\n';
  }
  return out.str();
}

std::string aggregates_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "epsilon,instances,solved,violation_mean,violation_std,wall_ms_mean,wall_ms_std,"
         "propbound_calls_mean,propbound_calls_std,lower_bound_mean,lower_bound_std,ratio_mean,ratio_std\n";
  for (const auto& a : report.aggregates) {
    out << num(a.epsilon) << ',' << a.instances << ',' << a.solved;
    for (const auto* s : {&a.violation, &a.wall_ms, &a.propbound_calls, &a.lower_bound, &a.ratio}) {
      out << ',' << num(s->mean) << ',' << num(s->stddev);
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json report_json(const BenchmarkReport& report) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  auto summary = [](const Summary& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; };
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"epsilon", r.epsilon},
                    {"instance", r.instance},
                    {"solved", r.solved},
                    {"violation", r.violation},
                    {"resolved_violation", r.resolved_violation},
                    {"wall_ms", r.wall_ms},
                    {"propbound_calls", r.propbound_calls},
                    {"lower_bound", r.lower_bound},
                    {"oracle_opt", opt(r.oracle_opt)},
                    {"ratio", opt(r.ratio)}});
  }
  json aggs = json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back({{"epsilon", a.epsilon},
                    {"instances", a.instances},
                    {"solved", a.solved},
                    {"violation", summary(a.violation)},
                    {"wall_ms", summary(a.wall_ms)},
                    {"propbound_calls", summary(a.propbound_calls)},
                    {"lower_bound", summary(a.lower_bound)},
                    {"ratio", summary(a.ratio)}});
  }
  return {{"rows", rows}, {"aggregates", aggs}};
}

}  // namespace treeopf
