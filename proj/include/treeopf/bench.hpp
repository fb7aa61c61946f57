#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "treeopf/netmodel.hpp"

namespace treeopf {

struct BenchmarkConfig {
  std::filesystem::path case_path;
  std::vector<double> epsilons{0.04, 0.02, 0.01};
  int instances = 50;
  double perturbation = 0.10;
  std::uint64_t seed = 1;
  int facets = 32;
  int workers = 1;
  /// Write wall_ms as 0 so that reruns produce identical files.
  bool timing = true;

  void validate() const;
};

/// One (epsilon, instance) run.
struct BenchmarkRow {
  double epsilon = 0.0;
  int instance = 0;
  bool solved = false;
  /// Largest violation of the midpoint solution.
  double violation = 0.0;
  /// Largest violation after re-solving the power flow at the DP injections.
  double resolved_violation = 0.0;
  double wall_ms = 0.0;
  long propbound_calls = 0;
  double lower_bound = 0.0;
  std::optional<double> oracle_opt;
  std::optional<double> ratio;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct BenchmarkAggregate {
  double epsilon = 0.0;
  int instances = 0;
  int solved = 0;
  Summary violation;
  Summary wall_ms;
  Summary propbound_calls;
  Summary lower_bound;
  Summary ratio;
};

struct BenchmarkReport {
  /// Sorted by (epsilon in configured order, instance).
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkAggregate> aggregates;
};

/// Perturbed copies of the base case, drawn in order from one seeded stream.
std::vector<Network> perturbed_instances(const Network& base, const BenchmarkConfig& config);

/// Called once per finished instance with its rows, serialized across workers.
using InstanceCallback = std::function<void(int instance, const std::vector<BenchmarkRow>& rows)>;

BenchmarkReport run_benchmark(const Network& base, const BenchmarkConfig& config,
                              const InstanceCallback& on_instance = {});

/// Population mean and standard deviation; zeros for an empty sample.
Summary summarize(const std::vector<double>& xs);

std::string rows_csv(const BenchmarkReport& report);
std::string aggregates_csv(const BenchmarkReport& report);
nlohmann::json report_json(const BenchmarkReport& report);

}  // namespace treeopf
