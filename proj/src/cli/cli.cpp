#include "treeopf/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "treeopf/bench.hpp"
#include "treeopf/errors.hpp"

namespace treeopf {

using nlohmann::json;

namespace {

json interval_json(const Interval& x) { return json::array({x.lo, x.hi}); }

json violations_json(const ViolationReport& r) {
  return {{"max", r.max()},
          {"voltage", r.max_v_violation},
          {"flow", r.max_flow_violation},
          {"injection", r.max_injection_violation},
          {"power_flow", r.max_pf_residual},
          {"worst_voltage_bus", r.worst_v_bus},
          {"worst_flow_bus", r.worst_flow_bus},
          {"worst_injection_bus", r.worst_injection_bus},
          {"worst_power_flow_bus", r.worst_pf_bus}};
}

json state_json(const PFState& s) {
  json buses = json::array();
  for (std::size_t k = 0; k < s.v.size(); ++k) {
    buses.push_back({{"bus", k}, {"v", s.v[k]}, {"P", s.P[k]}, {"Q", s.Q[k]}, {"p", s.p[k]}, {"q", s.q[k]}});
  }
  return buses;
}

json bounds_json(const std::vector<BusBounds>& bounds) {
  json out = json::array();
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const auto& b = bounds[k];
    out.push_back({{"bus", k},
                   {"v", interval_json(b.v)},
                   {"P", interval_json(b.P)},
                   {"Q", interval_json(b.Q)},
                   {"i", interval_json(b.i)}});
  }
  return out;
}

std::vector<BusBounds> original_bounds(const BinaryTree& tree, const BoundsSet& bounds) {
  return restrict_to_original(tree.map, std::span<const BusBounds>(bounds.buses));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

struct CommonArgs {
  std::string case_path;
  double epsilon = 0.02;
  std::vector<double> epsilons{0.04, 0.02, 0.01};
  int facets = 32;
  std::uint64_t seed = 1;
  int instances = 50;
  double perturb = 0.10;
  std::string out_dir = "bench_out";
  int workers = 1;
  bool no_timing = false;
};

int cmd_solve(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const auto net = load_network_file(a.case_path);
  DpOptions opt;
  opt.epsilon = a.epsilon;
  opt.relax.facets = a.facets;
  opt.tighten.relax.facets = a.facets;
  const auto res = solve(net, opt);
  out << solve_json(net, res).dump(2) << '\n';
  if (!res.solved()) {
    err << "certificate: " << res.message << '\n';
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_tighten(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const auto net = load_network_file(a.case_path);
  const auto tree = to_binary_tree(net);
  TightenOptions opt;
  opt.relax.facets = a.facets;
  try {
    const auto res = tighten_bounds(tree.network, opt);
    out << tighten_json(net, tree, res).dump(2) << '\n';
  } catch (const InfeasibleError& e) {
    out << json{{"status", "infeasible"}, {"certificate", e.what()}}.dump(2) << '\n';
    err << "certificate: " << e.what() << '\n';
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_oracle(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const auto net = load_network_file(a.case_path);
  const auto res = brute_force_opf(CurtailmentInstance::from_network(net));
  out << oracle_json(res).dump(2) << '\n';
  if (!res.feasible) {
    err << "no configuration satisfies the operating limits\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_transform(const CommonArgs& a, std::ostream& out, std::ostream&) {
  const auto net = load_network_file(a.case_path);
  out << transform_json(to_binary_tree(net)).dump(2) << '\n';
  return kExitOk;
}

int cmd_bench(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const auto net = load_network_file(a.case_path);
  BenchmarkConfig cfg;
  cfg.case_path = a.case_path;
  cfg.epsilons = a.epsilons;
  cfg.instances = a.instances;
  cfg.perturbation = a.perturb;
  cfg.seed = a.seed;
  cfg.facets = a.facets;
  cfg.workers = a.workers;
  cfg.timing = !a.no_timing;
  cfg.validate();

  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  std::ofstream progress(dir / "progress.jsonl", std::ios::binary);
  if (!progress) throw Error("cannot write " + (dir / "progress.jsonl").string());
  const auto report = run_benchmark(net, cfg, [&](int instance, const std::vector<BenchmarkRow>& rows) {
    BenchmarkReport one;
    one.rows = rows;
    progress << json{{"instance", instance}, {"rows", report_json(one)["rows"]}}.dump() << '\n';
    progress.flush();
    err << "instance " << instance << " done\n";
  });

  write_file(dir / "results.csv", rows_csv(report));
  write_file(dir / "summary.csv", aggregates_csv(report));
  write_file(dir / "report.json", report_json(report).dump(2) + "\n");
  out << aggregates_csv(report);
  return kExitOk;
}

}  // namespace

json solve_json(const Network& net, const SolveResult& result) {
  json out;
  out["status"] = result.solved() ? "solved" : "infeasible";
  out["epsilon"] = result.stats.epsilon;
  if (!result.solved()) {
    out["certificate"] = result.message;
    out["lower_bound"] = nullptr;
  } else {
    out["lower_bound"] = result.stats.lower_bound;
    const auto& map = result.tree->map;
    json buses = json::array();
    for (std::size_t k = 0; k < net.size(); ++k) {
      const auto t = static_cast<std::size_t>(map.original_to_transformed[k]);
      const auto& c = result.solution.buses[t];
      const auto& s = result.midpoint;
      buses.push_back({{"bus", k},
                       {"v", s.v[k]},
                       {"P", s.P[k]},
                       {"Q", s.Q[k]},
                       {"p", s.p[k]},
                       {"q", s.q[k]},
                       {"piece", c.piece},
                       {"region", {{"v", interval_json(c.region.v)},
                                   {"P", interval_json(c.region.P)},
                                   {"Q", interval_json(c.region.Q)}}}});
    }
    out["solution"] = buses;
    json resolved = {{"converged", result.resolved.converged()},
                     {"status", to_string(result.resolved.status)}};
    if (result.resolved.converged()) {
      resolved["report"] = violations_json(result.resolved_violations);
      resolved["cost"] = std::isfinite(result.resolved_cost) ? json(result.resolved_cost) : json(nullptr);
      resolved["state"] = state_json(result.resolved.state);
    }
    out["violations"] = {{"midpoint", violations_json(result.violations)}, {"resolved", resolved}};
  }
  json issues = json::array();
  for (const auto& i : result.issues) issues.push_back({{"bus", i.bus}, {"clause", i.clause}, {"detail", i.detail}});
  out["issues"] = issues;
  out["stats"] = {{"propbound_calls", result.stats.propbound_calls},
                  {"wall_ms", result.stats.wall_ms},
                  {"tighten_iterations", result.stats.tighten_iterations},
                  {"message_sizes", result.stats.message_sizes}};
  return out;
}

json tighten_json(const Network& net, const BinaryTree& tree, const TightenResult& result) {
  json trace = json::array();
  for (int k = 0; k < result.iterations; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    trace.push_back({{"iteration", k + 1},
                     {"change", idx < result.changes.size() ? json(result.changes[idx]) : json(nullptr)}});
  }
  json out;
  out["status"] = "tightened";
  out["buses"] = bounds_json(original_bounds(tree, result.bounds));
  if (!result.history.empty()) out["initial"] = bounds_json(original_bounds(tree, result.history.front()));
  out["iterations"] = result.iterations;
  out["trace"] = trace;
  out["size"] = net.size();
  return out;
}

json oracle_json(const OracleResult& result) {
  json out;
  out["feasible"] = result.feasible;
  out["optimum"] = result.feasible ? json(result.cost) : json(nullptr);
  out["sigma"] = result.sigma;
  out["state"] = result.feasible ? state_json(result.state) : json(nullptr);
  out["configurations"] = result.configurations;
  out["non_convergent"] = result.non_convergent;
  return out;
}

json transform_json(const BinaryTree& tree) {
  const auto& m = tree.map;
  return {{"network", network_to_json(tree.network)},
          {"map", {{"original_to_transformed", m.original_to_transformed},
                   {"transformed_to_original", m.transformed_to_original},
                   {"auxiliary", m.auxiliary},
                   {"origin", m.origin}}}};
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interval dynamic programming for AC optimal power flow on tree networks", "treeopf"};
  app.require_subcommand(1);
  CommonArgs a;

  auto add_case = [&](CLI::App* sub) { sub->add_option("case", a.case_path, "Case file (JSON)")->required(); };
  auto add_facets = [&](CLI::App* sub) {
    sub->add_option("--facets", a.facets, "Facets of the polyhedral cone approximation")->check(CLI::Range(8, 4096));
  };

  auto* solve_cmd = app.add_subcommand("solve", "Solve a case and print the solution as JSON");
  add_case(solve_cmd);
  solve_cmd->add_option("--epsilon", a.epsilon, "Grid resolution")->check(CLI::PositiveNumber);
  add_facets(solve_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "Run the perturbed-load benchmark");
  add_case(bench_cmd);
  bench_cmd->add_option("--epsilons", a.epsilons, "Comma separated resolutions")->delimiter(',');
  add_facets(bench_cmd);
  bench_cmd->add_option("--seed", a.seed, "Seed for the load perturbations");
  bench_cmd->add_option("--instances", a.instances, "Number of perturbed instances")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--perturb", a.perturb, "Relative perturbation of each load")->check(CLI::Range(0.0, 0.999999));
  bench_cmd->add_option("--out", a.out_dir, "Output directory");
  bench_cmd->add_option("--workers", a.workers, "Parallel instances")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--no-timing", a.no_timing, "Write wall_ms as 0 for reproducible files");

  auto* tighten_cmd = app.add_subcommand("tighten", "Print tightened bus bounds and the iteration trace");
  add_case(tighten_cmd);
  add_facets(tighten_cmd);

  auto* oracle_cmd = app.add_subcommand("oracle", "Enumerate curtailment configurations");
  add_case(oracle_cmd);

  auto* transform_cmd = app.add_subcommand("transform", "Print the degree-3 transform and its bus map");
  add_case(transform_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (solve_cmd->parsed()) return cmd_solve(a, out, err);
    if (bench_cmd->parsed()) return cmd_bench(a, out, err);
    if (tighten_cmd->parsed()) return cmd_tighten(a, out, err);
    if (oracle_cmd->parsed()) return cmd_oracle(a, out, err);
    return cmd_transform(a, out, err);
  } catch (const CapExceededError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCapExceeded;
  } catch (const InfeasibleError& e) {
    err << "certificate: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

}  // namespace treeopf
