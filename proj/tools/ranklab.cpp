// ranklab: a laboratory for comparing ranking policies by expected CTR.
//
// Subcommands:
//   compare     run method-vs-method comparisons over ranker pairs
//   logopt      train a variance-minimizing logging policy from a log file
//   oracle      closed-form fixtures and sign-flip grid search
//   gen-rankers generate a synthetic dataset and a set of linear rankers
//   summarize   aggregate a results.csv into summary tables

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ranklab/em.hpp"
#include "ranklab/harness.hpp"
#include "ranklab/oracles.hpp"

namespace fs = std::filesystem;
using namespace ranklab;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  return out;
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  if (config_path.empty()) {
    std::istringstream empty;
    return parse_experiment_config(empty, overrides);
  }
  std::ifstream in(config_path);
  if (!in) throw InvalidInputError("cannot open config " + config_path);
  return parse_experiment_config(in, overrides);
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& out_dir) {
  const ExperimentConfig config = load_config(config_path, overrides);
  const ExperimentResult result = run_experiment(config);

  fs::create_directories(out_dir);
  {
    auto out = open_out(fs::path(out_dir) / "results.csv");
    write_results_csv(result.rows, out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "summary.csv");
    write_summary_csv(summarize(result.rows), out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "timings.csv");
    write_timings_csv(result.timings, out);
  }
  bool any_errors = false;
  for (const ResultRow& row : result.rows) any_errors |= row.failed;
  if (any_errors) {
    auto out = open_out(fs::path(out_dir) / "errors.csv");
    out << "pair,method,message\n";
    for (const ResultRow& row : result.rows) {
      if (row.failed) {
        out << row.pair << ',' << method_name(row.method) << ",\"" << row.error << "\"\n";
      }
    }
  }
  if (config.svg) {
    auto out = open_out(fs::path(out_dir) / "curves.svg");
    write_curves_svg(result.rows, out);
  }
  std::cout << "wrote " << result.rows.size() << " result rows to " << out_dir << "\n";
  return 0;
}

int cmd_logopt(const std::string& log_path, const std::string& dataset_path,
               const std::string& ranker1_path, const std::string& ranker2_path,
               const std::vector<std::string>& overrides, const std::string& out_dir,
               std::uint64_t seed) {
  const ExperimentConfig config = load_config("", overrides);

  std::ifstream log_in(log_path);
  if (!log_in) throw InvalidInputError("cannot open log " + log_path);
  const InteractionLog log = read_interaction_log(log_in);

  std::ifstream data_in(dataset_path);
  if (!data_in) throw InvalidInputError("cannot open dataset " + dataset_path);
  const Dataset dataset = parse_letor(data_in);

  auto load = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open ranker " + path);
    return load_ranker(in);
  };
  const LinearRankerPolicy p1(load(ranker1_path).weights);
  const LinearRankerPolicy p2(load(ranker2_path).weights);

  RandomStream rng(seed);
  const LogOptOutput output =
      optimize_logging_policy(log, dataset, p1, p2, config.opt, rng);

  fs::create_directories(out_dir);
  {
    auto out = open_out(fs::path(out_dir) / "policy.txt");
    save_network(*output.training.network, out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "click_model.txt");
    save_em_result(output.em, out);
  }
  {
    auto out = open_out(fs::path(out_dir) / "trace.csv");
    out << "step,estimated_variance,gradient_norm\n";
    char buf[96];
    for (const TraceRow& row : output.training.trace) {
      std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g\n", row.step, row.estimated_variance,
                    row.gradient_norm);
      out << buf;
    }
  }
  std::cout << "trained logging policy on " << log.size() << " interactions; delta_hat="
            << output.delta_hat << "; outputs in " << out_dir << "\n";
  return 0;
}

const char* method_label(EvalMethod m) {
  switch (m) {
    case EvalMethod::kAB: return "ab";
    case EvalMethod::kTDI: return "tdi";
    case EvalMethod::kPI: return "pi";
    case EvalMethod::kOI: return "oi";
    case EvalMethod::kIPS: return "ips";
  }
  return "?";
}

int cmd_oracle(const std::string& method_arg, bool grid_search, const std::string& out_dir) {
  // The fixed three-doc fixtures, enumerated exactly.
  struct Fixture {
    const char* name;
    EvalMethod method;
    SmallInstance instance;
  };
  std::vector<Fixture> fixtures;
  fixtures.push_back({"tdi", EvalMethod::kTDI,
                      SmallInstance::three_doc({1.0, 0.9, 0.8}, 0.1, 1.0)});
  fixtures.push_back({"pi", EvalMethod::kPI,
                      SmallInstance::three_doc({1.0, 0.9, 0.3}, 0.5, 1.0)});
  fixtures.push_back({"oi", EvalMethod::kOI,
                      SmallInstance::three_doc({1.0, 0.31, 0.3}, 0.1, 1.0)});
  fixtures.push_back({"oi-printed", EvalMethod::kOI,
                      SmallInstance::three_doc({1.0, 0.9, 0.9}, 0.5, 1.0)});

  std::cout << "fixture   delta      expected_outcome  sign_flip\n";
  for (const Fixture& f : fixtures) {
    const double delta = f.instance.true_delta();
    const double outcome = enum_expected_outcome(f.method, f.instance);
    std::printf("%-9s %+.6f  %+.6f         %s\n", f.name, delta, outcome,
                delta_bin(delta) != delta_bin(outcome) ? "yes" : "no");
  }

  if (grid_search) {
    const EvalMethod method = [&] {
      if (method_arg == "tdi") return EvalMethod::kTDI;
      if (method_arg == "pi") return EvalMethod::kPI;
      if (method_arg == "oi") return EvalMethod::kOI;
      if (method_arg == "ips") return EvalMethod::kIPS;
      throw InvalidInputError("grid search supports methods tdi, pi, oi, ips");
    }();
    const UniformRankingPolicy uniform;
    const std::vector<SignFlip> flips =
        find_sign_flip(method, ParameterGrid::default_grid(),
                       method == EvalMethod::kIPS ? &uniform : nullptr);

    fs::create_directories(out_dir);
    auto out = open_out(fs::path(out_dir) / ("counterexamples_" + method_arg + ".csv"));
    out << "method,theta1,theta2,theta3,zeta_a,zeta_c,delta,expected_outcome\n";
    char buf[160];
    for (const SignFlip& flip : flips) {
      std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                    method_label(method), flip.instance.theta[0], flip.instance.theta[1],
                    flip.instance.theta[2], flip.instance.zeta[0], flip.instance.zeta[2],
                    flip.delta, flip.expected_outcome);
      out << buf;
    }
    std::cout << "grid search (" << method_arg << "): " << flips.size()
              << " sign flips written to " << out_dir << "\n";
  }
  return 0;
}

int cmd_gen_rankers(int count, const std::vector<std::string>& overrides,
                    const std::string& out_dir) {
  const ExperimentConfig config = load_config("", overrides);
  RandomStream data_rng(RandomStream::derive_seed(config.seed, 1ULL << 62));
  const Dataset dataset = generate_synthetic(config.synthetic_queries, config.synthetic_docs,
                                             config.synthetic_dim, data_rng);
  fs::create_directories(out_dir);
  {
    auto out = open_out(fs::path(out_dir) / "dataset.letor");
    write_letor(dataset, out);
  }
  for (int i = 0; i < count; ++i) {
    RandomStream rng(RandomStream::derive_seed(config.seed, 100 + i));
    const LinearRanker ranker = train_linear_ranker(
        dataset, config.ranker_train_queries, config.feature_fraction, rng);
    auto out = open_out(fs::path(out_dir) / ("ranker_" + std::to_string(i) + ".txt"));
    save_ranker(ranker, out);
  }
  std::cout << "wrote dataset.letor and " << count << " rankers to " << out_dir << "\n";
  return 0;
}

int cmd_summarize(const std::string& results_path, const std::string& out_dir) {
  std::ifstream in(results_path);
  if (!in) throw InvalidInputError("cannot open " + results_path);
  const std::vector<ResultRow> rows = read_results_csv(in);
  fs::create_directories(out_dir);
  auto out = open_out(fs::path(out_dir) / "summary.csv");
  write_summary_csv(summarize(rows), out);
  std::cout << "summary written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ranking-policy comparison laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", log_path, dataset_path, ranker1, ranker2;
  std::string results_path, oracle_method = "tdi";
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  int threads = 0;
  int ranker_count = 20;
  bool grid_search = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--set", overrides, "override a config key, e.g. --set budget=1000");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* compare = app.add_subcommand("compare", "run a method comparison experiment");
  compare->add_option("--config", config_path, "key = value config file");
  compare->add_option("--seed", seed, "master seed (overrides config)");
  compare->add_option("--threads", threads, "worker threads (overrides config)");
  add_common(compare);

  CLI::App* logopt = app.add_subcommand("logopt", "train a logging policy from a log file");
  logopt->add_option("--log", log_path, "interaction log file")->required();
  logopt->add_option("--dataset", dataset_path, "LETOR dataset file")->required();
  logopt->add_option("--ranker1", ranker1, "first ranker weights file")->required();
  logopt->add_option("--ranker2", ranker2, "second ranker weights file")->required();
  logopt->add_option("--seed", seed, "training seed");
  add_common(logopt);

  CLI::App* oracle = app.add_subcommand("oracle", "bias fixtures and grid search");
  oracle->add_option("--method", oracle_method, "grid-search method: tdi|pi|oi|ips");
  oracle->add_flag("--grid", grid_search, "run the sign-flip grid search");
  add_common(oracle);

  CLI::App* gen = app.add_subcommand("gen-rankers", "generate a dataset and linear rankers");
  gen->add_option("--count", ranker_count, "number of rankers");
  add_common(gen);

  CLI::App* summ = app.add_subcommand("summarize", "aggregate a results.csv");
  summ->add_option("--results", results_path, "results.csv path")->required();
  add_common(summ);

  CLI11_PARSE(app, argc, argv);

  try {
    if (compare->parsed()) {
      if (compare->count("--seed")) overrides.push_back("seed=" + std::to_string(seed));
      if (compare->count("--threads")) {
        overrides.push_back("threads=" + std::to_string(threads));
      }
      return cmd_compare(config_path, overrides, out_dir);
    }
    if (logopt->parsed()) {
      return cmd_logopt(log_path, dataset_path, ranker1, ranker2, overrides, out_dir, seed);
    }
    if (oracle->parsed()) return cmd_oracle(oracle_method, grid_search, out_dir);
    if (gen->parsed()) return cmd_gen_rankers(ranker_count, overrides, out_dir);
    if (summ->parsed()) return cmd_summarize(results_path, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
