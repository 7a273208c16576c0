// Command-line front end: simulate datasets, run the zig-zag / MH / hybrid
// samplers on coalescent posteriors, and summarize traces.
//
// Exit codes: 0 success, 2 data error, 3 config error, 4 runtime invariant
// violation.

#include <CLI11.hpp>
#include <iostream>

#include "zigzag/dataio.hpp"

namespace {

int dispatch(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const zigzag::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const zigzag::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const zigzag::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zig-zag and Metropolis-Hastings samplers for coalescent tree posteriors"};
  app.require_subcommand(1);

  // simulate-data
  auto* sim = app.add_subcommand("simulate-data", "Simulate a dataset onto a coalescent tree");
  std::string sim_model = "ism";
  zigzag::RunConfig sim_config;
  std::string sim_out = "data.txt";
  sim->add_option("--model", sim_model, "ism or fsm")->check(CLI::IsMember({"ism", "fsm"}));
  sim->add_option("--n", sim_config.sim_n, "number of leaves")->required();
  sim->add_option("--theta", sim_config.sim_theta, "mutation rate");
  sim->add_option("--sites", sim_config.sim_sites, "site count (fsm)");
  sim->add_option("--seed", sim_config.sim_seed, "simulation seed");
  sim->add_option("--out", sim_out, "output path");

  // run
  auto* run = app.add_subcommand("run", "Run a sampler and write trace + report");
  std::string run_config_path;
  std::vector<std::string> run_overrides;
  run->add_option("--config", run_config_path, "key=value config file");
  run->add_option("--set", run_overrides,
                  "config overrides, e.g. --set sampler=zigzag --set t_end=50");

  // report
  auto* rep = app.add_subcommand("report", "Summarize one or more trace CSVs");
  std::vector<std::string> rep_traces;
  std::vector<std::string> rep_labels;
  std::string rep_out;
  int rep_samples = 10000;
  rep->add_option("traces", rep_traces, "trace CSV paths")->required();
  rep->add_option("--labels", rep_labels, "row labels (one per trace)");
  rep->add_option("--samples", rep_samples, "path discretization count");
  rep->add_option("--out", rep_out, "also write the table to this path");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    return dispatch([&] {
      sim_config.model = sim_model == "fsm" ? zigzag::ModelKind::Fsm : zigzag::ModelKind::Ism;
      zigzag::cmd_simulate_data(sim_config, sim_out, std::cout);
    });
  }
  if (run->parsed()) {
    return dispatch([&] {
      zigzag::RunConfig config;
      if (!run_config_path.empty()) config = zigzag::parse_config_file(run_config_path);
      config = zigzag::apply_overrides(std::move(config), run_overrides);
      zigzag::cmd_run(config, std::cout);
    });
  }
  return dispatch([&] {
    zigzag::cmd_report(rep_traces, rep_labels, rep_samples, rep_out, std::cout);
  });
}
