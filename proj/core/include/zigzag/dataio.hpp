#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "zigzag/errors.hpp"
#include "zigzag/fsm.hpp"
#include "zigzag/ism.hpp"

namespace zigzag {

// Dataset file formats.
//
// Infinite sites: header "n=<int> model=ism", then one line per leaf of
// space-separated mutation coordinates (empty line = no mutations).
//
// Finite sites: header "n=<int> sites=<int> model=fsm alphabet=01", then one
// line of |S| characters per leaf.

IsmDataset read_ism_dataset(const std::string& path);
void write_ism_dataset(const IsmDataset& data, const std::string& path);

FsmDataset read_fsm_dataset(const std::string& path);
void write_fsm_dataset(const FsmDataset& data, const std::string& path);

enum class ModelKind { Ism, Fsm };

// Reads the header only.
ModelKind dataset_kind(const std::string& path);

enum class SamplerKind { ZigZag, Mh, Hybrid };

// Flat key=value run configuration; command-line flags override file values.
struct RunConfig {
  ModelKind model = ModelKind::Ism;
  SamplerKind sampler = SamplerKind::ZigZag;

  std::string dataset;  // exactly one of dataset / sim_n
  int sim_n = 0;
  double sim_theta = 1.0;
  int sim_sites = 0;  // fsm only
  std::uint64_t sim_seed = 1;

  double t_end = 100.0;  // zigzag / hybrid
  long sweeps = 10000;   // mh
  std::uint64_t seed = 1;

  double localization_c = 4.0;
  double increment = 1.0;  // window cap K
  double kappa = 10.0;     // hybrid MH rate
  double sigma_theta = 1.0;
  double sigma_times = 1.0;
  bool tune = true;         // warm-up scale tuning toward acceptance ~ 1/4
  long tune_sweeps = 2000;

  double v_theta = 0.0;  // 0 = pilot-run heuristic
  double theta0 = 0.0;   // 0 = Watterson-style estimate
  int max_init_tries = 1000;

  std::string out_trace = "trace.csv";
  std::string out_report = "report.txt";
  int discretize_samples = 10000;

  void validate() const;  // throws ConfigError
};

RunConfig parse_config_file(const std::string& path);
// "key=value" items applied on top of base.
RunConfig apply_overrides(RunConfig base, const std::vector<std::string>& items);
std::string serialize(const RunConfig& config);

// Subcommand bodies; throw DataError / ConfigError / InvariantViolation,
// which the CLI maps to exit codes 2 / 3 / 4.
void cmd_simulate_data(const RunConfig& config, const std::string& out_path,
                       std::ostream& log);
void cmd_run(const RunConfig& config, std::ostream& log);
void cmd_report(const std::vector<std::string>& trace_paths,
                const std::vector<std::string>& labels, int n_samples,
                const std::string& out_path, std::ostream& log);

}  // namespace zigzag
