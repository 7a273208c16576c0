#include "zigzag/dataio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "zigzag/diagnostics.hpp"
#include "zigzag/mh.hpp"

namespace zigzag {

namespace {

std::map<std::string, std::string> parse_header(const std::string& line) {
  std::map<std::string, std::string> fields;
  std::stringstream ss(line);
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw DataError("malformed header token: " + token);
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return fields;
}

int header_int(const std::map<std::string, std::string>& fields, const std::string& key) {
  const auto it = fields.find(key);
  if (it == fields.end()) throw DataError("header missing " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("header field " + key + " is not an integer");
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  return is;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path + " for writing");
  return os;
}

}  // namespace

IsmDataset read_ism_dataset(const std::string& path) {
  auto is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty dataset file: " + path);
  const auto header = parse_header(line);
  if (header.count("model") == 0 || header.at("model") != "ism")
    throw DataError("expected model=ism in " + path);
  const int n = header_int(header, "n");
  std::vector<std::vector<double>> leaves;
  leaves.reserve(n);
  while (static_cast<int>(leaves.size()) < n && std::getline(is, line)) {
    std::vector<double> coords;
    std::stringstream ss(line);
    double x;
    while (ss >> x) coords.push_back(x);
    leaves.push_back(std::move(coords));
  }
  if (static_cast<int>(leaves.size()) != n)
    throw DataError("expected " + std::to_string(n) + " leaf lines in " + path);
  return IsmDataset(n, std::move(leaves));
}

void write_ism_dataset(const IsmDataset& data, const std::string& path) {
  auto os = open_output(path);
  os << "n=" << data.leaf_count() << " model=ism\n";
  char buf[32];
  for (const auto& leaf : data.leaf_mutations()) {
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", leaf[i]);
      os << (i ? " " : "") << buf;
    }
    os << '\n';
  }
}

FsmDataset read_fsm_dataset(const std::string& path) {
  auto is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty dataset file: " + path);
  const auto header = parse_header(line);
  if (header.count("model") == 0 || header.at("model") != "fsm")
    throw DataError("expected model=fsm in " + path);
  const int n = header_int(header, "n");
  const int sites = header_int(header, "sites");
  std::string alphabet = header.count("alphabet") ? header.at("alphabet") : "01";
  std::vector<std::uint8_t> types(static_cast<std::size_t>(sites) * n);
  for (int leaf = 0; leaf < n; ++leaf) {
    if (!std::getline(is, line))
      throw DataError("expected " + std::to_string(n) + " leaf lines in " + path);
    if (static_cast<int>(line.size()) != sites)
      throw DataError("leaf line length does not match sites in " + path);
    for (int s = 0; s < sites; ++s) {
      const auto pos = alphabet.find(line[s]);
      if (pos == std::string::npos)
        throw DataError(std::string("leaf type '") + line[s] + "' outside alphabet");
      types[static_cast<std::size_t>(s) * n + leaf] = static_cast<std::uint8_t>(pos);
    }
  }
  return FsmDataset(n, sites, std::move(alphabet), std::move(types));
}

void write_fsm_dataset(const FsmDataset& data, const std::string& path) {
  auto os = open_output(path);
  os << "n=" << data.leaf_count() << " sites=" << data.num_sites()
     << " model=fsm alphabet=" << data.alphabet() << '\n';
  for (int leaf = 0; leaf < data.leaf_count(); ++leaf) {
    for (int s = 0; s < data.num_sites(); ++s)
      os << data.alphabet()[data.type(s, leaf)];
    os << '\n';
  }
}

ModelKind dataset_kind(const std::string& path) {
  auto is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty dataset file: " + path);
  const auto header = parse_header(line);
  if (header.count("model") == 0) throw DataError("header missing model in " + path);
  if (header.at("model") == "ism") return ModelKind::Ism;
  if (header.at("model") == "fsm") return ModelKind::Fsm;
  throw DataError("unknown model '" + header.at("model") + "' in " + path);
}

void RunConfig::validate() const {
  const bool has_file = !dataset.empty();
  const bool has_sim = sim_n > 0;
  if (has_file == has_sim)
    throw ConfigError("exactly one of dataset=<path> or sim_n=<n> is required");
  if (has_sim && sim_n < 2) throw ConfigError("sim_n must be at least 2");
  if (model == ModelKind::Fsm && has_sim && sim_sites < 1)
    throw ConfigError("fsm simulation needs sim_sites >= 1");
  if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (sweeps < 1) throw ConfigError("sweeps must be positive");
  if (!(localization_c > 0.0)) throw ConfigError("localization_c must be positive");
  if (!(increment > 0.0)) throw ConfigError("increment must be positive");
  if (kappa < 0.0) throw ConfigError("kappa must be non-negative");
  if (!(sigma_theta > 0.0) || !(sigma_times > 0.0))
    throw ConfigError("proposal scales must be positive");
  if (discretize_samples < 100) throw ConfigError("discretize_samples must be >= 100");
}

namespace {

ModelKind parse_model(const std::string& v) {
  if (v == "ism") return ModelKind::Ism;
  if (v == "fsm") return ModelKind::Fsm;
  throw ConfigError("model must be ism or fsm, got " + v);
}

SamplerKind parse_sampler(const std::string& v) {
  if (v == "zigzag") return SamplerKind::ZigZag;
  if (v == "mh") return SamplerKind::Mh;
  if (v == "hybrid") return SamplerKind::Hybrid;
  throw ConfigError("sampler must be zigzag, mh or hybrid, got " + v);
}

void apply_kv(RunConfig& config, const std::string& key, const std::string& value) {
  try {
    if (key == "model") config.model = parse_model(value);
    else if (key == "sampler") config.sampler = parse_sampler(value);
    else if (key == "dataset") config.dataset = value;
    else if (key == "sim_n") config.sim_n = std::stoi(value);
    else if (key == "sim_theta") config.sim_theta = std::stod(value);
    else if (key == "sim_sites") config.sim_sites = std::stoi(value);
    else if (key == "sim_seed") config.sim_seed = std::stoull(value);
    else if (key == "t_end") config.t_end = std::stod(value);
    else if (key == "sweeps") config.sweeps = std::stol(value);
    else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "localization_c") config.localization_c = std::stod(value);
    else if (key == "increment") config.increment = std::stod(value);
    else if (key == "kappa") config.kappa = std::stod(value);
    else if (key == "sigma_theta") config.sigma_theta = std::stod(value);
    else if (key == "sigma_times") config.sigma_times = std::stod(value);
    else if (key == "tune") config.tune = value == "1" || value == "true";
    else if (key == "tune_sweeps") config.tune_sweeps = std::stol(value);
    else if (key == "v_theta") config.v_theta = std::stod(value);
    else if (key == "theta0") config.theta0 = std::stod(value);
    else if (key == "max_init_tries") config.max_init_tries = std::stoi(value);
    else if (key == "out_trace") config.out_trace = value;
    else if (key == "out_report") config.out_report = value;
    else if (key == "discretize_samples") config.discretize_samples = std::stoi(value);
    else throw ConfigError("unknown config key: " + key);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + value);
  }
}

}  // namespace

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  RunConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    apply_kv(config, line.substr(0, eq), line.substr(eq + 1));
  }
  return config;
}

RunConfig apply_overrides(RunConfig base, const std::vector<std::string>& items) {
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got " + item);
    apply_kv(base, item.substr(0, eq), item.substr(eq + 1));
  }
  return base;
}

std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  os << "model=" << (c.model == ModelKind::Ism ? "ism" : "fsm") << '\n';
  os << "sampler="
     << (c.sampler == SamplerKind::ZigZag ? "zigzag"
                                          : c.sampler == SamplerKind::Mh ? "mh" : "hybrid")
     << '\n';
  if (!c.dataset.empty()) os << "dataset=" << c.dataset << '\n';
  if (c.sim_n > 0) {
    os << "sim_n=" << c.sim_n << '\n';
    os << "sim_theta=" << c.sim_theta << '\n';
    if (c.sim_sites > 0) os << "sim_sites=" << c.sim_sites << '\n';
    os << "sim_seed=" << c.sim_seed << '\n';
  }
  os << "t_end=" << c.t_end << '\n';
  os << "sweeps=" << c.sweeps << '\n';
  os << "seed=" << c.seed << '\n';
  os << "localization_c=" << c.localization_c << '\n';
  os << "increment=" << c.increment << '\n';
  os << "kappa=" << c.kappa << '\n';
  os << "sigma_theta=" << c.sigma_theta << '\n';
  os << "sigma_times=" << c.sigma_times << '\n';
  os << "tune=" << (c.tune ? 1 : 0) << '\n';
  os << "tune_sweeps=" << c.tune_sweeps << '\n';
  os << "v_theta=" << c.v_theta << '\n';
  os << "theta0=" << c.theta0 << '\n';
  os << "max_init_tries=" << c.max_init_tries << '\n';
  os << "out_trace=" << c.out_trace << '\n';
  os << "out_report=" << c.out_report << '\n';
  os << "discretize_samples=" << c.discretize_samples << '\n';
  return os.str();
}

namespace {

double watterson_theta(int n, int segregating) {
  double harmonic = 0.0;
  for (int k = 1; k < n; ++k) harmonic += 1.0 / k;
  return std::max(segregating / harmonic, 1e-2);
}

struct PreparedRun {
  std::unique_ptr<CoalescentTargetBase> target;
  HybridState init;
  std::string data_summary;
};

PreparedRun prepare_run(const RunConfig& config, std::ostream& log) {
  PreparedRun run;
  RngStream init_rng(config.seed, 9001);

  if (config.model == ModelKind::Ism) {
    std::shared_ptr<const IsmDataset> data;
    if (!config.dataset.empty()) {
      data = std::make_shared<const IsmDataset>(read_ism_dataset(config.dataset));
    } else {
      RngStream sim_rng(config.sim_seed, 9000);
      const auto tree = simulate_coalescent(config.sim_n, sim_rng);
      data = std::make_shared<const IsmDataset>(
          simulate_ism_data(tree.topology, tree.holding_times, config.sim_theta, sim_rng));
    }
    const auto summary = summarize(*data);
    {
      std::ostringstream os;
      os << "data: n=" << summary.leaf_count << " types=" << summary.distinct_types
         << " mutations=" << summary.mutation_count;
      run.data_summary = os.str();
    }
    auto target = std::make_unique<IsmTarget>(data);
    const double theta0 = config.theta0 > 0.0
                              ? config.theta0
                              : watterson_theta(data->leaf_count(), data->total_mutations());
    auto tree = initial_ism_tree(*data, init_rng, config.max_init_tries);
    std::vector<double> coords = tree.holding_times;
    coords.push_back(theta0);
    std::vector<double> vels = default_speeds(data->leaf_count(), true, 1.0);
    run.init = make_state(std::move(tree.topology), std::move(coords), std::move(vels));
    run.target = std::move(target);
  } else {
    std::shared_ptr<const FsmDataset> data;
    if (!config.dataset.empty()) {
      data = std::make_shared<const FsmDataset>(read_fsm_dataset(config.dataset));
    } else {
      RngStream sim_rng(config.sim_seed, 9000);
      const auto tree = simulate_coalescent(config.sim_n, sim_rng);
      data = std::make_shared<const FsmDataset>(
          simulate_fsm_data(tree.topology, tree.holding_times, config.sim_theta,
                            config.sim_sites, *binary_symmetric_kernel(), sim_rng));
    }
    {
      std::ostringstream os;
      os << "data: n=" << data->leaf_count() << " sites=" << data->num_sites()
         << " segregating=" << data->segregating_sites();
      run.data_summary = os.str();
    }
    auto target = std::make_unique<FsmTarget>(data);
    const double theta0 =
        config.theta0 > 0.0
            ? config.theta0
            : watterson_theta(data->leaf_count(), data->segregating_sites());
    auto tree = simulate_coalescent(data->leaf_count(), init_rng);
    std::vector<double> coords = tree.holding_times;
    coords.push_back(theta0);
    std::vector<double> vels = default_speeds(data->leaf_count(), true, 1.0);
    run.init = make_state(std::move(tree.topology), std::move(coords), std::move(vels));
    run.target = std::move(target);
  }

  run.target->set_localization_c(config.localization_c);
  run.target->set_default_increment(config.increment);

  // Random initial velocity signs.
  for (double& v : run.init.vels)
    if (init_rng.bernoulli(0.5)) v = -v;

  if (!std::isfinite(run.target->log_density(run.init)))
    throw DataError("initial state has zero target density");

  log << run.data_summary << '\n';
  log << topology_log_line(run.init.topo()) << '\n';
  return run;
}

// "set the theta speed from trial runs": short pilot chain, speed =
// 2 x pilot posterior mean per unit time. Heuristic, documented as such.
double pilot_theta_speed(const CoalescentTargetBase& target, const HybridState& init,
                         const RunConfig& config, std::ostream& log) {
  MhConfig mh_config{config.sigma_theta, config.sigma_times, 0.0};
  HybridState state = init;
  auto result = mh_run(target, state, 200, mh_config, config.seed ^ 0x9e37);
  const auto states = discretize(result.trace, 200);
  double mean = 0.0;
  for (const auto& s : states) mean += s.coords.back();
  mean /= states.size();
  const double speed = std::max(2.0 * mean, 1e-3);
  log << "pilot theta speed: " << speed << '\n';
  return speed;
}

}  // namespace

void cmd_simulate_data(const RunConfig& config, const std::string& out_path,
                       std::ostream& log) {
  if (config.sim_n < 2) throw ConfigError("simulate-data needs sim_n >= 2");
  RngStream rng(config.sim_seed, 9000);
  const auto tree = simulate_coalescent(config.sim_n, rng);
  if (config.model == ModelKind::Ism) {
    const auto data =
        simulate_ism_data(tree.topology, tree.holding_times, config.sim_theta, rng);
    write_ism_dataset(data, out_path);
    const auto summary = summarize(data);
    log << "wrote " << out_path << ": n=" << summary.leaf_count
        << " types=" << summary.distinct_types
        << " mutations=" << summary.mutation_count << '\n';
  } else {
    if (config.sim_sites < 1) throw ConfigError("fsm simulation needs sim_sites >= 1");
    const auto data =
        simulate_fsm_data(tree.topology, tree.holding_times, config.sim_theta,
                          config.sim_sites, *binary_symmetric_kernel(), rng);
    write_fsm_dataset(data, out_path);
    log << "wrote " << out_path << ": n=" << data.leaf_count()
        << " sites=" << data.num_sites()
        << " segregating=" << data.segregating_sites() << '\n';
  }
}

void cmd_run(const RunConfig& config, std::ostream& log) {
  config.validate();
  PreparedRun run = prepare_run(config, log);
  CoalescentTargetBase& target = *run.target;

  MhConfig mh_config{config.sigma_theta, config.sigma_times, config.kappa};
  if (config.sampler != SamplerKind::ZigZag && config.tune) {
    HybridState warm = run.init;
    mh_config = tune_mh(target, warm, config.tune_sweeps, mh_config, config.seed ^ 0x7777);
    mh_config.kappa = config.kappa;
    log << "tuned sigma_theta=" << mh_config.sigma_theta
        << " sigma_times=" << mh_config.sigma_times << '\n';
  }
  if (config.sampler != SamplerKind::Mh) {
    const double v_theta = config.v_theta > 0.0
                               ? config.v_theta
                               : pilot_theta_speed(target, run.init, config, log);
    run.init.vels[run.init.dim() - 1] =
        std::copysign(v_theta, run.init.vels[run.init.dim() - 1]);
  }

  const auto t0 = std::chrono::steady_clock::now();
  MhRunResult result;
  const char* method = "zigzag";
  switch (config.sampler) {
    case SamplerKind::ZigZag: {
      SimulateOptions opts;
      opts.t_end = config.t_end;
      opts.seed = config.seed;
      result.trace = simulate(target, run.init, opts);
      break;
    }
    case SamplerKind::Mh:
      method = "mh";
      result = mh_run(target, run.init, config.sweeps, mh_config, config.seed);
      break;
    case SamplerKind::Hybrid:
      method = "hybrid";
      result = hybrid_run(target, run.init, config.t_end, config.kappa, mh_config,
                          config.seed);
      break;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const bool mh_columns = config.sampler != SamplerKind::ZigZag;
  write_trace_csv(result.trace, config.out_trace, target.has_theta(), mh_columns);

  const auto report = compare_report({{method, &result.trace, wall}}, target.has_theta(),
                                     config.discretize_samples);
  {
    std::ofstream os(config.out_report);
    if (!os) throw DataError("cannot open " + config.out_report + " for writing");
    os << report.to_text();
  }

  const auto& counters = target.counters();
  log << "wall_seconds=" << wall << " events=" << result.trace.events.size() - 1
      << " density_evals=" << counters.density_evals
      << " rate_evals=" << counters.rate_evals
      << " bound_evals=" << counters.bound_evals << '\n';
  if (config.sampler != SamplerKind::ZigZag) {
    log << "acceptance theta=" << result.stats.acceptance(MhKind::Theta)
        << " times=" << result.stats.acceptance(MhKind::Times)
        << " spr=" << result.stats.acceptance(MhKind::Spr) << '\n';
  }
  log << report.to_text();
}

void cmd_report(const std::vector<std::string>& trace_paths,
                const std::vector<std::string>& labels, int n_samples,
                const std::string& out_path, std::ostream& log) {
  if (trace_paths.empty()) throw ConfigError("report needs at least one trace");
  if (!labels.empty() && labels.size() != trace_paths.size())
    throw ConfigError("labels must match the number of traces");

  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %-8s %12s %12s %10s %8s\n", "trace", "stat",
                "mean", "se", "ess", "flag");
  os << buf;
  for (std::size_t i = 0; i < trace_paths.size(); ++i) {
    const auto samples = sample_trace_csv(trace_paths[i], n_samples);
    const std::string label = labels.empty() ? trace_paths[i] : labels[i];
    const auto add = [&](const char* stat, const std::vector<double>& xs) {
      if (xs.empty()) return;
      const auto ess = batch_means_ess(xs);
      std::snprintf(buf, sizeof buf, "%-12s %-8s %12.6g %12.4g %10.4g %8s\n",
                    label.c_str(), stat, ess.mean, ess.se_mean, ess.ess,
                    (ess.degenerate || ess.unstable) ? "*" : "");
      os << buf;
    };
    add("theta", samples.theta);
    add("height", samples.tree_height);
  }
  if (!out_path.empty()) {
    std::ofstream file(out_path);
    if (!file) throw DataError("cannot open " + out_path + " for writing");
    file << os.str();
  }
  log << os.str();
}

}  // namespace zigzag
