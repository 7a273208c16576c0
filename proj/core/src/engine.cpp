#include "zigzag/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace zigzag {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Relative slack for the runtime dominance check; anything beyond it is a
// target-model bug, not floating-point noise.
constexpr double kRateTol = 1e-9;

}  // namespace

HybridState make_state(RankedTopology topology, std::vector<double> coords,
                       std::vector<double> vels) {
  return HybridState{std::make_shared<const RankedTopology>(std::move(topology)),
                     std::move(coords), std::move(vels)};
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Init: return "init";
    case EventKind::Flip: return "flip";
    case EventKind::Reflect: return "reflect";
    case EventKind::BoundaryCross: return "boundary";
    case EventKind::Refresh: return "refresh";
    case EventKind::MhMove: return "mh";
    case EventKind::End: return "end";
  }
  return "?";
}

const char* to_string(MhKind kind) {
  switch (kind) {
    case MhKind::Theta: return "theta";
    case MhKind::Times: return "times";
    case MhKind::Spr: return "spr";
  }
  return "?";
}

std::size_t EventTrace::count(EventKind kind) const {
  std::size_t c = 0;
  for (const auto& e : events) c += (e.kind == kind);
  return c;
}

TraceCursor::TraceCursor(const EventTrace& trace)
    : trace_(&trace), state_(trace.initial) {}

const HybridState& TraceCursor::advance_to(double time) {
  const double dt = time - time_;
  if (dt > 0.0) {
    for (int i = 0; i < state_.dim(); ++i) state_.coords[i] += state_.vels[i] * dt;
    time_ = time;
  }
  return state_;
}

void TraceCursor::apply_upcoming() {
  const Event& e = trace_->events[next_];
  advance_to(e.time);
  switch (e.kind) {
    case EventKind::Flip:
      state_.vels[e.coord] = -state_.vels[e.coord];
      break;
    case EventKind::Reflect:
    case EventKind::BoundaryCross:
      state_.coords[e.coord] = 0.0;  // the engine pins the hit exactly
      state_.vels[e.coord] = -state_.vels[e.coord];
      break;
    case EventKind::MhMove:
      state_.coords = e.mh->coords_after;
      break;
    case EventKind::Init:
    case EventKind::Refresh:
    case EventKind::End:
      break;
  }
  if (e.topology) state_.topology = e.topology;
  ++next_;
}

double next_flip(const TargetModel& model, const HybridState& state, int coord,
                 double window, double bound, RngStream& rng) {
  if (bound <= 0.0) return kInf;
  HybridState probe = state;
  double rho = 0.0;
  while (true) {
    rho += rng.exponential(bound);
    double alpha;
    if (rho < window) {
      for (int i = 0; i < state.dim(); ++i)
        probe.coords[i] = state.coords[i] + state.vels[i] * rho;
      const double rate = model.flip_rate(probe, coord);
      if (!std::isfinite(rate) || rate < 0.0)
        throw InvariantViolation("flip rate evaluated to an invalid value");
      if (rate > bound * (1.0 + kRateTol) + 1e-12)
        throw InvariantViolation("flip rate exceeds its thinning bound");
      alpha = rate / bound;
    } else {
      alpha = 1.0;  // beyond the window: cannot be the shortest waiting time
    }
    if (rng.uniform() < alpha) return rho;
  }
}

namespace {

enum class Winner { Refresh, Boundary, Flip, Interrupt };

}  // namespace

EventTrace simulate(const TargetModel& model, const HybridState& init,
                    const SimulateOptions& options) {
  const int d = model.dim();
  if (init.dim() != d || static_cast<int>(init.vels.size()) != d)
    throw std::invalid_argument("state dimension does not match the model");
  for (double c : init.coords)
    if (!(c > 0.0)) throw std::invalid_argument("initial coordinates must be positive");
  if (!(options.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (!std::isfinite(model.log_density(init)))
    throw std::invalid_argument("initial state has zero target density");
  if (options.interrupt_rate > 0.0 && !options.interrupt_kernel)
    throw std::invalid_argument("interrupt rate set without a kernel");

  // Independent streams: one per coordinate for the flip proposals (so the
  // race outcome does not depend on evaluation order), one for boundary
  // kernels, one for interrupt moves.
  std::vector<RngStream> coord_rng;
  coord_rng.reserve(d);
  for (int i = 0; i < d; ++i) coord_rng.emplace_back(options.seed, i);
  RngStream jump_rng(options.seed, d);
  RngStream interrupt_rng(options.seed, d + 1);

  EventTrace trace{init, options.t_end, {}};
  HybridState state = init;
  double t = 0.0;
  double next_interrupt =
      options.interrupt_rate > 0.0 ? interrupt_rng.exponential(options.interrupt_rate) : kInf;

  while (true) {
    const Localization loc = model.localize(state);
    if (!(loc.window > 0.0) || !std::isfinite(loc.window))
      throw InvariantViolation("localization window must be positive and finite");

    double tau = loc.window;
    Winner winner = loc.boundary_coord >= 0 ? Winner::Boundary : Winner::Refresh;
    int winner_coord = loc.boundary_coord;
    for (int i = 0; i < d; ++i) {
      const double bound = model.flip_bound(state, i, loc.window);
      if (!std::isfinite(bound) || bound < 0.0)
        throw InvariantViolation("flip bound must be finite and non-negative");
      const double rho = next_flip(model, state, i, loc.window, bound, coord_rng[i]);
      if (rho < tau) {
        tau = rho;
        winner = Winner::Flip;
        winner_coord = i;
      }
    }
    if (next_interrupt - t < tau) {
      tau = next_interrupt - t;
      winner = Winner::Interrupt;
      winner_coord = -1;
    }

    if (t + tau >= options.t_end) {
      const double dt = options.t_end - t;
      for (int i = 0; i < d; ++i) state.coords[i] += state.vels[i] * dt;
      trace.events.push_back({options.t_end, EventKind::End, -1, nullptr, nullptr});
      break;
    }

    t += tau;
    for (int i = 0; i < d; ++i) {
      state.coords[i] += state.vels[i] * tau;
      if (state.coords[i] < 0.0) {
        // Localization guarantees non-negativity in exact arithmetic; allow
        // rounding noise only.
        if (state.coords[i] < -1e-9 * (1.0 + std::abs(state.vels[i]) * tau))
          throw InvariantViolation("coordinate crossed zero without a boundary event");
        state.coords[i] = 0.0;
      }
    }

    switch (winner) {
      case Winner::Flip: {
        state.vels[winner_coord] = -state.vels[winner_coord];
        trace.events.push_back({t, EventKind::Flip, winner_coord, nullptr, nullptr});
        break;
      }
      case Winner::Boundary: {
        state.coords[winner_coord] = 0.0;
        BoundaryJump jump = model.boundary_jump(state, winner_coord, jump_rng);
        state.vels[winner_coord] = -state.vels[winner_coord];
        if (jump.new_topology) {
          state.topology =
              std::make_shared<const RankedTopology>(std::move(*jump.new_topology));
          trace.events.push_back(
              {t, EventKind::BoundaryCross, winner_coord, state.topology, nullptr});
        } else {
          trace.events.push_back({t, EventKind::Reflect, winner_coord, nullptr, nullptr});
        }
        break;
      }
      case Winner::Refresh: {
        trace.events.push_back({t, EventKind::Refresh, -1, nullptr, nullptr});
        break;
      }
      case Winner::Interrupt: {
        const auto topo_before = state.topology;
        MhPayload payload = options.interrupt_kernel(state, interrupt_rng);
        payload.coords_after = state.coords;
        Event e{t, EventKind::MhMove, -1, nullptr,
                std::make_shared<const MhPayload>(std::move(payload))};
        if (state.topology != topo_before && !(*state.topology == *topo_before))
          e.topology = state.topology;
        trace.events.push_back(std::move(e));
        next_interrupt = t + interrupt_rng.exponential(options.interrupt_rate);
        break;
      }
    }
  }
  return trace;
}

double path_mean(const EventTrace& trace,
                 const std::function<double(const HybridState&)>& f) {
  if (trace.events.empty()) throw std::invalid_argument("empty trace");
  TraceCursor cursor(trace);
  double acc = 0.0;
  double t0 = 0.0;
  double f0 = f(cursor.state());
  while (!cursor.done()) {
    const double t1 = cursor.upcoming().time;
    const double f1 = f(cursor.advance_to(t1));
    acc += (t1 - t0) * 0.5 * (f0 + f1);  // exact for f linear in coords
    cursor.apply_upcoming();
    t0 = t1;
    f0 = f(cursor.state());
  }
  return acc / trace.t_end;
}

std::vector<HybridState> discretize(const EventTrace& trace, int n_samples) {
  if (n_samples < 2) throw std::invalid_argument("need at least 2 samples");
  std::vector<HybridState> out;
  out.reserve(n_samples);
  TraceCursor cursor(trace);
  for (int k = 0; k < n_samples; ++k) {
    const double time = trace.t_end * k / (n_samples - 1);
    while (!cursor.done() && cursor.upcoming().time <= time) cursor.apply_upcoming();
    cursor.advance_to(time);
    out.push_back(cursor.state());
  }
  return out;
}

namespace {

void write_row(std::ostream& os, double time, const char* kind, int coord_file_index,
               const HybridState& state, bool theta_coord, bool mh_columns,
               const MhPayload* mh) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", time);
  os << buf << ',' << kind << ',' << coord_file_index << ',';
  os << std::hex << state.topo().id_hash() << std::dec;
  const int d = state.dim();
  const int times = theta_coord ? d - 1 : d;
  for (int i = 0; i < times; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", state.coords[i]);
    os << ',' << buf;
  }
  if (theta_coord) {
    std::snprintf(buf, sizeof buf, "%.17g", state.coords[d - 1]);
    os << ',' << buf;
  }
  if (mh_columns) {
    if (mh)
      os << ',' << to_string(mh->kind) << ',' << (mh->accepted ? 1 : 0);
    else
      os << ",,";
  }
  os << '\n';
}

void write_trace_csv(const EventTrace& trace, std::ostream& os, bool theta_coord,
                     bool mh_columns) {
  const int d = trace.initial.dim();
  const int times = theta_coord ? d - 1 : d;
  os << "time,kind,coord_index,mode_id";
  for (int i = 1; i <= times; ++i) os << ",t_" << i;
  if (theta_coord) os << ",theta";
  if (mh_columns) os << ",mh_kind,mh_accept";
  os << '\n';

  TraceCursor cursor(trace);
  write_row(os, 0.0, "init", 0, cursor.state(), theta_coord, mh_columns, nullptr);
  while (!cursor.done()) {
    const Event& e = cursor.upcoming();
    if (e.kind == EventKind::MhMove) {
      // Pre-move state at the same timestamp keeps the piecewise-linear path
      // reconstructible across the jump.
      write_row(os, e.time, "mh_pre", 0, cursor.advance_to(e.time), theta_coord,
                mh_columns, nullptr);
    }
    cursor.apply_upcoming();
    const int file_coord = e.coord >= 0 ? e.coord + 1 : 0;
    write_row(os, e.time, to_string(e.kind), file_coord, cursor.state(), theta_coord,
              mh_columns, e.mh.get());
  }
}

}  // namespace

void write_trace_csv(const EventTrace& trace, const std::string& path, bool theta_coord,
                     bool mh_columns) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_trace_csv(trace, os, theta_coord, mh_columns);
}

TraceSamples sample_trace_csv(const std::string& path, int n_samples) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("empty trace file: " + path);

  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) columns.push_back(tok);
  }
  int first_time_col = -1, num_times = 0, theta_col = -1;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].rfind("t_", 0) == 0) {
      if (first_time_col < 0) first_time_col = static_cast<int>(c);
      ++num_times;
    } else if (columns[c] == "theta") {
      theta_col = static_cast<int>(c);
    }
  }
  if (first_time_col < 0) throw std::runtime_error("no holding-time columns in " + path);

  struct Row {
    double time;
    double theta;
    double height;
  };
  std::vector<Row> rows;
  std::string line;
  std::vector<std::string> fields;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    fields.clear();
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    Row row{};
    row.time = std::stod(fields[0]);
    double height = 0.0;
    for (int i = 0; i < num_times; ++i) height += std::stod(fields[first_time_col + i]);
    row.height = height;
    row.theta = theta_col >= 0 ? std::stod(fields[theta_col]) : 0.0;
    rows.push_back(row);
  }
  if (rows.size() < 2) throw std::runtime_error("trace has no events: " + path);

  TraceSamples samples;
  samples.tree_height.reserve(n_samples);
  if (theta_col >= 0) samples.theta.reserve(n_samples);
  const double t_end = rows.back().time;
  std::size_t r = 0;
  for (int k = 0; k < n_samples; ++k) {
    const double time = t_end * k / (n_samples - 1);
    while (r + 2 < rows.size() && rows[r + 1].time <= time) ++r;
    const Row& a = rows[r];
    const Row& b = rows[r + 1];
    const double w = b.time > a.time ? (time - a.time) / (b.time - a.time) : 1.0;
    samples.tree_height.push_back(a.height + w * (b.height - a.height));
    if (theta_col >= 0) samples.theta.push_back(a.theta + w * (b.theta - a.theta));
  }
  return samples;
}

}  // namespace zigzag
