#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zigzag/rng.hpp"
#include "zigzag/tau.hpp"

namespace zigzag {

// A target-model bug surfaced at runtime (rate bound violated, jump into a
// zero-density orthant, non-finite bound). Maps to CLI exit code 4.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Process state: ranked topology (the discrete mode), non-negative
// coordinates, and signed velocities. Coordinates are the holding times
// t_0..t_{n-2}, optionally followed by the mutation rate theta; velocity
// magnitudes are fixed over a run, flips change signs only. The topology is
// held by shared pointer so that state snapshots and the per-proposal probe
// states inside the thinning loop stay cheap.
struct HybridState {
  std::shared_ptr<const RankedTopology> topology;  // never null
  std::vector<double> coords;
  std::vector<double> vels;

  int dim() const { return static_cast<int>(coords.size()); }
  const RankedTopology& topo() const { return *topology; }
};

HybridState make_state(RankedTopology topology, std::vector<double> coords,
                       std::vector<double> vels);

enum class EventKind { Init, Flip, Reflect, BoundaryCross, Refresh, MhMove, End };

const char* to_string(EventKind kind);

enum class MhKind { Theta, Times, Spr };

const char* to_string(MhKind kind);

struct MhPayload {
  MhKind kind = MhKind::Theta;
  bool accepted = false;
  std::vector<double> coords_after;  // MH moves change coords discontinuously
};

// One event. States between events follow from linear motion, so only
// discontinuities are stored: the topology when the mode changed, and the
// post-move coordinates for MH moves.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Init;
  int coord = -1;  // flip/boundary coordinate, -1 otherwise
  std::shared_ptr<const RankedTopology> topology;  // set when the mode changed
  std::shared_ptr<const MhPayload> mh;             // set for MhMove
};

// Time-stamped event sequence on [0, t_end] with the initial state; supports
// exact replay of the piecewise-linear path.
struct EventTrace {
  HybridState initial;
  double t_end = 0.0;
  std::vector<Event> events;  // strictly increasing times; last one is End

  std::size_t count(EventKind kind) const;
};

// Sequential replay of a trace. Between events coords advance linearly; at a
// Reflect/BoundaryCross the hit coordinate is pinned to exactly zero, which
// reproduces the engine's own arithmetic bit for bit.
class TraceCursor {
 public:
  explicit TraceCursor(const EventTrace& trace);

  bool done() const { return next_ >= trace_->events.size(); }
  const Event& upcoming() const { return trace_->events[next_]; }
  const HybridState& state() const { return state_; }
  double time() const { return time_; }

  // Linear motion forward to a time at or before the upcoming event.
  const HybridState& advance_to(double time);

  // Advances to the upcoming event and applies it.
  void apply_upcoming();

 private:
  const EventTrace* trace_;
  HybridState state_;
  double time_ = 0.0;
  std::size_t next_ = 0;
};

// Per-coordinate localization: the window length T on which constant rate
// bounds are valid, and the coordinate whose boundary is reached at exactly
// T (-1 when the window ends with a refresh instead).
struct Localization {
  double window = 0.0;
  int boundary_coord = -1;
};

struct BoundaryJump {
  std::optional<RankedTopology> new_topology;  // nullopt = reflect in place
};

// Behavioral contract the simulation loop needs from a target. Rate and
// bound evaluations must not mutate observable state; the engine evaluates
// them at offset states along the current line of motion.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual int dim() const = 0;
  virtual double log_density(const HybridState& state) const = 0;

  // Flip rate of coordinate i at the given state.
  virtual double flip_rate(const HybridState& state, int i) const = 0;

  // Constant bound dominating flip_rate along {state advanced by s : s in
  // [0, window]}. Guaranteed by localize() to be finite.
  virtual double flip_bound(const HybridState& state, int i, double window) const = 0;

  virtual Localization localize(const HybridState& state) const = 0;

  // Applies the boundary kernel at {coords[coord] == 0, vels[coord] < 0}.
  // The engine flips vels[coord] itself; the model only reports the mode
  // change and must reject jumps into zero-density modes.
  virtual BoundaryJump boundary_jump(const HybridState& state, int coord,
                                     RngStream& rng) const = 0;
};

// Instantaneous state update raced against the zig-zag dynamics at a fixed
// Poisson rate; used for the hybrid sampler.
using InterruptKernel = std::function<MhPayload(HybridState&, RngStream&)>;

struct SimulateOptions {
  double t_end = 1.0;
  std::uint64_t seed = 1;
  double interrupt_rate = 0.0;        // kappa; 0 disables
  InterruptKernel interrupt_kernel;   // required when interrupt_rate > 0
};

// Thinned next-flip proposal for one coordinate: repeatedly draws Exp(bound)
// increments and accepts with probability rate/bound. A return value >=
// window means no flip inside the window. Evaluated rates exceeding the
// bound beyond tolerance are a target-model bug and throw.
double next_flip(const TargetModel& model, const HybridState& state, int coord,
                 double window, double bound, RngStream& rng);

// Simulates the zig-zag process on [0, t_end]: linear motion, thinned flips,
// localization refreshes, boundary jumps, and optional rate-kappa interrupt
// moves. Deterministic given the seed.
EventTrace simulate(const TargetModel& model, const HybridState& init,
                    const SimulateOptions& options);

// Exact time average of a functional that is linear in the coordinates
// (closed-form per-segment integration).
double path_mean(const EventTrace& trace,
                 const std::function<double(const HybridState&)>& f);

// n_samples state snapshots at equally spaced times spanning [0, t_end].
std::vector<HybridState> discretize(const EventTrace& trace, int n_samples);

// CSV serialization: time,kind,coord_index,mode_id,t_1..t_{n-1},theta with
// the two MH columns appended for traces produced by MH or hybrid runs.
// Coordinate indices are 1-based in the file; theta prints as index n. For
// MH moves a same-time refresh row carrying the pre-move state precedes the
// mh row so the piecewise-linear path stays reconstructible from the file.
void write_trace_csv(const EventTrace& trace, const std::string& path,
                     bool theta_coord, bool mh_columns);

// Equally spaced samples of scalar columns read back from a trace CSV.
struct TraceSamples {
  std::vector<double> theta;        // empty when the trace has no theta coordinate
  std::vector<double> tree_height;  // sum of holding times
};

TraceSamples sample_trace_csv(const std::string& path, int n_samples);

}  // namespace zigzag
