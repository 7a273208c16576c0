#include "zigzag/fsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace zigzag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int poisson(double mean, RngStream& rng) {
  int k = 0;
  double acc = rng.exponential(1.0);
  while (acc < mean) {
    ++k;
    acc += rng.exponential(1.0);
  }
  return k;
}

// sup/inf of theta * exp(-theta * len) over a box; decreasing in len,
// unimodal in theta with mode at 1/len.
std::pair<double, double> rate_exp_range(Interval len, Interval theta) {
  const double peak = len.lo > 0.0 ? std::clamp(1.0 / len.lo, theta.lo, theta.hi) : theta.hi;
  const double hi = peak * std::exp(-peak * len.lo);
  const double lo = std::min(theta.lo * std::exp(-theta.lo * len.hi),
                             theta.hi * std::exp(-theta.hi * len.hi));
  return {lo, hi};
}

// Same for len * exp(-theta * len): decreasing in theta, unimodal in len.
std::pair<double, double> len_exp_range(Interval len, Interval theta) {
  const double peak = theta.lo > 0.0 ? std::clamp(1.0 / theta.lo, len.lo, len.hi) : len.hi;
  const double hi = peak * std::exp(-theta.lo * peak);
  const double lo = std::min(len.lo * std::exp(-theta.hi * len.lo),
                             len.hi * std::exp(-theta.hi * len.hi));
  return {lo, hi};
}

}  // namespace

Interval interval_div(const Interval& num, const Interval& den) {
  if (!(den.lo > 0.0))
    throw InvariantViolation("interval likelihood not bounded away from zero");
  const double a = num.lo / den.lo, b = num.lo / den.hi;
  const double c = num.hi / den.lo, d = num.hi / den.hi;
  return {std::min(std::min(a, b), std::min(c, d)),
          std::max(std::max(a, b), std::max(c, d))};
}

FsmDataset::FsmDataset(int leaf_count, int num_sites, std::string alphabet,
                       std::vector<std::uint8_t> types)
    : leaf_count_(leaf_count),
      num_sites_(num_sites),
      alphabet_(std::move(alphabet)),
      types_(std::move(types)) {
  if (leaf_count_ < 2) throw DataError("dataset needs at least 2 leaves");
  if (num_sites_ < 0) throw DataError("negative site count");
  if (alphabet_.size() < 2) throw DataError("alphabet needs at least 2 types");
  if (types_.size() != static_cast<std::size_t>(leaf_count_) * num_sites_)
    throw DataError("type matrix size does not match n * sites");
  for (std::uint8_t t : types_)
    if (t >= alphabet_.size()) throw DataError("leaf type outside the alphabet");
}

bool FsmDataset::site_constant(int site) const {
  for (int leaf = 1; leaf < leaf_count_; ++leaf)
    if (type(site, leaf) != type(site, 0)) return false;
  return true;
}

int FsmDataset::segregating_sites() const {
  int count = 0;
  for (int s = 0; s < num_sites_; ++s) count += !site_constant(s);
  return count;
}

int FsmDataset::diff_count(int leaf_a, int leaf_b) const {
  int count = 0;
  for (int s = 0; s < num_sites_; ++s) count += type(s, leaf_a) != type(s, leaf_b);
  return count;
}

double BinarySymmetricKernel::transition(int h, int g, double length, double theta) const {
  return 0.5 + (h == g ? 0.5 : -0.5) * std::exp(-theta * length);
}

double BinarySymmetricKernel::d_dlength(int h, int g, double length, double theta) const {
  return -theta * (h == g ? 0.5 : -0.5) * std::exp(-theta * length);
}

double BinarySymmetricKernel::d_dtheta(int h, int g, double length, double theta) const {
  return -length * (h == g ? 0.5 : -0.5) * std::exp(-theta * length);
}

Interval BinarySymmetricKernel::transition_range(int h, int g, Interval length,
                                                 Interval theta) const {
  const double e_lo = std::exp(-theta.hi * length.hi);
  const double e_hi = std::exp(-theta.lo * length.lo);
  if (h == g) return {0.5 * (1.0 + e_lo), 0.5 * (1.0 + e_hi)};
  return {0.5 * (1.0 - e_hi), 0.5 * (1.0 - e_lo)};
}

Interval BinarySymmetricKernel::d_dlength_range(int h, int g, Interval length,
                                                Interval theta) const {
  const auto [lo, hi] = rate_exp_range(length, theta);
  if (h == g) return {-0.5 * hi, -0.5 * lo};
  return {0.5 * lo, 0.5 * hi};
}

Interval BinarySymmetricKernel::d_dtheta_range(int h, int g, Interval length,
                                               Interval theta) const {
  const auto [lo, hi] = len_exp_range(length, theta);
  if (h == g) return {-0.5 * hi, -0.5 * lo};
  return {0.5 * lo, 0.5 * hi};
}

std::shared_ptr<const SiteKernel> binary_symmetric_kernel() {
  static const auto kernel = std::make_shared<const BinarySymmetricKernel>();
  return kernel;
}

namespace {

double upper(double x) { return x; }
double upper(const Interval& x) { return x.hi; }

Interval scaled(const Interval& x, double factor) {
  return {x.lo * factor, x.hi * factor};
}
double scaled(double x, double factor) { return x * factor; }

double ratio_of(double num, double den) { return num / den; }
Interval ratio_of(const Interval& num, const Interval& den) {
  return interval_div(num, den);
}

template <typename Num>
struct PassResult {
  double log_lik = 0.0;                // scalar pass only
  std::vector<Num> dlog_dlength;       // per child node id
  Num dlog_dtheta{};
};

// One postorder and one preorder sweep per site, shared by every coordinate:
// produces the per-edge length-derivatives and the theta-derivative of the
// site-product log-likelihood. Partials are rescaled per node against
// underflow, with the scales carried separately in log space. With
// Num = Interval and window-extremal transition ranges the same sweeps give
// rigorous termwise bounds on the derivatives instead.
template <typename Num>
PassResult<Num> likelihood_pass(const RankedTopology& E, const FsmDataset& data,
                                const SiteKernel& kernel, const std::vector<Num>& Q,
                                const std::vector<Num>* dQl, const std::vector<Num>* dQt,
                                std::uint64_t& ops) {
  const int n = E.leaf_count();
  const int H = kernel.num_types();
  const int nodes = 2 * n - 1;
  const int edges = 2 * n - 2;
  const bool gradients = dQl != nullptr;

  PassResult<Num> out;
  if (gradients) out.dlog_dlength.assign(edges, Num{});

  std::vector<Num> post(static_cast<std::size_t>(nodes) * H);
  std::vector<Num> msg(static_cast<std::size_t>(edges) * H);
  std::vector<Num> pre(static_cast<std::size_t>(nodes) * H);
  std::vector<Num> a_buf(H);
  std::vector<double> sig_post(nodes, 0.0), sig_pre(nodes, 0.0);

  for (int s = 0; s < data.num_sites(); ++s) {
    for (int leaf = 0; leaf < n; ++leaf) {
      for (int h = 0; h < H; ++h)
        post[leaf * H + h] = Num{h == data.type(s, leaf) ? 1.0 : 0.0};
      sig_post[leaf] = 0.0;
    }
    for (int k = 0; k < n - 1; ++k) {
      const NodeId node = E.merger_node(k);
      const auto& pair = E.merger(k);
      for (NodeId c : {pair.first, pair.second}) {
        for (int hp = 0; hp < H; ++hp) {
          Num acc{};
          for (int g = 0; g < H; ++g) {
            acc += Q[(static_cast<std::size_t>(c) * H + hp) * H + g] * post[c * H + g];
            ++ops;
          }
          msg[c * H + hp] = acc;
        }
      }
      double m = 0.0;
      for (int h = 0; h < H; ++h) {
        post[node * H + h] = msg[pair.first * H + h] * msg[pair.second * H + h];
        m = std::max(m, upper(post[node * H + h]));
      }
      if (m <= 0.0)
        throw InvariantViolation("pruning partial vanished; data impossible in mode");
      for (int h = 0; h < H; ++h) post[node * H + h] = scaled(post[node * H + h], 1.0 / m);
      sig_post[node] = std::log(m) + sig_post[pair.first] + sig_post[pair.second];
    }

    const NodeId root = E.root();
    Num ell{};
    for (int h = 0; h < H; ++h) ell += Num{kernel.stationary(h)} * post[root * H + h];
    const double sig_ell = sig_post[root];
    if constexpr (std::is_same_v<Num, double>) {
      out.log_lik += std::log(ell) + sig_ell;
    }
    if (!gradients) continue;

    for (int h = 0; h < H; ++h) pre[root * H + h] = Num{kernel.stationary(h)};
    sig_pre[root] = 0.0;
    for (int k = n - 2; k >= 0; --k) {
      const NodeId node = E.merger_node(k);
      const auto& pair = E.merger(k);
      for (int side = 0; side < 2; ++side) {
        const NodeId c = side == 0 ? pair.first : pair.second;
        const NodeId sib = side == 0 ? pair.second : pair.first;
        const double sig_a = sig_pre[node] + sig_post[sib];
        for (int hp = 0; hp < H; ++hp)
          a_buf[hp] = pre[node * H + hp] * msg[sib * H + hp];

        const double expf = std::exp(sig_a + sig_post[c] - sig_ell);
        Num num_l{}, num_t{};
        for (int hp = 0; hp < H; ++hp) {
          for (int h = 0; h < H; ++h) {
            const std::size_t idx = (static_cast<std::size_t>(c) * H + hp) * H + h;
            const Num weight = a_buf[hp] * post[c * H + h];
            num_l += weight * (*dQl)[idx];
            num_t += weight * (*dQt)[idx];
            ++ops;
          }
        }
        out.dlog_dlength[c] += scaled(ratio_of(num_l, ell), expf);
        out.dlog_dtheta += scaled(ratio_of(num_t, ell), expf);

        if (E.node_rank(c) >= 0) {
          double m = 0.0;
          for (int h = 0; h < H; ++h) {
            Num acc{};
            for (int hp = 0; hp < H; ++hp) {
              acc += a_buf[hp] * Q[(static_cast<std::size_t>(c) * H + hp) * H + h];
              ++ops;
            }
            pre[c * H + h] = acc;
            m = std::max(m, upper(acc));
          }
          if (m <= 0.0)
            throw InvariantViolation("preorder partial vanished; data impossible in mode");
          for (int h = 0; h < H; ++h) pre[c * H + h] = scaled(pre[c * H + h], 1.0 / m);
          sig_pre[c] = sig_a + std::log(m);
        }
      }
    }
  }
  return out;
}

struct EdgeGeometry {
  std::vector<double> length;    // per child node id
  std::vector<double> velocity;  // rate of change of the length
};

EdgeGeometry edge_geometry(const RankedTopology& E, std::span<const double> coords,
                           std::span<const double> vels, bool with_velocity) {
  const int n = E.leaf_count();
  const auto times = node_times(coords.first(n - 1));
  std::vector<double> vel_times;
  if (with_velocity) {
    vel_times.resize(n - 1);
    double acc = 0.0;
    for (int k = 0; k < n - 1; ++k) {
      acc += vels[k];
      vel_times[k] = acc;
    }
  }
  EdgeGeometry geo;
  geo.length.resize(2 * n - 2);
  if (with_velocity) geo.velocity.resize(2 * n - 2);
  for (NodeId v = 0; v < 2 * n - 2; ++v) {
    const int cr = E.node_rank(v);
    const int pr = E.node_rank(E.parent(v));
    geo.length[v] = times[pr] - (cr < 0 ? 0.0 : times[cr]);
    if (with_velocity) geo.velocity[v] = vel_times[pr] - (cr < 0 ? 0.0 : vel_times[cr]);
  }
  return geo;
}

}  // namespace

FsmTarget::FsmTarget(std::shared_ptr<const FsmDataset> data,
                     std::shared_ptr<const SiteKernel> kernel,
                     std::shared_ptr<const ThetaPrior> prior)
    : CoalescentTargetBase(data->leaf_count(), /*has_theta=*/true),
      data_(std::move(data)),
      kernel_(std::move(kernel)),
      prior_(std::move(prior)) {}

const FsmTarget::ExactPass& FsmTarget::exact_pass(const HybridState& state) const {
  const bool hit = exact_.valid &&
                   (exact_.topo == state.topology || *exact_.topo == state.topo()) &&
                   exact_.coords == state.coords;
  if (hit) return exact_;

  const int H = kernel_->num_types();
  const double theta = state.coords[theta_coord()];
  const auto geo = edge_geometry(state.topo(), state.coords, state.vels, false);
  const int edges = static_cast<int>(geo.length.size());
  std::vector<double> Q(static_cast<std::size_t>(edges) * H * H);
  std::vector<double> dQl(Q.size()), dQt(Q.size());
  for (int v = 0; v < edges; ++v) {
    for (int hp = 0; hp < H; ++hp) {
      for (int g = 0; g < H; ++g) {
        const std::size_t idx = (static_cast<std::size_t>(v) * H + hp) * H + g;
        Q[idx] = kernel_->transition(hp, g, geo.length[v], theta);
        dQl[idx] = kernel_->d_dlength(hp, g, geo.length[v], theta);
        dQt[idx] = kernel_->d_dtheta(hp, g, geo.length[v], theta);
      }
    }
  }
  auto pass = likelihood_pass<double>(state.topo(), *data_, *kernel_, Q, &dQl, &dQt,
                                      pass_ops_);
  exact_.valid = true;
  exact_.topo = state.topology;
  exact_.coords = state.coords;
  exact_.log_lik = pass.log_lik;
  exact_.dlog_dlength = std::move(pass.dlog_dlength);
  exact_.dlog_dtheta = pass.dlog_dtheta;
  return exact_;
}

const FsmTarget::BoundPass& FsmTarget::bound_pass(const HybridState& state,
                                                  double window) const {
  const bool hit = bound_.valid && bound_.window == window &&
                   (bound_.topo == state.topology || *bound_.topo == state.topo()) &&
                   bound_.coords == state.coords && bound_.vels == state.vels;
  if (hit) return bound_;

  const int H = kernel_->num_types();
  const double theta = state.coords[theta_coord()];
  const double v_theta = state.vels[theta_coord()];
  const Interval theta_box{std::max(theta + std::min(v_theta * window, 0.0), 0.0),
                           theta + std::max(v_theta * window, 0.0)};
  const auto geo = edge_geometry(state.topo(), state.coords, state.vels, true);
  const int edges = static_cast<int>(geo.length.size());
  std::vector<Interval> Q(static_cast<std::size_t>(edges) * H * H);
  std::vector<Interval> dQl(Q.size()), dQt(Q.size());
  for (int v = 0; v < edges; ++v) {
    const Interval len_box{
        std::max(geo.length[v] + std::min(geo.velocity[v] * window, 0.0), 0.0),
        geo.length[v] + std::max(geo.velocity[v] * window, 0.0)};
    for (int hp = 0; hp < H; ++hp) {
      for (int g = 0; g < H; ++g) {
        const std::size_t idx = (static_cast<std::size_t>(v) * H + hp) * H + g;
        Q[idx] = kernel_->transition_range(hp, g, len_box, theta_box);
        dQl[idx] = kernel_->d_dlength_range(hp, g, len_box, theta_box);
        dQt[idx] = kernel_->d_dtheta_range(hp, g, len_box, theta_box);
      }
    }
  }
  auto pass = likelihood_pass<Interval>(state.topo(), *data_, *kernel_, Q, &dQl, &dQt,
                                        pass_ops_);
  bound_.valid = true;
  bound_.topo = state.topology;
  bound_.coords = state.coords;
  bound_.vels = state.vels;
  bound_.window = window;
  bound_.dlog_dlength = std::move(pass.dlog_dlength);
  bound_.dlog_dtheta = pass.dlog_dtheta;
  return bound_;
}

double FsmTarget::log_density(const HybridState& state) const {
  ++counters_.density_evals;
  const double theta = state.coords[theta_coord()];
  if (theta < 0.0) return kNegInf;
  const double lp = prior_->log_density(theta);
  if (!std::isfinite(lp)) return kNegInf;
  return log_prior(leaf_count_, std::span(state.coords).first(leaf_count_ - 1)) +
         log_likelihood(state.topo(), state.coords, theta) + lp;
}

double FsmTarget::log_likelihood(const RankedTopology& E,
                                 std::span<const double> holding_times,
                                 double theta) const {
  const int H = kernel_->num_types();
  const auto times = node_times(holding_times.first(leaf_count_ - 1));
  const int edges = 2 * leaf_count_ - 2;
  std::vector<double> Q(static_cast<std::size_t>(edges) * H * H);
  for (int v = 0; v < edges; ++v) {
    const int cr = E.node_rank(v);
    const double len = times[E.node_rank(E.parent(v))] - (cr < 0 ? 0.0 : times[cr]);
    for (int hp = 0; hp < H; ++hp)
      for (int g = 0; g < H; ++g)
        Q[(static_cast<std::size_t>(v) * H + hp) * H + g] =
            kernel_->transition(hp, g, len, theta);
  }
  return likelihood_pass<double>(E, *data_, *kernel_, Q, nullptr, nullptr, pass_ops_)
      .log_lik;
}

double FsmTarget::flip_rate(const HybridState& state, int i) const {
  ++counters_.rate_evals;
  const auto& pass = exact_pass(state);
  const double v = state.vels[i];
  double slope;
  if (i < theta_coord()) {
    const int n = leaf_count_;
    double pull = 0.0;
    const auto& E = state.topo();
    for (NodeId u = 0; u < 2 * n - 2; ++u) {
      const Edge e{u, E.parent(u), E.node_rank(u), E.node_rank(E.parent(u))};
      if (e.spans(i)) pull += pass.dlog_dlength[u];
    }
    slope = (n - i) * (n - i - 1) / 2.0 - pull;
  } else {
    slope = -(prior_->dlog(state.coords[theta_coord()]) + pass.dlog_dtheta);
  }
  const double rate = v * slope;
  return rate > 0.0 ? rate : 0.0;
}

double FsmTarget::flip_bound(const HybridState& state, int i, double window) const {
  ++counters_.bound_evals;
  const double v = state.vels[i];
  if (v == 0.0) return 0.0;
  const auto& pass = bound_pass(state, window);
  double bound;
  if (i < theta_coord()) {
    const int n = leaf_count_;
    Interval pull{};
    const auto& E = state.topo();
    for (NodeId u = 0; u < 2 * n - 2; ++u) {
      const Edge e{u, E.parent(u), E.node_rank(u), E.node_rank(E.parent(u))};
      if (e.spans(i)) pull += pass.dlog_dlength[u];
    }
    const double ext = v > 0.0 ? pull.lo : pull.hi;
    bound = v * ((n - i) * (n - i - 1) / 2.0 - ext);
  } else {
    const double theta = state.coords[theta_coord()];
    const double lo = std::max(theta + std::min(v * window, 0.0), 1e-300);
    const double hi = theta + std::max(v * window, 0.0);
    const auto [dmin, dmax] = prior_->dlog_range(lo, hi);
    // lambda_theta = (-v (dlog + dloglik_theta))^+ : extremize the bracket
    // upward when -v > 0, downward otherwise.
    const double ext =
        v < 0.0 ? dmax + pass.dlog_dtheta.hi : dmin + pass.dlog_dtheta.lo;
    bound = -v * ext;
  }
  return bound > 0.0 ? bound : 0.0;
}

bool FsmTarget::boundary_guarded(const HybridState& state, int coord) const {
  if (coord == theta_coord())
    return data_->segregating_sites() > 0 || prior_->vanishes_at_zero();
  if (coord == 0) {
    const auto& pair = state.topo().merger(0);
    return data_->diff_count(pair.first, pair.second) > 0;
  }
  return false;
}

FsmDataset simulate_fsm_data(const RankedTopology& E,
                             std::span<const double> holding_times, double theta,
                             int num_sites, const SiteKernel& kernel, RngStream& rng) {
  const int n = E.leaf_count();
  const int H = kernel.num_types();
  const auto times = node_times(holding_times.first(n - 1));
  std::vector<std::uint8_t> types(static_cast<std::size_t>(num_sites) * n);
  std::vector<int> node_type(2 * n - 1);
  for (int s = 0; s < num_sites; ++s) {
    double u = rng.uniform();
    int root_type = H - 1;
    for (int h = 0; h < H; ++h) {
      u -= kernel.stationary(h);
      if (u < 0.0) {
        root_type = h;
        break;
      }
    }
    node_type[E.root()] = root_type;
    for (int k = n - 2; k >= 0; --k) {
      const NodeId node = E.merger_node(k);
      for (NodeId c : {E.merger(k).first, E.merger(k).second}) {
        const int cr = E.node_rank(c);
        const double len = times[k] - (cr < 0 ? 0.0 : times[cr]);
        const int jumps = poisson(theta * len / (2.0 * num_sites), rng);
        int h = node_type[node];
        for (int j = 0; j < jumps; ++j) h = kernel.mutate(h, rng);
        node_type[c] = h;
      }
    }
    for (int leaf = 0; leaf < n; ++leaf)
      types[static_cast<std::size_t>(s) * n + leaf] = static_cast<std::uint8_t>(node_type[leaf]);
  }
  std::string alphabet = "01";
  if (H > 2) {
    alphabet.clear();
    for (int h = 0; h < H; ++h) alphabet.push_back(static_cast<char>('0' + h));
  }
  return FsmDataset(n, num_sites, std::move(alphabet), std::move(types));
}

}  // namespace zigzag
