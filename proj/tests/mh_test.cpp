#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "support/fixtures.hpp"
#include "support/stats.hpp"
#include "zigzag/diagnostics.hpp"
#include "zigzag/ism.hpp"
#include "zigzag/mh.hpp"

using namespace zigzag;

namespace {

std::shared_ptr<const IsmDataset> empty_ism(int n) {
  return std::make_shared<const IsmDataset>(
      IsmDataset(n, std::vector<std::vector<double>>(n)));
}

// Flat density for theta below a wall; tree coordinates ignored.
struct BoxTarget final : TargetModel {
  double wall = 100.0;
  int d = 2;
  int dim() const override { return d; }
  double log_density(const HybridState& s) const override {
    return s.coords[d - 1] < wall ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  double flip_rate(const HybridState&, int) const override { return 0.0; }
  double flip_bound(const HybridState&, int, double) const override { return 0.0; }
  Localization localize(const HybridState&) const override { return {1.0, -1}; }
  BoundaryJump boundary_jump(const HybridState&, int, RngStream&) const override {
    return {};
  }
};

}  // namespace

TEST_CASE("theta walk accepts everything on a flat target away from the wall") {
  BoxTarget target;
  auto state = make_state(RankedTopology::caterpillar(2), {1.0, 50.0}, {0.0, 0.0});
  RngStream rng(41);
  int accepted = 0;
  const int reps = 2000;
  for (int i = 0; i < reps; ++i) accepted += theta_step(target, state, 1.0, rng);
  CHECK(accepted == reps);
  CHECK(state.coords[1] > 0.0);
}

TEST_CASE("theta marginal matches the quadrature oracle on the no-data posterior") {
  // Integrating the holding times out of the three-leaf zero-mutation target
  // leaves an unnormalized marginal 1/((1+theta)(2+theta)); the oracle CDF
  // comes from trapezoid quadrature of that factor.
  IsmTarget target(empty_ism(3));
  auto init = make_state(RankedTopology::caterpillar(3), {0.3, 0.8, 1.0}, {0, 0, 0});
  const auto result = mh_run(target, init, 60000, MhConfig{2.0, 1.0, 0.0}, 42);

  const auto states = discretize(result.trace, 3000);  // thinned by ~60 proposals
  std::vector<double> thetas;
  for (std::size_t i = 200; i < states.size(); ++i)
    thetas.push_back(states[i].coords.back());

  const double grid_hi = 2000.0;
  const int grid_n = 400000;
  std::vector<double> cdf_grid(grid_n + 1, 0.0);
  const auto g = [](double x) { return 1.0 / ((1.0 + x) * (2.0 + x)); };
  for (int k = 1; k <= grid_n; ++k) {
    const double h = grid_hi / grid_n;
    cdf_grid[k] = cdf_grid[k - 1] + 0.5 * h * (g((k - 1) * h) + g(k * h));
  }
  const double total = cdf_grid[grid_n];
  const double p = teststat::ks_pvalue(std::move(thetas), [&](double x) {
    const double pos = std::clamp(x / grid_hi * grid_n, 0.0, double(grid_n));
    const int k = static_cast<int>(pos);
    const double frac = pos - k;
    const double val =
        k >= grid_n ? cdf_grid[grid_n] : cdf_grid[k] * (1 - frac) + cdf_grid[k + 1] * frac;
    return val / total;
  });
  CHECK(p > 1e-3);
}

TEST_CASE("times step") {
  SUBCASE("prior-only chain reproduces the exact holding-time means") {
    PriorOnlyTarget target(3);
    auto state = make_state(RankedTopology::caterpillar(3), {0.4, 0.7}, {0.0, 0.0});
    RngStream rng(43);
    double sum_t1 = 0.0, sum_t2 = 0.0;
    const int burn = 2000, reps = 120000;
    for (int i = 0; i < burn + reps; ++i) {
      times_step(target, state, 1.0, rng);
      if (i >= burn) {
        sum_t1 += state.coords[0];
        sum_t2 += state.coords[1];
      }
    }
    // Conservative three-sigma bands for correlated draws.
    CHECK(std::abs(sum_t1 / reps - 1.0 / 3.0) < 0.02);
    CHECK(std::abs(sum_t2 / reps - 1.0) < 0.06);
  }
  SUBCASE("tiny scales accept almost surely") {
    PriorOnlyTarget target(4);
    auto state = make_state(RankedTopology::caterpillar(4), {0.4, 0.7, 0.3}, {0, 0, 0});
    RngStream rng(44);
    int accepted = 0;
    for (int i = 0; i < 500; ++i) accepted += times_step(target, state, 1e-6, rng);
    CHECK(accepted >= 499);
  }
  SUBCASE("holding times stay positive") {
    PriorOnlyTarget target(4);
    auto state = make_state(RankedTopology::caterpillar(4), {0.4, 0.7, 0.3}, {0, 0, 0});
    RngStream rng(45);
    for (int i = 0; i < 2000; ++i) {
      times_step(target, state, 2.0, rng);
      for (double t : state.coords) CHECK(t > 0.0);
    }
  }
}

TEST_CASE("times step satisfies detailed balance on the two-leaf prior") {
  // pi(t) = exp(-t): bin the chain and compare opposing transition flows.
  PriorOnlyTarget target(2);
  auto state = make_state(RankedTopology::caterpillar(2), {1.0}, {0.0});
  RngStream rng(46);
  const auto bin = [](double t) {
    return std::min(5, static_cast<int>(t / 0.5));
  };
  std::map<std::pair<int, int>, long> flows;
  for (int i = 0; i < 200000; ++i) {
    const int a = bin(state.coords[0]);
    times_step(target, state, 1.5, rng);
    const int b = bin(state.coords[0]);
    if (a != b) ++flows[{a, b}];
  }
  for (const auto& [ab, n_ab] : flows) {
    if (ab.first > ab.second) continue;
    const long n_ba = flows[{ab.second, ab.first}];
    if (n_ab + n_ba < 100) continue;
    const double diff = std::abs(static_cast<double>(n_ab) - n_ba);
    CHECK(diff < 4.0 * std::sqrt(static_cast<double>(n_ab + n_ba)));
  }
}

TEST_CASE("SPR bookkeeping reverses exactly") {
  // Caterpillar with unit holding times: prune leaf 0, reattach into the
  // edge above leaf 3 at time 2.5, then undo the move at the old time.
  const auto E = RankedTopology::caterpillar(4);
  const auto state = make_state(E, {1.0, 1.0, 1.0}, {0, 0, 0});
  const auto moved = apply_spr(state, 0, 3, 2.5);
  CHECK(!(moved.topo() == E));
  const auto back = apply_spr(moved, 0, 1, 1.0);
  CHECK(back.topo() == E);
  for (int k = 0; k < 3; ++k)
    CHECK(back.coords[k] == doctest::Approx(state.coords[k]).epsilon(1e-12));
}

TEST_CASE("SPR on the prior reaches the uniform topology law") {
  PriorOnlyTarget target(4);
  RngStream init_rng(47);
  auto tree = simulate_coalescent(4, init_rng);
  auto init = make_state(std::move(tree.topology), std::move(tree.holding_times), {0, 0, 0});
  const auto result = mh_run(target, init, 60000, MhConfig{1.0, 1.0, 0.0}, 48);

  const auto all = enumerate_ranked_topologies(4);
  std::map<std::uint64_t, int> index;
  for (std::size_t i = 0; i < all.size(); ++i) index[all[i].id_hash()] = static_cast<int>(i);

  const auto states = discretize(result.trace, 4000);  // thin by ~45 proposals
  std::vector<long> counts(all.size(), 0);
  for (std::size_t i = 400; i < states.size(); ++i)
    ++counts[index.at(states[i].topo().id_hash())];
  CHECK(teststat::chi2_uniform_pvalue(counts) > 1e-3);
  CHECK(result.stats.acceptance(MhKind::Spr) > 0.05);
}

TEST_CASE("incompatible SPR proposals never touch the likelihood") {
  // Nested carriers force most rearrangements out of the support.
  const auto data = std::make_shared<const IsmDataset>(
      IsmDataset(5, {{0.1, 0.3}, {0.1, 0.3}, {0.1}, {}, {0.7}}));
  IsmTarget target(data);
  RngStream rng(49);
  auto tree = initial_ism_tree(*data, rng);
  std::vector<double> coords = tree.holding_times;
  coords.push_back(1.0);
  auto state = make_state(std::move(tree.topology), std::move(coords), {0, 0, 0, 0, 0});

  target.reset_counters();
  long proposed = 0, screened = 0;
  for (int i = 0; i < 4000; ++i) {
    const auto outcome = spr_step(target, state, rng);
    ++proposed;
    screened += outcome.infeasible || outcome.incompatible;
    CHECK(target.mode_consistent(state.topo()));
  }
  // Every surviving proposal evaluates the density exactly twice; screened
  // ones must not evaluate it at all.
  CHECK(target.counters().density_evals == 2 * (proposed - screened));
  CHECK(screened > 0);
}

TEST_CASE("hybrid runs") {
  const auto data = empty_ism(4);
  IsmTarget target(*&data);
  RngStream init_rng(50);
  auto tree = simulate_coalescent(4, init_rng);
  std::vector<double> coords = tree.holding_times;
  coords.push_back(1.5);
  auto vels = default_speeds(4, true, 0.8);
  const auto init = make_state(std::move(tree.topology), std::move(coords), std::move(vels));

  SUBCASE("zero interrupt rate reproduces the pure zig-zag trace") {
    SimulateOptions opts;
    opts.t_end = 40.0;
    opts.seed = 51;
    const auto pure = simulate(target, init, opts);
    const auto hybrid = hybrid_run(target, init, 40.0, 0.0, MhConfig{}, 51);
    REQUIRE(pure.events.size() == hybrid.trace.events.size());
    for (std::size_t i = 0; i < pure.events.size(); ++i) {
      CHECK(pure.events[i].time == hybrid.trace.events[i].time);
      CHECK(pure.events[i].kind == hybrid.trace.events[i].kind);
    }
  }
  SUBCASE("interrupt events arrive at rate kappa") {
    const double kappa = 6.0, t_end = 200.0;
    const auto result = hybrid_run(target, init, t_end, kappa, MhConfig{}, 52);
    const double events = static_cast<double>(result.trace.count(EventKind::MhMove));
    const double expected = kappa * t_end;
    CHECK(std::abs(events - expected) < 3.0 * std::sqrt(expected));
    CHECK(result.stats.proposed_theta + result.stats.proposed_spr ==
          static_cast<long>(events));
  }
  SUBCASE("zero velocities reduce the hybrid to a continuous-time MH chain") {
    auto frozen = init;
    std::fill(frozen.vels.begin(), frozen.vels.end(), 0.0);
    const auto result = hybrid_run(target, frozen, 50.0, 8.0, MhConfig{}, 53);
    for (const auto& e : result.trace.events)
      CHECK((e.kind == EventKind::MhMove || e.kind == EventKind::Refresh ||
             e.kind == EventKind::End));
    CHECK(result.trace.count(EventKind::MhMove) > 200);
  }
}

TEST_CASE("warm-up tuning reaches a sane acceptance band") {
  IsmTarget target(empty_ism(5));
  RngStream rng(54);
  auto tree = simulate_coalescent(5, rng);
  std::vector<double> coords = tree.holding_times;
  coords.push_back(1.0);
  auto state = make_state(std::move(tree.topology), std::move(coords), {0, 0, 0, 0, 0});

  const auto tuned = tune_mh(target, state, 2000, MhConfig{20.0, 20.0, 0.0}, 55);
  CHECK(tuned.sigma_theta < 20.0);
  CHECK(tuned.sigma_times < 20.0);

  auto probe = state;
  const auto result = mh_run(target, probe, 3000, tuned, 56);
  CHECK(result.stats.acceptance(MhKind::Theta) > 0.1);
  CHECK(result.stats.acceptance(MhKind::Theta) < 0.45);
  CHECK(result.stats.acceptance(MhKind::Times) > 0.1);
  CHECK(result.stats.acceptance(MhKind::Times) < 0.45);
}

TEST_CASE("mh trace carries sub-kinds and acceptance flags") {
  PriorOnlyTarget target(3);
  auto init = make_state(RankedTopology::caterpillar(3), {0.5, 0.5}, {0, 0});
  const auto result = mh_run(target, init, 10, MhConfig{}, 57);
  REQUIRE(result.trace.events.size() == 21);  // 2 proposals per sweep + end
  int times = 0, spr = 0;
  for (const auto& e : result.trace.events) {
    if (e.kind != EventKind::MhMove) continue;
    REQUIRE(e.mh != nullptr);
    times += e.mh->kind == MhKind::Times;
    spr += e.mh->kind == MhKind::Spr;
    CHECK(!e.mh->coords_after.empty());
  }
  CHECK(times == 10);
  CHECK(spr == 10);
}
