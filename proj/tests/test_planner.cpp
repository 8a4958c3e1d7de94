#include <doctest.h>

#include <algorithm>
#include <limits>

#include "helpers.hpp"
#include "swapsched/planner.hpp"
#include "swapsched/synthetic.hpp"

using namespace swapsched;
using swapsched::testing::GmapBuilder;
using swapsched::testing::flat_model;
using swapsched::testing::tiny_network;

namespace {

constexpr Bytes u = kAlignGranule;  // sizes in whole granules stay exact

HardwareSpec hw_with(Bytes budget, Bytes m_others = 0) {
  HardwareSpec hw;
  hw.memory_budget = budget;
  hw.m_others = m_others;
  hw.pcie_nominal = 1e9;
  return hw;
}

}  // namespace

TEST_CASE("t_ready accumulates prefetch times while memory permits") {
  // two phases with 5 ms and 3 ms of prefetch work, ample memory
  GmapBuilder b(2);
  auto a = b.object("a", 5'120'000, ObjectKind::featuremap);
  auto c = b.object("c", 3'072'000, ObjectKind::featuremap);
  b.op(MemOpKind::prefetch, a, 1).op(MemOpKind::prefetch, c, 2);
  Gmap g = b.build();

  PerfModel m = flat_model(1e12, 1.024e9, 1);
  std::vector<TimeNs> compute = {10'000'000, 10'000'000};
  auto t_ready = compute_t_ready(g, 1, 1'000'000'000, {}, m, compute);
  REQUIRE(t_ready.size() == 2);
  CHECK(t_ready[0] == 5'000'000);
  CHECK(t_ready[1] == 8'000'000);
}

TEST_CASE("t_ready is all zero when every featuremap is pinned") {
  NetworkSpec net = tiny_network(3);
  Gmap g = build_gmap(unfold_network(net), net);
  PerfModel m = flat_model(1e12, 1e9, net.k_base);
  auto phases = unfold_network(net);
  auto compute = phase_compute_times(phases, net.k_base, m);

  PinSet pins;
  for (ObjectId id : g.featuremap_ids()) pins.insert(id);
  auto t_ready =
      compute_t_ready(g, net.k_base, 1'000'000'000, pins, m, compute);
  for (TimeNs t : t_ready) CHECK(t == 0);
}

TEST_CASE("a blocked allocation waits for the covering release") {
  // phase 3's claims exceed the budget until phase 1's release lands
  GmapBuilder b(3);
  auto a = b.object("a", 60 * u, ObjectKind::workspace);
  auto c = b.object("c", 30 * u, ObjectKind::workspace);
  auto d = b.object("d", 40 * u, ObjectKind::workspace);
  auto e = b.object("e", 10 * u, ObjectKind::featuremap);
  b.op(MemOpKind::allocate, a, 1)
      .op(MemOpKind::release, a, 1)
      .op(MemOpKind::allocate, c, 2)
      .op(MemOpKind::prefetch, e, 3)
      .op(MemOpKind::allocate, d, 3);
  Gmap g = b.build();

  PerfModel m = flat_model(1e12, 1e9, 1);
  std::vector<TimeNs> compute = {2'000'000, 2'000'000, 2'000'000};
  auto t_ready = compute_t_ready(g, 1, 100 * u, {}, m, compute);
  REQUIRE(t_ready.size() == 3);
  CHECK(t_ready[0] == 0);
  CHECK(t_ready[1] == 0);
  // t_compute[1] + t_pre[3]: 2 ms + 10*512 B at 1 GB/s
  CHECK(t_ready[2] == 2'000'000 + static_cast<TimeNs>(10 * u));
}

TEST_CASE("t_ready requires the budget to cover the layer-wise peak") {
  NetworkSpec net = tiny_network(2);
  Gmap g = build_gmap(unfold_network(net), net);
  PerfModel m = flat_model(1e12, 1e9, net.k_base);
  auto compute = phase_compute_times(unfold_network(net), net.k_base, m);
  CHECK_THROWS_AS(compute_t_ready(g, net.k_base, 1024, {}, m, compute),
                  UntrainableError);
}

TEST_CASE("memory constraint walks the signed op sequence") {
  GmapBuilder b(1);
  auto o1 = b.object("o1", 100 * u, ObjectKind::workspace);
  auto o2 = b.object("o2", 50 * u, ObjectKind::workspace);
  auto o3 = b.object("o3", 30 * u, ObjectKind::workspace);
  b.op(MemOpKind::allocate, o1, 1)
      .op(MemOpKind::allocate, o2, 1)
      .op(MemOpKind::release, o1, 1)
      .op(MemOpKind::allocate, o3, 1);
  Gmap g = b.build();

  MemoryCheck ok = check_memory_constraint(g, 1, 150 * u, {});
  CHECK(ok.ok);  // boundary equality is allowed
  CHECK(ok.peak_bytes == 150 * u);

  MemoryCheck bad = check_memory_constraint(g, 1, 150 * u - 1, {});
  CHECK(!bad.ok);
  CHECK(bad.first_violation_seq.value() == 1);  // the second op

  Gmap empty;
  empty.num_phases = 1;
  empty.k_base = 1;
  empty.index_phases();
  CHECK(check_memory_constraint(empty, 1, 0, {}).ok);
}

TEST_CASE("stall constraint flags phases whose data arrives late") {
  // cumulative compute before phases 1..3 is 0, 2, 4
  std::vector<TimeNs> compute = {2, 2, 2};
  CHECK(check_stall_constraint({0, 1, 2}, compute).empty());
  auto omega = check_stall_constraint({0, 3, 4}, compute);
  REQUIRE(omega.size() == 1);
  CHECK(omega[0] == 2);
  CHECK(check_stall_constraint({0, 0, 0}, compute).empty());
  CHECK_THROWS_AS(check_stall_constraint({0, 0}, compute),
                  std::invalid_argument);
}

TEST_CASE("k_max follows the budgeted headroom over peak featuremap bytes") {
  const Bytes MB = 1u << 20;
  NetworkSpec net;
  net.name = "kmax";
  net.num_layers = 1;
  net.k_base = 8;
  LayerDecl l;
  l.index = 1;
  l.layer_type = LayerType::conv;
  l.flops_fwd_base = 1'000'000'000;
  l.flops_bwd_base = 2'000'000'000;
  l.featuremap_bytes_base = 200 * MB;
  l.workspace_bytes_base = 100 * MB;
  l.param_bytes = 50 * MB;
  l.grad_bytes = 50 * MB;
  net.layers.push_back(l);
  Gmap g = build_gmap(unfold_network(net), net);

  KmaxResult r = max_trainable_minibatch(g, net, hw_with(1000 * MB, 100 * MB));
  CHECK(r.trainable);
  CHECK(r.k_max == 28);  // 8 * (1000-100-100-100) / 200

  // budget equal to the fixed overheads is untrainable
  KmaxResult tight = max_trainable_minibatch(g, net, hw_with(300 * MB, 100 * MB));
  CHECK(!tight.trainable);

  // no featuremap bytes in the peak working set is degenerate
  NetworkSpec zero = net;
  zero.layers[0].featuremap_bytes_base = 0;
  Gmap gz = build_gmap(unfold_network(zero), zero);
  CHECK_THROWS_AS(max_trainable_minibatch(gz, zero, hw_with(1000 * MB)),
                  SpecError);
}

TEST_CASE("ample bandwidth keeps the maximal minibatch unpinned") {
  // zero workspaces keep k_max's fixed-workspace term from overshooting
  NetworkSpec net = tiny_network(4);
  for (auto& l : net.layers) l.workspace_bytes_base = 0;
  Gmap g = build_gmap(unfold_network(net), net);
  auto phases = unfold_network(net);
  // transfers round to zero at this bandwidth, so no phase can stall
  PerfModel m = flat_model(1e12, 1e19, net.k_base);
  HardwareSpec hw = hw_with(256u << 20);

  KmaxResult kmax = max_trainable_minibatch(g, net, hw);
  REQUIRE(kmax.trainable);
  PlanResult res = find_efficiency_optimal_minibatch(g, phases, net, hw, m, {});
  REQUIRE(res.status == PlanStatus::ok);
  CHECK(res.plan->k_star == kmax.k_max);
  CHECK(res.plan->pin_set.empty());
}

TEST_CASE("starved bandwidth forces pinning everything that fits") {
  NetworkSpec net = tiny_network(3);
  Gmap g = build_gmap(unfold_network(net), net);
  auto phases = unfold_network(net);
  // 1 MB/s: any transfer dwarfs compute, so only fully pinned plans work
  PerfModel m = flat_model(1e12, 1e6, net.k_base);
  HardwareSpec hw = hw_with(64u << 20);

  PlanResult res = find_efficiency_optimal_minibatch(g, phases, net, hw, m, {});
  REQUIRE(res.status == PlanStatus::ok);
  const SwapPlan& plan = *res.plan;
  CHECK(plan.pin_set.size() == g.featuremap_ids().size());

  // oracle: the largest k whose fully resident footprint fits the budget
  const Bytes fixed = hw.m_others + net.param_grad_bytes_total();
  PinSet all;
  for (ObjectId id : g.featuremap_ids()) all.insert(id);
  int best = 0;
  for (int k = 1; k <= 256; ++k) {
    const Bytes footprint = peak_layerwise_memory(g, k, all).peak_bytes;
    if (fixed + footprint <= hw.memory_budget) best = k;
  }
  CHECK(plan.k_star == best);
}

TEST_CASE("returned plans satisfy both constraints when re-evaluated") {
  for (std::uint64_t seed : {11ull, 23ull, 47ull, 90ull}) {
    SyntheticInstance inst = generate_instance(seed);
    PerfModel m = build_perf_model(inst.profiles, inst.network.k_base, 1.0,
                                   inst.true_bandwidth);
    auto phases = unfold_network(inst.network);
    Gmap g = build_gmap(phases, inst.network);
    PlanResult res = find_efficiency_optimal_minibatch(
        g, phases, inst.network, inst.hardware, m, {});
    if (res.status != PlanStatus::ok) continue;
    const SwapPlan& plan = *res.plan;

    // memory: the peak with pinned lifetimes charged fits the budget
    const Bytes live_peak =
        peak_layerwise_memory(g, plan.k_star, plan.pin_set).peak_bytes;
    CHECK(plan.fixed_overhead_bytes + live_peak <= inst.hardware.memory_budget);
    CHECK(plan.fixed_overhead_bytes + plan.active_area_bytes <=
          inst.hardware.memory_budget);

    // idempotent re-evaluation stays stall-free with the same pins
    KEvaluation ev = evaluate_minibatch(g, phases, plan.k_star, inst.network,
                                        inst.hardware, m);
    CHECK(ev.memory_feasible);
    CHECK(ev.stall_free);
    CHECK(ev.pins == plan.pin_set);

    // maximality: k*+1 must violate one of the two constraints
    KmaxResult kmax = max_trainable_minibatch(g, inst.network, inst.hardware);
    if (plan.k_star + 1 <= kmax.k_max) {
      KEvaluation above = evaluate_minibatch(
          g, phases, plan.k_star + 1, inst.network, inst.hardware, m);
      CHECK(!(above.memory_feasible && above.stall_free));
    }
  }
}

TEST_CASE("raising bandwidth never delays readiness") {
  SyntheticInstance inst = generate_instance(0xbead);
  auto phases = unfold_network(inst.network);
  Gmap g = build_gmap(phases, inst.network);
  const int k = 4;
  const Bytes budget = inst.hardware.memory_budget;

  std::vector<TimeNs> prev(phases.size(), std::numeric_limits<TimeNs>::max());
  for (double bw : {2e9, 4e9, 8e9, 16e9, 32e9}) {
    PerfModel m = build_perf_model(inst.profiles, inst.network.k_base, 1.0, bw);
    m.bandwidth_avail = bw;
    auto compute = phase_compute_times(phases, k, m);
    auto t_ready = compute_t_ready(g, k, budget, {}, m, compute);
    for (size_t j = 0; j < t_ready.size(); ++j) CHECK(t_ready[j] <= prev[j]);
    prev = t_ready;
  }
}

TEST_CASE("growing the pin set never delays readiness") {
  SyntheticInstance inst = generate_instance(0x715);
  auto phases = unfold_network(inst.network);
  Gmap g = build_gmap(phases, inst.network);
  PerfModel m = build_perf_model(inst.profiles, inst.network.k_base, 1.0,
                                 inst.true_bandwidth);
  const int k = 4;
  const Bytes budget = inst.hardware.memory_budget;
  auto compute = phase_compute_times(phases, k, m);

  // pin in the planner's candidate order: biggest transfers first
  auto fms = g.featuremap_ids();
  std::sort(fms.begin(), fms.end(), [&](ObjectId a, ObjectId b) {
    const Bytes sa = scale_size(g.object(a), k, g.k_base);
    const Bytes sb = scale_size(g.object(b), k, g.k_base);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  PinSet pins;
  auto prev = compute_t_ready(g, k, budget, pins, m, compute);
  for (ObjectId id : fms) {
    pins.insert(id);
    auto now = compute_t_ready(g, k, budget, pins, m, compute);
    for (size_t j = 0; j < now.size(); ++j) CHECK(now[j] <= prev[j]);
    prev = now;
  }
}

TEST_CASE("coarse search strides preserve the linear-search result") {
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    SyntheticInstance inst = generate_instance(seed);
    PerfModel m = build_perf_model(inst.profiles, inst.network.k_base, 1.0,
                                   inst.true_bandwidth);
    auto phases = unfold_network(inst.network);
    Gmap g = build_gmap(phases, inst.network);
    PlanResult fine = find_efficiency_optimal_minibatch(
        g, phases, inst.network, inst.hardware, m, {});
    for (int step : {3, 4, 8, 17}) {
      PlannerOptions coarse;
      coarse.step = step;
      PlanResult strided = find_efficiency_optimal_minibatch(
          g, phases, inst.network, inst.hardware, m, {}, coarse);
      REQUIRE(fine.status == strided.status);
      if (fine.status == PlanStatus::ok)
        CHECK(fine.plan->k_star == strided.plan->k_star);
    }
  }
}

TEST_CASE("pinned objects charge the memory walk for their full lifetime") {
  constexpr Bytes u = kAlignGranule;
  // fm lives phases 1..3; swapped it vacates the pool between its offload
  // and its prefetch, pinned it does not
  GmapBuilder b(3);
  auto fm = b.object("fm", 80 * u, ObjectKind::featuremap, false, 1, 3);
  auto ws = b.object("ws", 50 * u, ObjectKind::workspace, false, 2, 2);
  b.op(MemOpKind::allocate, fm, 1)
      .op(MemOpKind::offload, fm, 1)
      .op(MemOpKind::allocate, ws, 2)
      .op(MemOpKind::release, ws, 2)
      .op(MemOpKind::prefetch, fm, 3)
      .op(MemOpKind::release, fm, 3);
  Gmap g = b.build();

  CHECK(check_memory_constraint(g, 1, 80 * u, {}).ok);
  MemoryCheck pinned = check_memory_constraint(g, 1, 80 * u, {fm});
  CHECK(!pinned.ok);
  CHECK(pinned.first_violation_seq.value() == 2);  // the workspace alloc
  CHECK(check_memory_constraint(g, 1, 130 * u, {fm}).ok);
}

TEST_CASE("a budget below the k=1 peak is untrainable") {
  NetworkSpec net = tiny_network(2);
  Gmap g = build_gmap(unfold_network(net), net);
  auto phases = unfold_network(net);
  PerfModel m = flat_model(1e12, 1e9, net.k_base);
  // enough to clear the fixed overheads but not the k=1 working set
  HardwareSpec hw = hw_with(net.param_grad_bytes_total() + (300u << 10));
  PlanResult res = find_efficiency_optimal_minibatch(g, phases, net, hw, m, {});
  CHECK(res.status == PlanStatus::untrainable);
}

TEST_CASE("a requested minibatch is evaluated without searching") {
  SyntheticInstance inst = generate_instance(0x0ca1);
  PerfModel m = build_perf_model(inst.profiles, inst.network.k_base, 1.0,
                                 inst.true_bandwidth);
  auto phases = unfold_network(inst.network);
  Gmap g = build_gmap(phases, inst.network);
  PlanResult best = find_efficiency_optimal_minibatch(
      g, phases, inst.network, inst.hardware, m, {});
  REQUIRE(best.status == PlanStatus::ok);

  PlannerOptions pin_k;
  pin_k.k_override = best.plan->k_star;
  PlanResult same = find_efficiency_optimal_minibatch(
      g, phases, inst.network, inst.hardware, m, {}, pin_k);
  REQUIRE(same.status == PlanStatus::ok);
  CHECK(same.plan->k_star == best.plan->k_star);
  CHECK(same.plan->pin_set == best.plan->pin_set);

  // a hopeless request is reported as infeasible, not an error
  pin_k.k_override = 1 << 20;
  PlanResult nope = find_efficiency_optimal_minibatch(
      g, phases, inst.network, inst.hardware, m, {}, pin_k);
  CHECK(nope.status == PlanStatus::infeasible);
}

TEST_CASE("adjust_iterations ceils the contracted count") {
  CHECK(adjust_iterations(8, 4, 1000) == 500);   // q = 2
  CHECK(adjust_iterations(4, 4, 1000) == 1000);  // q = 1
  CHECK(adjust_iterations(12, 4, 1000) == 334);  // q = 3
  CHECK_THROWS_AS(adjust_iterations(0, 4, 1000), std::invalid_argument);
}
