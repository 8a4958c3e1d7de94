#include "swapsched/planner.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace swapsched {

using nlohmann::json;

namespace {

struct PhaseAggregates {
  // claims per phase (allocations plus non-pinned prefetches); pinned
  // featuremaps still allocate and release real bytes, they just never
  // move across the interconnect
  std::vector<std::int64_t> pos_bytes;
  std::vector<std::int64_t> pos_prefix;  // pos_prefix[j] = sum over phases 1..j
  // prefetch ops per phase in sequence order, with transfer time and the
  // earliest time the data can leave the host (offload completion)
  struct Pref {
    TimeNs duration;
    TimeNs available_at;
  };
  std::vector<std::vector<Pref>> prefetches;
  // byte frees in the order the swap-out stream performs them: offloads
  // serialize on the copy channel, releases land at kernel completion or
  // behind whatever transfer is still draining
  std::vector<TimeNs> free_at;
  std::vector<std::int64_t> free_prefix;  // free_prefix[i] = bytes freed by i ops
};

PhaseAggregates aggregate_phases(const Gmap& gmap, int k, const PinSet& pins,
                                 const PerfModel& model,
                                 const std::vector<TimeNs>& cum_compute) {
  const int phases = gmap.num_phases;
  PhaseAggregates agg;
  agg.pos_bytes.assign(static_cast<size_t>(phases) + 1, 0);
  agg.prefetches.resize(static_cast<size_t>(phases) + 1);

  // walk the swap-out queue once to fix every free instant and each
  // object's offload completion
  std::vector<TimeNs> offload_done(gmap.objects.size(), 0);
  std::vector<bool> has_offload(gmap.objects.size(), false);
  agg.free_prefix.push_back(0);
  TimeNs out_cursor = 0;
  for (const MemOp& op : gmap.ops) {
    const bool pinned = pins.count(op.object) > 0;
    const auto sz = static_cast<std::int64_t>(gmap.op_bytes(op, k));
    if (op.kind == MemOpKind::offload) {
      if (pinned) continue;  // pinned offloads leave the queue entirely
      out_cursor = std::max(out_cursor,
                            cum_compute[static_cast<size_t>(op.phase)]);
      out_cursor += transfer_duration(gmap.op_bytes(op, k),
                                      model.bandwidth_avail);
      has_offload[op.object] = true;
      offload_done[op.object] = out_cursor;
      agg.free_at.push_back(out_cursor);
      agg.free_prefix.push_back(agg.free_prefix.back() + sz);
    } else if (op.kind == MemOpKind::release) {
      out_cursor = std::max(out_cursor,
                            cum_compute[static_cast<size_t>(op.phase)]);
      agg.free_at.push_back(out_cursor);
      agg.free_prefix.push_back(agg.free_prefix.back() + sz);
    }
  }

  for (const MemOp& op : gmap.ops) {
    const bool pinned = pins.count(op.object) > 0;
    const auto sz = static_cast<std::int64_t>(gmap.op_bytes(op, k));
    const auto j = static_cast<size_t>(op.phase);
    if (op.kind == MemOpKind::allocate) {
      agg.pos_bytes[j] += sz;
    } else if (op.kind == MemOpKind::prefetch && !pinned) {
      agg.pos_bytes[j] += sz;
      PhaseAggregates::Pref p;
      p.duration =
          transfer_duration(gmap.op_bytes(op, k), model.bandwidth_avail);
      p.available_at = has_offload[op.object] ? offload_done[op.object] : 0;
      agg.prefetches[j].push_back(p);
    }
  }

  agg.pos_prefix.assign(static_cast<size_t>(phases) + 1, 0);
  for (int j = 1; j <= phases; ++j)
    agg.pos_prefix[static_cast<size_t>(j)] =
        agg.pos_prefix[static_cast<size_t>(j - 1)] +
        agg.pos_bytes[static_cast<size_t>(j)];
  return agg;
}

// number of swap-out ops whose frees have landed by time t
size_t frees_landed_by(const std::vector<TimeNs>& free_at, TimeNs t) {
  auto it = std::upper_bound(free_at.begin(), free_at.end(), t);
  return static_cast<size_t>(it - free_at.begin());
}

Bytes fixed_overhead_bytes(const NetworkSpec& net, const HardwareSpec& hw) {
  return hw.m_others + net.param_grad_bytes_total();
}

}  // namespace

std::vector<TimeNs> compute_t_ready(const Gmap& gmap, int k, Bytes budget,
                                    const PinSet& pins, const PerfModel& model,
                                    const std::vector<TimeNs>& compute_times) {
  const int phases = gmap.num_phases;
  if (static_cast<int>(compute_times.size()) != phases)
    throw std::invalid_argument("compute_times must cover all 2N phases");

  const Bytes needed = peak_layerwise_memory(gmap, k, pins).peak_bytes;
  if (budget < needed)
    throw UntrainableError("budget " + std::to_string(budget) +
                           " below layer-wise peak " + std::to_string(needed));

  std::vector<TimeNs> cum_compute(static_cast<size_t>(phases) + 1, 0);
  for (int j = 1; j <= phases; ++j)
    cum_compute[static_cast<size_t>(j)] =
        cum_compute[static_cast<size_t>(j - 1)] +
        compute_times[static_cast<size_t>(j - 1)];

  PhaseAggregates agg = aggregate_phases(gmap, k, pins, model, cum_compute);

  std::vector<TimeNs> t_ready(static_cast<size_t>(phases), 0);
  const auto budget_i = static_cast<std::int64_t>(budget);

  for (int j = 1; j <= phases; ++j) {
    TimeNs base;
    if (j == 1) {
      base = 0;  // first phase's data can move as soon as the iteration starts
    } else {
      base = t_ready[static_cast<size_t>(j - 2)];
      const size_t landed = frees_landed_by(agg.free_at, base);
      const std::int64_t used_present =
          agg.pos_prefix[static_cast<size_t>(j - 1)] - agg.free_prefix[landed];
      const std::int64_t shortfall =
          used_present + agg.pos_bytes[static_cast<size_t>(j)] - budget_i;
      if (shortfall > 0) {
        // Blocked: wait along the release sequence until enough frees
        // land to cover the shortfall. used_present already credits
        // everything freed so far.
        size_t m = landed;
        while (m < agg.free_at.size() &&
               agg.free_prefix[m] - agg.free_prefix[landed] < shortfall)
          ++m;
        base = m > 0 ? agg.free_at[m - 1] : base;
      }
    }
    // serialize this phase's prefetches behind the swap-in cursor; none
    // may start before its data has finished offloading
    TimeNs cursor = base;
    for (const auto& p : agg.prefetches[static_cast<size_t>(j)])
      cursor = std::max(cursor, p.available_at) + p.duration;
    t_ready[static_cast<size_t>(j - 1)] = cursor;
  }
  return t_ready;
}

MemoryCheck check_memory_constraint(const Gmap& gmap, int k, Bytes budget,
                                    const PinSet& pins) {
  MemoryCheck res;
  std::int64_t running = 0;
  std::int64_t peak = 0;
  for (const MemOp& op : gmap.ops) {
    const bool pinned = pins.count(op.object) > 0;
    const auto sz = static_cast<std::int64_t>(gmap.op_bytes(op, k));
    switch (op.kind) {
      case MemOpKind::allocate: running += sz; break;
      case MemOpKind::release: running -= sz; break;
      case MemOpKind::offload:
        if (!pinned) running -= sz;
        break;
      case MemOpKind::prefetch:
        if (!pinned) running += sz;
        break;
    }
    peak = std::max(peak, running);
    if (res.ok && running > static_cast<std::int64_t>(budget)) {
      res.ok = false;
      res.first_violation_seq = op.sequence_no;
    }
  }
  res.peak_bytes = static_cast<Bytes>(peak < 0 ? 0 : peak);
  return res;
}

std::vector<int> check_stall_constraint(const std::vector<TimeNs>& t_ready,
                                        const std::vector<TimeNs>& compute_times) {
  if (t_ready.size() != compute_times.size())
    throw std::invalid_argument("t_ready and compute_times length mismatch");
  std::vector<int> omega;
  TimeNs cum_before = 0;
  for (size_t j = 0; j < t_ready.size(); ++j) {
    if (t_ready[j] > cum_before) omega.push_back(static_cast<int>(j) + 1);
    cum_before += compute_times[j];
  }
  return omega;
}

ConstraintReport build_constraint_report(const Gmap& gmap, int k, Bytes budget,
                                         const PinSet& pins,
                                         const std::vector<TimeNs>& t_ready,
                                         const std::vector<TimeNs>& compute_times) {
  ConstraintReport rep;
  rep.memory = check_memory_constraint(gmap, k, budget, pins);
  rep.violating_phases = check_stall_constraint(t_ready, compute_times);
  rep.stall_ok = rep.violating_phases.empty();
  rep.slack.resize(t_ready.size());
  TimeNs cum_before = 0;
  for (size_t j = 0; j < t_ready.size(); ++j) {
    rep.slack[j] = cum_before - t_ready[j];
    cum_before += compute_times[j];
  }
  return rep;
}

KmaxResult max_trainable_minibatch(const Gmap& gmap, const NetworkSpec& net,
                                   const HardwareSpec& hw) {
  KmaxResult res;
  const Bytes fixed = fixed_overhead_bytes(net, hw);
  PeakResult peak = peak_layerwise_memory(gmap, net.k_base, {});

  Bytes ws_in_peak = 0;
  Bytes fm_in_peak = 0;
  for (ObjectId id : peak.live_objects) {
    const MemObject& obj = gmap.object(id);
    const Bytes sz = scale_size(obj, net.k_base, net.k_base);
    if (obj.kind == ObjectKind::workspace) ws_in_peak += sz;
    if (obj.kind == ObjectKind::featuremap) fm_in_peak += sz;
  }
  if (fm_in_peak == 0)
    throw SpecError("peak working set holds no featuremap bytes; "
                    "the maximal minibatch is unbounded");

  if (hw.memory_budget <= fixed + ws_in_peak) {
    res.trainable = false;
    res.reason = "memory budget does not exceed the fixed overheads";
    return res;
  }
  const Bytes numer = hw.memory_budget - fixed - ws_in_peak;
  using u128 = unsigned __int128;
  const u128 k_max =
      static_cast<u128>(net.k_base) * static_cast<u128>(numer) / fm_in_peak;
  if (k_max < 1) {
    res.trainable = false;
    res.reason = "budget cannot fit a single sample's working set";
    return res;
  }
  res.trainable = true;
  res.k_max = static_cast<int>(std::min<u128>(k_max, 1u << 30));
  return res;
}

KEvaluation evaluate_minibatch(const Gmap& gmap,
                               const std::vector<PhaseLayer>& phases, int k,
                               const NetworkSpec& net, const HardwareSpec& hw,
                               const PerfModel& model) {
  KEvaluation ev;
  ev.k = k;
  const Bytes fixed = fixed_overhead_bytes(net, hw);
  ev.active_area_bytes = peak_layerwise_memory(gmap, k, {}).peak_bytes;
  if (hw.memory_budget < fixed + ev.active_area_bytes) {
    ev.memory_feasible = false;
    return ev;
  }
  ev.memory_feasible = true;

  const std::vector<TimeNs> compute = phase_compute_times(phases, k, model);
  // pinned bytes flow through the readiness model by lifetime; the whole
  // pool beyond the fixed overheads is available to it
  const Bytes available = hw.memory_budget - fixed;

  ev.t_ready = compute_t_ready(gmap, k, available, {}, model, compute);
  ev.omega = check_stall_constraint(ev.t_ready, compute);
  if (ev.omega.empty()) {
    ev.stall_free = true;
    ev.resident_peak_bytes = ev.active_area_bytes;
    return ev;
  }

  // One greedy pinning round: featuremaps feeding the violating phases,
  // largest transfer first. A candidate is admitted while the pool still
  // covers the peak with the pinned lifetimes charged in full.
  std::vector<ObjectId> candidates;
  {
    std::set<int> omega_set(ev.omega.begin(), ev.omega.end());
    std::set<ObjectId> seen;
    for (const MemOp& op : gmap.ops) {
      if (op.kind != MemOpKind::prefetch) continue;
      if (!omega_set.count(op.phase)) continue;
      if (seen.insert(op.object).second) candidates.push_back(op.object);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](ObjectId a, ObjectId b) {
                     const Bytes sa = scale_size(gmap.object(a), k, gmap.k_base);
                     const Bytes sb = scale_size(gmap.object(b), k, gmap.k_base);
                     if (sa != sb) return sa > sb;
                     return a < b;
                   });
  Bytes pinned_peak = ev.active_area_bytes;
  for (ObjectId id : candidates) {
    PinSet tentative = ev.pins;
    tentative.insert(id);
    const Bytes peak = peak_layerwise_memory(gmap, k, tentative).peak_bytes;
    if (peak <= available) {
      ev.pins = std::move(tentative);
      ev.pinned_bytes += scale_size(gmap.object(id), k, gmap.k_base);
      pinned_peak = peak;
    }
  }
  ev.resident_peak_bytes = pinned_peak;
  if (!ev.pins.empty()) {
    ev.t_ready = compute_t_ready(gmap, k, available, ev.pins, model, compute);
    ev.omega = check_stall_constraint(ev.t_ready, compute);
  }
  ev.stall_free = ev.omega.empty();
  return ev;
}

namespace {

SwapPlan make_plan(const KEvaluation& ev, const std::vector<PhaseLayer>& phases,
                   const NetworkSpec& net, const HardwareSpec& hw,
                   const PerfModel& model, const TrainingConfig& cfg) {
  SwapPlan plan;
  plan.k_star = ev.k;
  plan.pin_set = ev.pins;
  plan.t_ready = ev.t_ready;
  plan.active_area_bytes = ev.active_area_bytes;
  plan.pinned_bytes = ev.pinned_bytes;
  plan.fixed_overhead_bytes = fixed_overhead_bytes(net, hw);
  // headroom beyond the pinned-lifetime peak
  plan.residual_bytes = hw.memory_budget - plan.fixed_overhead_bytes -
                        ev.resident_peak_bytes;
  plan.predicted_iter_time = iteration_time(phases, ev.k, model);
  TrainingConfig c = cfg;
  if (c.dataset_size <= 0) c.dataset_size = ev.k;  // degenerate single batch
  plan.predicted_whole_time_s = whole_training_time_s(phases, ev.k, model, c);
  return plan;
}

}  // namespace

PlanResult find_efficiency_optimal_minibatch(const Gmap& gmap,
                                             const std::vector<PhaseLayer>& phases,
                                             const NetworkSpec& net,
                                             const HardwareSpec& hw,
                                             const PerfModel& model,
                                             const TrainingConfig& cfg,
                                             const PlannerOptions& opts) {
  PlanResult res;
  KmaxResult kmax = max_trainable_minibatch(gmap, net, hw);
  if (!kmax.trainable) {
    res.status = PlanStatus::untrainable;
    res.detail = kmax.reason;
    return res;
  }

  if (opts.k_override > 0) {
    KEvaluation ev =
        evaluate_minibatch(gmap, phases, opts.k_override, net, hw, model);
    if (ev.memory_feasible && ev.stall_free) {
      res.status = PlanStatus::ok;
      res.plan = make_plan(ev, phases, net, hw, model, cfg);
    } else {
      res.status = PlanStatus::infeasible;
      res.detail = ev.memory_feasible
                       ? "stall constraint not satisfiable at the requested k"
                       : "memory constraint violated at the requested k";
    }
    return res;
  }

  auto try_k = [&](int k) -> std::optional<KEvaluation> {
    KEvaluation ev = evaluate_minibatch(gmap, phases, k, net, hw, model);
    if (ev.memory_feasible && ev.stall_free) return ev;
    return std::nullopt;
  };

  const int step = std::max(1, opts.step);
  std::optional<KEvaluation> found;
  if (step == 1) {
    for (int k = kmax.k_max; k >= 1 && !found; --k) found = try_k(k);
  } else {
    int coarse = 0;
    for (int k = kmax.k_max; k >= 1; k -= step) {
      if (auto ev = try_k(k)) {
        coarse = k;
        found = ev;
        break;
      }
    }
    if (coarse > 0) {
      // fine pass over the stride window above the coarse hit
      const int hi = std::min(kmax.k_max, coarse + step - 1);
      for (int k = hi; k > coarse; --k) {
        if (auto ev = try_k(k)) {
          found = ev;
          break;
        }
      }
    } else {
      // stride may have skipped the only feasible points
      for (int k = kmax.k_max; k >= 1 && !found; --k) found = try_k(k);
    }
  }

  if (!found) {
    KEvaluation at_one = evaluate_minibatch(gmap, phases, 1, net, hw, model);
    if (!at_one.memory_feasible) {
      res.status = PlanStatus::untrainable;
      res.detail = "layer-wise peak at k=1 exceeds the memory budget";
    } else {
      res.status = PlanStatus::infeasible;
      res.detail = "no minibatch size satisfies the stall constraint";
    }
    return res;
  }
  res.status = PlanStatus::ok;
  res.plan = make_plan(*found, phases, net, hw, model, cfg);
  return res;
}

long long adjust_iterations(int k_star, int k_base, long long iters_base) {
  if (k_star <= 0 || k_base <= 0 || iters_base <= 0)
    throw std::invalid_argument("adjust_iterations requires positive inputs");
  // ceil(iters_base / (k_star / k_base)) = ceil(iters_base * k_base / k_star)
  using i128 = __int128;
  const i128 numer = static_cast<i128>(iters_base) * k_base;
  return static_cast<long long>((numer + k_star - 1) / k_star);
}

std::string swap_plan_to_json(const SwapPlan& plan, const Gmap& gmap,
                              const std::vector<TimeNs>& slack) {
  json j;
  j["format_version"] = 1;
  j["k_star"] = plan.k_star;
  json pins = json::array();
  for (ObjectId id : plan.pin_set) pins.push_back(gmap.object(id).name);
  j["pinned_objects"] = std::move(pins);
  json tr = json::array();
  for (TimeNs t : plan.t_ready) tr.push_back(to_seconds(t));
  j["t_ready_s"] = std::move(tr);
  j["predicted_iter_time_s"] = to_seconds(plan.predicted_iter_time);
  j["predicted_whole_time_s"] = plan.predicted_whole_time_s;
  j["active_area_bytes"] = plan.active_area_bytes;
  j["pinned_bytes"] = plan.pinned_bytes;
  j["residual_bytes"] = plan.residual_bytes;
  j["fixed_overhead_bytes"] = plan.fixed_overhead_bytes;
  json sl = json::array();
  for (TimeNs t : slack) sl.push_back(to_seconds(t));
  j["slack_s"] = std::move(sl);
  return j.dump(2) + "\n";
}

}  // namespace swapsched
