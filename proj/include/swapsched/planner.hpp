#pragma once

#include <optional>
#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/perf_model.hpp"
#include "swapsched/types.hpp"

namespace swapsched {

struct SwapPlan {
  int k_star = 0;
  PinSet pin_set;
  std::vector<TimeNs> t_ready;        // per phase, 2N entries
  TimeNs predicted_iter_time = 0;
  double predicted_whole_time_s = 0.0;
  Bytes active_area_bytes = 0;        // layer-wise peak at k_star
  Bytes pinned_bytes = 0;
  Bytes residual_bytes = 0;           // budget - fixed - active - pinned
  Bytes fixed_overhead_bytes = 0;     // params + grads + m_others
};

struct MemoryCheck {
  bool ok = true;
  std::optional<std::uint32_t> first_violation_seq;
  Bytes peak_bytes = 0;
};

struct ConstraintReport {
  MemoryCheck memory;
  bool stall_ok = true;
  std::vector<int> violating_phases;  // the set Omega
  std::vector<TimeNs> slack;          // cumulative compute minus t_ready
};

// Earliest per-phase timestamps at which all swapped-in data has arrived
// and allocations have succeeded, under the budgeted lookahead model.
// `budget` bounds the bytes the swap-in stream may hold ahead of compute;
// releases are credited back when their phase's computation completes.
// A prefetch cannot begin before its object's offload is estimated to
// finish, and a blocked allocation waits for the first later phase whose
// releases cover its shortfall against the budget. Pinned featuremaps
// occupy the pool from allocation to release but are never transferred.
std::vector<TimeNs> compute_t_ready(const Gmap& gmap, int k, Bytes budget,
                                    const PinSet& pins, const PerfModel& model,
                                    const std::vector<TimeNs>& compute_times);

MemoryCheck check_memory_constraint(const Gmap& gmap, int k, Bytes budget,
                                    const PinSet& pins);

// Phases whose data-ready time falls strictly after the previous phase's
// computation has finished (equality counts as satisfied).
std::vector<int> check_stall_constraint(const std::vector<TimeNs>& t_ready,
                                        const std::vector<TimeNs>& compute_times);

ConstraintReport build_constraint_report(const Gmap& gmap, int k, Bytes budget,
                                         const PinSet& pins,
                                         const std::vector<TimeNs>& t_ready,
                                         const std::vector<TimeNs>& compute_times);

struct KmaxResult {
  bool trainable = false;
  int k_max = 0;
  std::string reason;  // set when untrainable
};

// k_max = floor(k_base * (budget - m_others - params - peak workspace)
//               / sum of peak featuremap bytes at k_base)
KmaxResult max_trainable_minibatch(const Gmap& gmap, const NetworkSpec& net,
                                   const HardwareSpec& hw);

enum class PlanStatus { ok, untrainable, infeasible };

struct PlanResult {
  PlanStatus status = PlanStatus::infeasible;
  std::optional<SwapPlan> plan;
  std::string detail;
};

struct PlannerOptions {
  int step = 1;        // coarse scan stride; a fine pass preserves the result
  int k_override = 0;  // evaluate only this k when > 0
};

// Single-k evaluation: memory feasibility, one greedy pinning round for
// the violating set, and the resulting constraint state.
struct KEvaluation {
  int k = 0;
  bool memory_feasible = false;
  bool stall_free = false;
  PinSet pins;
  std::vector<TimeNs> t_ready;
  std::vector<int> omega;  // violating phases after pinning
  Bytes active_area_bytes = 0;
  Bytes pinned_bytes = 0;
  Bytes resident_peak_bytes = 0;  // peak with pinned lifetimes charged
};

KEvaluation evaluate_minibatch(const Gmap& gmap,
                               const std::vector<PhaseLayer>& phases, int k,
                               const NetworkSpec& net, const HardwareSpec& hw,
                               const PerfModel& model);

// Linear search from k_max downward for the largest minibatch satisfying
// both the memory and the stall constraint, pinning stalled featuremaps
// into the residual region along the way.
PlanResult find_efficiency_optimal_minibatch(const Gmap& gmap,
                                             const std::vector<PhaseLayer>& phases,
                                             const NetworkSpec& net,
                                             const HardwareSpec& hw,
                                             const PerfModel& model,
                                             const TrainingConfig& cfg,
                                             const PlannerOptions& opts = {});

// ceil(iters_base / q) with q = k_star / k_base
long long adjust_iterations(int k_star, int k_base, long long iters_base);

std::string swap_plan_to_json(const SwapPlan& plan, const Gmap& gmap,
                              const std::vector<TimeNs>& slack);

}  // namespace swapsched
