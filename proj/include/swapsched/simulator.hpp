#pragma once

#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/perf_model.hpp"
#include "swapsched/planner.hpp"
#include "swapsched/types.hpp"

namespace swapsched {

enum class SimMode { naive, dynamic, resident };

std::string sim_mode_name(SimMode m);

enum class Stream { compute, swap_out, swap_in };

std::string stream_name(Stream s);

enum class EventKind {
  kernel_start,
  kernel_end,
  xfer_start,
  xfer_end,
  alloc,
  free,
  block,
  unblock
};

std::string event_kind_name(EventKind k);

struct SimEvent {
  TimeNs time = 0;
  Stream stream = Stream::compute;
  EventKind kind = EventKind::alloc;
  std::string subject;      // "phase 3" or an object name
  Bytes mem_used_after = 0;
};

struct SimConfig {
  Bytes budget = 0;          // full device budget
  Bytes fixed_overhead = 0;  // params/grads/m_others, charged at t = 0
  SimMode mode = SimMode::naive;
  double bandwidth = 0.0;    // bytes/s per copy direction
  TimeNs alloc_cost = 0;
};

struct SimSummary {
  TimeNs iter_time = 0;
  std::vector<TimeNs> per_phase_stall;
  TimeNs total_stall = 0;
  Bytes peak_mem = 0;
  std::vector<std::pair<TimeNs, Bytes>> mem_timeseries;
  bool oom = false;
  std::string oom_detail;  // wait graph of the blocking cycle
  // per-phase instrumentation
  std::vector<TimeNs> data_ready;
  std::vector<TimeNs> kernel_start;
  std::vector<TimeNs> kernel_end;
};

struct SimResult {
  std::vector<SimEvent> events;
  SimSummary summary;
};

// One training iteration under three logical streams (compute, swap-out,
// swap-in), a bounded memory pool and one FIFO copy channel per transfer
// direction. Deterministic: equal-time events are ordered by stream
// priority (compute, swap-out, swap-in) then by sequence number.
SimResult simulate_iteration(const Gmap& gmap,
                             const std::vector<PhaseLayer>& phases, int k,
                             const PinSet& pins, const PerfModel& model,
                             const SimConfig& cfg);

struct StallRow {
  int phase = 0;
  TimeNs stall = 0;
};

// Per-phase stall table; throws when the trace ended in a deadlock.
std::vector<StallRow> stall_report(const SimSummary& summary);

struct Verdict {
  bool pass = false;
  double stall_fraction = 0.0;
  bool memory_ok = false;
  TimeNs max_ready_deviation = 0;  // |simulated data-ready - planned t_ready|
  std::string detail;
};

// Checks a simulated iteration against the plan that produced it:
// total stall within `tolerance` of iteration time and the pool never
// above budget.
Verdict verify_plan(const SwapPlan& plan, const SimSummary& summary,
                    Bytes budget, double tolerance);

std::string trace_to_csv(const std::vector<SimEvent>& events);
std::string summary_to_json(const SimSummary& summary);

// Plot data: cumulative allocated and freed bytes over time.
std::string mem_curves_csv(const std::vector<SimEvent>& events,
                           Bytes fixed_overhead);
std::string stall_bars_csv(const SimSummary& summary);

}  // namespace swapsched
