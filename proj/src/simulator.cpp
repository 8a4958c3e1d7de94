#include "swapsched/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <queue>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace swapsched {

using nlohmann::json;

std::string sim_mode_name(SimMode m) {
  switch (m) {
    case SimMode::naive: return "naive";
    case SimMode::dynamic: return "dynamic";
    case SimMode::resident: return "resident";
  }
  return "naive";
}

std::string stream_name(Stream s) {
  switch (s) {
    case Stream::compute: return "compute";
    case Stream::swap_out: return "swap_out";
    case Stream::swap_in: return "swap_in";
  }
  return "compute";
}

std::string event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::kernel_start: return "kernel_start";
    case EventKind::kernel_end: return "kernel_end";
    case EventKind::xfer_start: return "xfer_start";
    case EventKind::xfer_end: return "xfer_end";
    case EventKind::alloc: return "alloc";
    case EventKind::free: return "free";
    case EventKind::block: return "block";
    case EventKind::unblock: return "unblock";
  }
  return "alloc";
}

namespace {

struct QueuedOp {
  MemOpKind kind;
  ObjectId object;
  int phase;
  Bytes size;
};

int stream_priority(Stream s) {
  switch (s) {
    case Stream::compute: return 0;
    case Stream::swap_out: return 1;
    case Stream::swap_in: return 2;
  }
  return 0;
}

struct Pending {
  TimeNs time;
  int priority;
  std::uint64_t seq;
  Stream stream;
  enum class What { kernel_end, swap_in_done, swap_out_done } what;

  bool operator>(const Pending& o) const {
    return std::tie(time, priority, seq) > std::tie(o.time, o.priority, o.seq);
  }
};

}  // namespace

SimResult simulate_iteration(const Gmap& gmap,
                             const std::vector<PhaseLayer>& phases, int k,
                             const PinSet& pins, const PerfModel& model,
                             const SimConfig& cfg) {
  const int num_phases = gmap.num_phases;
  if (static_cast<int>(phases.size()) != num_phases)
    throw std::invalid_argument("phase list does not match the gmap");
  if (cfg.bandwidth <= 0.0)
    throw std::invalid_argument("bandwidth must be positive");

  // mode / pin-set consistency
  const auto all_fm = gmap.featuremap_ids();
  for (ObjectId id : pins) {
    if (id >= gmap.objects.size())
      throw std::invalid_argument("pin set references unknown object");
    if (gmap.object(id).kind != ObjectKind::featuremap)
      throw std::invalid_argument("only featuremaps can be pinned");
  }
  switch (cfg.mode) {
    case SimMode::naive:
      if (!pins.empty())
        throw std::invalid_argument("naive mode requires an empty pin set");
      break;
    case SimMode::resident:
      if (pins.size() != all_fm.size())
        throw std::invalid_argument(
            "resident mode requires every featuremap pinned");
      break;
    case SimMode::dynamic:
      break;
  }

  // Build stream queues; pinned objects keep allocate/release but lose
  // their transfers.
  std::vector<QueuedOp> in_q, out_q;
  std::vector<int> swap_in_remaining(static_cast<size_t>(num_phases) + 1, 0);
  std::vector<bool> object_has_offload(gmap.objects.size(), false);
  for (const MemOp& op : gmap.ops) {
    const bool pinned = pins.count(op.object) > 0;
    const Bytes size = gmap.op_bytes(op, k);
    switch (op.kind) {
      case MemOpKind::allocate:
        in_q.push_back({op.kind, op.object, op.phase, size});
        swap_in_remaining[static_cast<size_t>(op.phase)]++;
        break;
      case MemOpKind::prefetch:
        if (!pinned) {
          in_q.push_back({op.kind, op.object, op.phase, size});
          swap_in_remaining[static_cast<size_t>(op.phase)]++;
        }
        break;
      case MemOpKind::offload:
        if (!pinned) {
          out_q.push_back({op.kind, op.object, op.phase, size});
          object_has_offload[op.object] = true;
        }
        break;
      case MemOpKind::release:
        out_q.push_back({op.kind, op.object, op.phase, size});
        break;
    }
  }

  SimResult result;
  SimSummary& sum = result.summary;
  sum.per_phase_stall.assign(static_cast<size_t>(num_phases), 0);
  sum.data_ready.assign(static_cast<size_t>(num_phases), 0);
  sum.kernel_start.assign(static_cast<size_t>(num_phases), 0);
  sum.kernel_end.assign(static_cast<size_t>(num_phases), 0);

  std::vector<TimeNs> kernel_dur(static_cast<size_t>(num_phases));
  for (int j = 0; j < num_phases; ++j)
    kernel_dur[static_cast<size_t>(j)] =
        layer_compute_time(phases[static_cast<size_t>(j)], k, model);

  TimeNs now = 0;
  Bytes used = cfg.fixed_overhead;
  Bytes peak = used;
  std::uint64_t tick = 0;

  auto log_event = [&](Stream stream, EventKind kind, std::string subject) {
    result.events.push_back(SimEvent{now, stream, kind, std::move(subject), used});
  };
  auto touch_mem = [&]() {
    peak = std::max(peak, used);
    if (sum.mem_timeseries.empty() || sum.mem_timeseries.back().first != now)
      sum.mem_timeseries.emplace_back(now, used);
    else
      sum.mem_timeseries.back().second = used;
  };
  touch_mem();

  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pq;
  auto schedule = [&](TimeNs when, Stream stream, Pending::What what) {
    pq.push(Pending{when, stream_priority(stream), tick++, stream, what});
  };

  // stream state
  int next_phase = 1;        // next kernel to launch
  bool kernel_running = false;
  std::vector<bool> kernel_done(static_cast<size_t>(num_phases) + 1, false);
  size_t in_head = 0, out_head = 0;
  bool in_busy = false, out_busy = false;
  bool in_blocked_logged = false;
  std::vector<bool> offload_done(gmap.objects.size(), false);

  auto claim = [&](Bytes size) -> bool {
    if (used + size > cfg.budget) return false;
    used += size;
    touch_mem();
    return true;
  };
  auto release_bytes = [&](Bytes size) {
    used -= std::min(used, size);
    touch_mem();
  };

  auto obj_name = [&](ObjectId id) { return gmap.object(id).name; };

  // returns true when any stream made progress
  auto advance = [&]() -> bool {
    bool progress = false;

    // compute stream
    if (!kernel_running && next_phase <= num_phases &&
        (next_phase == 1 || kernel_done[static_cast<size_t>(next_phase - 1)]) &&
        swap_in_remaining[static_cast<size_t>(next_phase)] == 0) {
      kernel_running = true;
      sum.kernel_start[static_cast<size_t>(next_phase - 1)] = now;
      log_event(Stream::compute, EventKind::kernel_start,
                "phase " + std::to_string(next_phase));
      schedule(now + kernel_dur[static_cast<size_t>(next_phase - 1)],
               Stream::compute, Pending::What::kernel_end);
      progress = true;
    }

    // swap-out stream: releases are immediate, offloads occupy the D2H channel
    while (!out_busy && out_head < out_q.size()) {
      const QueuedOp& op = out_q[out_head];
      if (!kernel_done[static_cast<size_t>(op.phase)]) break;
      if (op.kind == MemOpKind::release) {
        release_bytes(op.size);
        log_event(Stream::swap_out, EventKind::free, obj_name(op.object));
        ++out_head;
        progress = true;
      } else {
        log_event(Stream::swap_out, EventKind::xfer_start, obj_name(op.object));
        out_busy = true;
        schedule(now + transfer_duration(op.size, cfg.bandwidth),
                 Stream::swap_out, Pending::What::swap_out_done);
        progress = true;
      }
    }

    // swap-in stream: allocations claim pool space, prefetches also wait
    // for their offload and occupy the H2D channel
    while (!in_busy && in_head < in_q.size()) {
      const QueuedOp& op = in_q[in_head];
      if (op.kind == MemOpKind::allocate) {
        if (!claim(op.size)) {
          if (!in_blocked_logged) {
            log_event(Stream::swap_in, EventKind::block, obj_name(op.object));
            in_blocked_logged = true;
          }
          break;
        }
        if (in_blocked_logged) {
          log_event(Stream::swap_in, EventKind::unblock, obj_name(op.object));
          in_blocked_logged = false;
        }
        log_event(Stream::swap_in, EventKind::alloc, obj_name(op.object));
        if (cfg.alloc_cost > 0) {
          in_busy = true;
          schedule(now + cfg.alloc_cost, Stream::swap_in,
                   Pending::What::swap_in_done);
        } else {
          ++in_head;
          if (--swap_in_remaining[static_cast<size_t>(op.phase)] == 0)
            sum.data_ready[static_cast<size_t>(op.phase - 1)] = now;
        }
        progress = true;
      } else {  // prefetch
        if (object_has_offload[op.object] && !offload_done[op.object]) {
          if (!in_blocked_logged) {
            log_event(Stream::swap_in, EventKind::block, obj_name(op.object));
            in_blocked_logged = true;
          }
          break;
        }
        if (!claim(op.size)) {
          if (!in_blocked_logged) {
            log_event(Stream::swap_in, EventKind::block, obj_name(op.object));
            in_blocked_logged = true;
          }
          break;
        }
        if (in_blocked_logged) {
          log_event(Stream::swap_in, EventKind::unblock, obj_name(op.object));
          in_blocked_logged = false;
        }
        log_event(Stream::swap_in, EventKind::xfer_start, obj_name(op.object));
        in_busy = true;
        schedule(now + transfer_duration(op.size, cfg.bandwidth),
                 Stream::swap_in, Pending::What::swap_in_done);
        progress = true;
      }
    }
    return progress;
  };

  auto cascade = [&]() {
    while (advance()) {
    }
  };

  cascade();
  while (!pq.empty()) {
    Pending ev = pq.top();
    pq.pop();
    now = ev.time;
    switch (ev.what) {
      case Pending::What::kernel_end: {
        kernel_running = false;
        kernel_done[static_cast<size_t>(next_phase)] = true;
        sum.kernel_end[static_cast<size_t>(next_phase - 1)] = now;
        log_event(Stream::compute, EventKind::kernel_end,
                  "phase " + std::to_string(next_phase));
        ++next_phase;
        break;
      }
      case Pending::What::swap_out_done: {
        const QueuedOp& op = out_q[out_head];
        release_bytes(op.size);
        offload_done[op.object] = true;
        log_event(Stream::swap_out, EventKind::xfer_end, obj_name(op.object));
        out_busy = false;
        ++out_head;
        break;
      }
      case Pending::What::swap_in_done: {
        const QueuedOp& op = in_q[in_head];
        if (op.kind == MemOpKind::prefetch)
          log_event(Stream::swap_in, EventKind::xfer_end, obj_name(op.object));
        in_busy = false;
        ++in_head;
        if (--swap_in_remaining[static_cast<size_t>(op.phase)] == 0)
          sum.data_ready[static_cast<size_t>(op.phase - 1)] = now;
        break;
      }
    }
    cascade();
  }

  const bool unfinished = next_phase <= num_phases || kernel_running ||
                          in_head < in_q.size() || out_head < out_q.size();
  if (unfinished) {
    // Nothing scheduled and work remains: circular wait between the
    // blocked allocation and the frees that would satisfy it.
    sum.oom = true;
    std::ostringstream why;
    why << "deadlock at t=" << to_seconds(now) << "s:";
    if (next_phase <= num_phases)
      why << " compute waits for phase " << next_phase << " ("
          << swap_in_remaining[static_cast<size_t>(next_phase)]
          << " swap-in ops outstanding);";
    if (in_head < in_q.size()) {
      const QueuedOp& op = in_q[in_head];
      why << " swap-in blocked on " << mem_op_kind_name(op.kind) << " "
          << obj_name(op.object) << " (" << op.size << " B, "
          << (cfg.budget - used) << " B free);";
    }
    if (out_head < out_q.size()) {
      const QueuedOp& op = out_q[out_head];
      why << " swap-out waits for phase " << op.phase << "'s kernel;";
    }
    sum.oom_detail = why.str();
  }

  sum.peak_mem = peak;
  if (!sum.oom) {
    sum.iter_time = sum.kernel_end.back();
    TimeNs prev_end = 0;
    for (int j = 0; j < num_phases; ++j) {
      sum.per_phase_stall[static_cast<size_t>(j)] =
          sum.kernel_start[static_cast<size_t>(j)] - prev_end;
      prev_end = sum.kernel_end[static_cast<size_t>(j)];
    }
    sum.total_stall = 0;
    for (TimeNs s : sum.per_phase_stall) sum.total_stall += s;
  }
  return result;
}

std::vector<StallRow> stall_report(const SimSummary& summary) {
  if (summary.oom)
    throw std::invalid_argument("stall report requested for a deadlocked trace");
  std::vector<StallRow> rows;
  rows.reserve(summary.per_phase_stall.size());
  for (size_t j = 0; j < summary.per_phase_stall.size(); ++j)
    rows.push_back({static_cast<int>(j) + 1, summary.per_phase_stall[j]});
  return rows;
}

Verdict verify_plan(const SwapPlan& plan, const SimSummary& summary,
                    Bytes budget, double tolerance) {
  Verdict v;
  if (summary.oom) {
    v.pass = false;
    v.detail = "simulation deadlocked: " + summary.oom_detail;
    return v;
  }
  v.memory_ok = summary.peak_mem <= budget;
  v.stall_fraction =
      summary.iter_time > 0
          ? to_seconds(summary.total_stall) / to_seconds(summary.iter_time)
          : 0.0;
  for (size_t j = 0;
       j < std::min(plan.t_ready.size(), summary.data_ready.size()); ++j) {
    const TimeNs d = summary.data_ready[j] - plan.t_ready[j];
    v.max_ready_deviation = std::max<TimeNs>(v.max_ready_deviation,
                                             d < 0 ? -d : d);
  }
  v.pass = v.memory_ok && v.stall_fraction <= tolerance;
  std::ostringstream os;
  os << "stall_fraction=" << v.stall_fraction
     << " peak_mem=" << summary.peak_mem << " budget=" << budget;
  v.detail = os.str();
  return v;
}

namespace {

std::string format_time_s(TimeNs t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9f", to_seconds(t));
  return buf;
}

}  // namespace

std::string trace_to_csv(const std::vector<SimEvent>& events) {
  std::ostringstream os;
  os << "time_s,stream,kind,subject,mem_used_bytes\n";
  for (const SimEvent& e : events)
    os << format_time_s(e.time) << ',' << stream_name(e.stream) << ','
       << event_kind_name(e.kind) << ',' << e.subject << ','
       << e.mem_used_after << '\n';
  return os.str();
}

std::string summary_to_json(const SimSummary& summary) {
  json j;
  j["format_version"] = 1;
  j["oom"] = summary.oom;
  if (summary.oom) {
    j["oom_detail"] = summary.oom_detail;
  } else {
    j["iter_time_s"] = to_seconds(summary.iter_time);
    j["total_stall_s"] = to_seconds(summary.total_stall);
    json st = json::array();
    for (TimeNs s : summary.per_phase_stall) st.push_back(to_seconds(s));
    j["per_phase_stall_s"] = std::move(st);
  }
  j["peak_mem_bytes"] = summary.peak_mem;
  return j.dump(2) + "\n";
}

std::string mem_curves_csv(const std::vector<SimEvent>& events,
                           Bytes fixed_overhead) {
  std::ostringstream os;
  os << "time_s,cum_allocated_bytes,cum_freed_bytes,mem_used_bytes\n";
  Bytes cum_alloc = fixed_overhead, cum_free = 0;
  os << format_time_s(0) << ',' << cum_alloc << ',' << cum_free << ','
     << fixed_overhead << '\n';
  Bytes prev_used = fixed_overhead;
  for (const SimEvent& e : events) {
    if (e.mem_used_after == prev_used) continue;
    if (e.mem_used_after > prev_used)
      cum_alloc += e.mem_used_after - prev_used;
    else
      cum_free += prev_used - e.mem_used_after;
    prev_used = e.mem_used_after;
    os << format_time_s(e.time) << ',' << cum_alloc << ',' << cum_free << ','
       << e.mem_used_after << '\n';
  }
  return os.str();
}

std::string stall_bars_csv(const SimSummary& summary) {
  std::ostringstream os;
  os << "phase,stall_s\n";
  for (size_t j = 0; j < summary.per_phase_stall.size(); ++j)
    os << (j + 1) << ',' << format_time_s(summary.per_phase_stall[j]) << '\n';
  return os.str();
}

}  // namespace swapsched
