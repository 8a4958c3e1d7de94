#include "swapsched/sweep.hpp"

#include <cstdio>
#include <sstream>

#include "swapsched/planner.hpp"

namespace swapsched {

namespace {

SweepRow evaluate_cell(const Gmap& gmap, const std::vector<PhaseLayer>& phases,
                       const NetworkSpec& net, const HardwareSpec& hw,
                       const PerfModel& model, const TrainingConfig& cfg, int k,
                       SimMode mode) {
  SweepRow row;
  row.k = k;
  row.mode = mode;

  const Bytes fixed = hw.m_others + net.param_grad_bytes_total();
  SimConfig sim_cfg;
  sim_cfg.budget = hw.memory_budget;
  sim_cfg.fixed_overhead = fixed;
  sim_cfg.mode = mode;
  sim_cfg.bandwidth = model.bandwidth_avail;

  PinSet pins;
  if (mode == SimMode::resident) {
    for (ObjectId id : gmap.featuremap_ids()) pins.insert(id);
  } else if (mode == SimMode::dynamic) {
    KEvaluation ev = evaluate_minibatch(gmap, phases, k, net, hw, model);
    if (!ev.memory_feasible) {
      row.note = "memory constraint violated";
      return row;
    }
    if (!ev.stall_free) {
      row.note = "stall constraint not satisfiable";
      return row;
    }
    pins = ev.pins;
  }

  SimResult sim = simulate_iteration(gmap, phases, k, pins, model, sim_cfg);
  if (sim.summary.oom) {
    row.note = "oom: " + sim.summary.oom_detail;
    return row;
  }
  row.feasible = true;
  row.iter_time = sim.summary.iter_time;
  row.peak_mem = sim.summary.peak_mem;
  row.stall = sim.summary.total_stall;
  TrainingConfig c = cfg;
  c.delta_sync_s = hw.delta_sync_s;
  if (c.dataset_size <= 0) c.dataset_size = k;
  const long long total = c.epochs * c.dataset_size;
  const long long iters = (total + k - 1) / k;
  row.whole_time_s = static_cast<double>(iters) *
                     (to_seconds(row.iter_time) + c.delta_sync_s);
  return row;
}

}  // namespace

std::vector<SweepRow> sweep_grid(const Gmap& gmap,
                                 const std::vector<PhaseLayer>& phases,
                                 const NetworkSpec& net, const HardwareSpec& hw,
                                 const PerfModel& model, const TrainingConfig& cfg,
                                 const std::vector<int>& k_list,
                                 const std::vector<SimMode>& modes,
                                 bool parallel) {
  if (k_list.empty()) throw std::invalid_argument("empty minibatch grid");
  if (modes.empty()) throw std::invalid_argument("no simulation modes given");

  const int cells = static_cast<int>(k_list.size() * modes.size());
  std::vector<SweepRow> rows(static_cast<size_t>(cells));

  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cells; ++i) {
      const int k = k_list[static_cast<size_t>(i) / modes.size()];
      const SimMode mode = modes[static_cast<size_t>(i) % modes.size()];
      rows[static_cast<size_t>(i)] =
          evaluate_cell(gmap, phases, net, hw, model, cfg, k, mode);
    }
  } else {
    for (int i = 0; i < cells; ++i) {
      const int k = k_list[static_cast<size_t>(i) / modes.size()];
      const SimMode mode = modes[static_cast<size_t>(i) % modes.size()];
      rows[static_cast<size_t>(i)] =
          evaluate_cell(gmap, phases, net, hw, model, cfg, k, mode);
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "k,mode,feasible,iter_time_s,whole_time_s,peak_mem_bytes,stall_s,note\n";
  char buf[64];
  for (const SweepRow& r : rows) {
    os << r.k << ',' << sim_mode_name(r.mode) << ','
       << (r.feasible ? "true" : "false") << ',';
    std::snprintf(buf, sizeof buf, "%.9f", to_seconds(r.iter_time));
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9f", r.whole_time_s);
    os << buf << ',' << r.peak_mem << ',';
    std::snprintf(buf, sizeof buf, "%.9f", to_seconds(r.stall));
    os << buf << ',' << r.note << '\n';
  }
  return os.str();
}

}  // namespace swapsched
