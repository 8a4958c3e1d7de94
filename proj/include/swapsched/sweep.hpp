#pragma once

#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/perf_model.hpp"
#include "swapsched/simulator.hpp"

namespace swapsched {

struct SweepRow {
  int k = 0;
  SimMode mode = SimMode::naive;
  bool feasible = false;
  TimeNs iter_time = 0;
  double whole_time_s = 0.0;
  Bytes peak_mem = 0;
  TimeNs stall = 0;
  std::string note;  // why a cell is infeasible
};

// Evaluates every (k, mode) cell by planning (dynamic) or direct
// simulation (naive/resident). Cells are independent; with parallel=true
// they run under OpenMP and the row order is still canonical.
std::vector<SweepRow> sweep_grid(const Gmap& gmap,
                                 const std::vector<PhaseLayer>& phases,
                                 const NetworkSpec& net, const HardwareSpec& hw,
                                 const PerfModel& model, const TrainingConfig& cfg,
                                 const std::vector<int>& k_list,
                                 const std::vector<SimMode>& modes,
                                 bool parallel);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace swapsched
