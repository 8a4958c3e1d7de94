#pragma once

#include <map>
#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/profiles.hpp"
#include "swapsched/types.hpp"

namespace swapsched {

// Saturating throughput curve for one layer type: piecewise-linear in
// FLOPs between isotonic knots, clamped below the first knot and flat
// beyond the last.
struct ThroughputCurve {
  std::string layer_type;
  std::vector<std::pair<Flops, double>> knots;  // (flops, flops/s), raw fit
  double plateau = 0.0;                         // last knot's rate
  double efficiency = 1.0;                      // eta, applied on query

  // eta-adjusted rate at the given kernel size
  double rate_at(Flops flops) const;
};

struct TrainingConfig {
  long long epochs = 1;
  long long dataset_size = 0;
  double delta_sync_s = 0.0;
};

struct PerfModel {
  std::map<std::string, ThroughputCurve> curves;
  double bandwidth_avail = 0.0;  // bytes/s
  int k_base = 1;

  const ThroughputCurve& curve_for(const std::string& type_key) const;
};

// Pool-adjacent-violators isotonic regression over FLOPs-sorted rates.
// Requires at least two distinct FLOPs values.
ThroughputCurve fit_throughput_curve(const std::vector<ComputeSample>& samples,
                                     double eta);

// Fits one curve per layer type present in the profiles and derives the
// effective bandwidth from the transfer samples.
PerfModel build_perf_model(const ProfileSet& profiles, int k_base, double eta,
                           double bandwidth_fallback);

TimeNs layer_compute_time(const PhaseLayer& phase, int k, const PerfModel& model);

std::vector<TimeNs> phase_compute_times(const std::vector<PhaseLayer>& phases,
                                        int k, const PerfModel& model);

TimeNs iteration_time(const std::vector<PhaseLayer>& phases, int k,
                      const PerfModel& model);

double whole_training_time_s(const std::vector<PhaseLayer>& phases, int k,
                             const PerfModel& model, const TrainingConfig& cfg);

// Offload/prefetch duration for one op; zero when the object is pinned.
TimeNs transfer_time(const Gmap& gmap, const MemOp& op, int k,
                     const PerfModel& model, const PinSet& pins);

std::string perf_model_to_json(const PerfModel& model);
PerfModel perf_model_from_json(const std::string& text, const std::string& origin);

}  // namespace swapsched
