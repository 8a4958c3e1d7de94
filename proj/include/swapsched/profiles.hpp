#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/types.hpp"

namespace swapsched {

struct ComputeSample {
  int minibatch = 0;
  int phase = 0;
  std::string layer_type;
  Flops flops = 0;
  double time_s = 0.0;
};

struct TransferSample {
  int minibatch = 0;
  std::uint32_t seq_no = 0;
  Bytes bytes = 0;
  double time_s = 0.0;
};

struct ProfileSet {
  std::vector<ComputeSample> compute_samples;
  std::vector<TransferSample> transfer_samples;
  std::set<int> sampled_minibatches;
  std::vector<std::string> diagnostics;  // rejected rows, one line each
};

struct ProfileLoadOptions {
  double min_sample_s = 1e-6;  // shorter samples are timer noise
};

// Loads compute- and transfer-profile CSVs; the file kind is sniffed from
// the header row. Rows with nonpositive time/bytes or sub-threshold
// durations are skipped with a diagnostic.
ProfileSet load_profiles(const std::vector<std::filesystem::path>& paths,
                         const ProfileLoadOptions& opts = {});

ProfileSet parse_profile_csv(const std::string& text, const std::string& origin,
                             const ProfileLoadOptions& opts = {});

// (k / k_base) * flops_base, computed in integer arithmetic and rounded
// to the nearest whole FLOP.
Flops scale_flops_count(Flops flops_base, int k, int k_base);

Flops scale_flops(const PhaseLayer& phase, int k, int k_base);

// Aggregate transfer rate: total bytes over total seconds. Falls back to
// `fallback` when no samples exist.
double effective_bandwidth(const std::vector<TransferSample>& samples,
                           double fallback);

}  // namespace swapsched
