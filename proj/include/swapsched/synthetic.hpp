#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/profiles.hpp"

namespace swapsched {

// Deterministic generator state; same seed, same fixtures on every run.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next();
  // uniform in [lo, hi] inclusive
  std::int64_t range(std::int64_t lo, std::int64_t hi);
  double uniform(double lo, double hi);
};

struct SyntheticOptions {
  int min_layers = 4;
  int max_layers = 16;
  // per-layer compute time relative to the featuremap transfer time at
  // the nominal bandwidth; > 1 leaves overlap headroom
  double min_compute_transfer_ratio = 1.5;
  double max_compute_transfer_ratio = 5.0;
  double bandwidth_lo = 4e9;
  double bandwidth_hi = 16e9;
  // budget = fixed + peak(k=1) + frac * (footprint(k_ref) - peak(k=1))
  double budget_frac_lo = 0.25;
  double budget_frac_hi = 1.1;
};

struct SyntheticInstance {
  NetworkSpec network;
  HardwareSpec hardware;
  ProfileSet profiles;
  double true_bandwidth = 0.0;
};

NetworkSpec generate_network(Rng& rng, const SyntheticOptions& opts = {});

// Profiles drawn from smooth saturating per-type throughput curves at the
// recommended minibatch grid (1/8, 1/4, 1/2, 2/3, 1 of a reference k).
ProfileSet generate_profiles(const NetworkSpec& net, Rng& rng, int k_ref,
                             double bandwidth);

SyntheticInstance generate_instance(std::uint64_t seed,
                                    const SyntheticOptions& opts = {});

std::string compute_profile_csv(const std::vector<ComputeSample>& samples);
std::string transfer_profile_csv(const std::vector<TransferSample>& samples);

}  // namespace swapsched
