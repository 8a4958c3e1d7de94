#include "swapsched/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "swapsched/planner.hpp"

namespace swapsched {

std::uint64_t Rng::next() {
  // splitmix64; the output sequence is part of the fixture contract
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::int64_t Rng::range(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return lo;
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<std::int64_t>(next() % span);
}

double Rng::uniform(double lo, double hi) {
  const double u =
      static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

namespace {

struct TypeCurve {
  double plateau;     // flops/s
  double half_flops;  // rate(f) = plateau * f / (f + half_flops)

  double rate(double flops) const { return plateau * flops / (flops + half_flops); }
};

const char* kTypeCycle[] = {"conv", "bn", "activation", "conv", "pooling"};

Bytes aligned_random(Rng& rng, std::int64_t lo_units, std::int64_t hi_units) {
  return static_cast<Bytes>(rng.range(lo_units, hi_units)) * kAlignGranule;
}

}  // namespace

NetworkSpec generate_network(Rng& rng, const SyntheticOptions& opts) {
  NetworkSpec net;
  const int n = static_cast<int>(rng.range(opts.min_layers, opts.max_layers));
  net.name = "synthetic-" + std::to_string(n);
  net.num_layers = n;
  net.k_base = rng.range(0, 1) ? 8 : 4;
  net.backward_flops_factor = 2.0;

  // Nominal per-type saturation used only to size FLOPs against transfer
  // times; the profile generator draws its own curves.
  const double nominal_rate = rng.uniform(2e12, 6e12);
  const double nominal_bw = 0.5 * (opts.bandwidth_lo + opts.bandwidth_hi);

  for (int i = 1; i <= n; ++i) {
    LayerDecl l;
    l.index = i;
    const char* tname = (i == n) ? "fc" : kTypeCycle[(i - 1) % 5];
    l.layer_type = *layer_type_from(tname);
    l.featuremap_bytes_base = aligned_random(rng, 4096, 65536);   // 2..32 MiB
    l.workspace_bytes_base = aligned_random(rng, 1024, 8192);     // 0.5..4 MiB
    l.param_bytes = aligned_random(rng, 0, 4096);                 // up to 2 MiB
    l.grad_bytes = l.param_bytes;
    const double ratio = rng.uniform(opts.min_compute_transfer_ratio,
                                     opts.max_compute_transfer_ratio);
    const double flops = ratio *
                         static_cast<double>(l.featuremap_bytes_base) *
                         nominal_rate / nominal_bw;
    l.flops_fwd_base = static_cast<Flops>(std::llround(std::max(flops, 1e6)));
    l.flops_bwd_base = static_cast<Flops>(
        std::llround(rng.uniform(1.5, 2.5) *
                     static_cast<double>(l.flops_fwd_base)));
    net.layers.push_back(std::move(l));
  }
  return net;
}

ProfileSet generate_profiles(const NetworkSpec& net, Rng& rng, int k_ref,
                             double bandwidth) {
  ProfileSet set;
  const auto phases = unfold_network(net);
  const Gmap gmap = build_gmap(phases, net);

  std::map<std::string, TypeCurve> curves;
  for (const auto& p : phases) {
    if (curves.count(p.type_key)) continue;
    TypeCurve c;
    c.plateau = rng.uniform(2e12, 8e12);
    c.half_flops = rng.uniform(0.5, 3.0) * static_cast<double>(p.flops_base);
    curves[p.type_key] = c;
  }

  // the recommended sampling grid relative to the reference minibatch
  const double fractions[] = {1.0 / 8, 1.0 / 4, 1.0 / 2, 2.0 / 3, 1.0};
  std::vector<int> grid;
  for (double f : fractions) {
    int k = std::max(1, static_cast<int>(std::llround(f * k_ref)));
    if (std::find(grid.begin(), grid.end(), k) == grid.end()) grid.push_back(k);
  }

  for (int k : grid) {
    for (const auto& p : phases) {
      ComputeSample s;
      s.minibatch = k;
      s.phase = p.phase_index;
      s.layer_type = p.type_key;
      s.flops = scale_flops(p, k, net.k_base);
      s.time_s = static_cast<double>(s.flops) /
                 curves[p.type_key].rate(static_cast<double>(s.flops));
      set.compute_samples.push_back(std::move(s));
    }
    for (const MemOp& op : gmap.ops) {
      if (op.kind != MemOpKind::offload) continue;
      TransferSample s;
      s.minibatch = k;
      s.seq_no = op.sequence_no;
      s.bytes = gmap.op_bytes(op, k);
      s.time_s = static_cast<double>(s.bytes) / bandwidth;
      set.transfer_samples.push_back(std::move(s));
    }
    set.sampled_minibatches.insert(k);
  }
  return set;
}

SyntheticInstance generate_instance(std::uint64_t seed,
                                    const SyntheticOptions& opts) {
  Rng rng(seed);
  SyntheticInstance inst;
  inst.network = generate_network(rng, opts);
  inst.true_bandwidth = rng.uniform(opts.bandwidth_lo, opts.bandwidth_hi);

  const auto phases = unfold_network(inst.network);
  const Gmap gmap = build_gmap(phases, inst.network);

  inst.hardware.m_others = aligned_random(rng, 8192, 65536);  // 4..32 MiB
  inst.hardware.delta_sync_s = 0.0;
  inst.hardware.pcie_nominal = inst.true_bandwidth;

  const Bytes fixed =
      inst.hardware.m_others + inst.network.param_grad_bytes_total();
  const Bytes peak_one = peak_layerwise_memory(gmap, 1, {}).peak_bytes;
  PinSet all_pinned;
  for (ObjectId id : gmap.featuremap_ids()) all_pinned.insert(id);
  const int k_ref0 = 8 * inst.network.k_base;
  const Bytes footprint =
      peak_layerwise_memory(gmap, k_ref0, all_pinned).peak_bytes;

  const double frac = rng.uniform(opts.budget_frac_lo, opts.budget_frac_hi);
  inst.hardware.memory_budget =
      fixed + peak_one +
      static_cast<Bytes>(frac * static_cast<double>(footprint - peak_one));

  KmaxResult kmax = max_trainable_minibatch(gmap, inst.network, inst.hardware);
  const int k_ref = kmax.trainable ? std::max(2, kmax.k_max) : 2;
  inst.profiles =
      generate_profiles(inst.network, rng, k_ref, inst.true_bandwidth);
  return inst;
}

namespace {

std::string format_sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string compute_profile_csv(const std::vector<ComputeSample>& samples) {
  std::ostringstream os;
  os << "minibatch,phase,layer_type,flops,time_s\n";
  for (const auto& s : samples)
    os << s.minibatch << ',' << s.phase << ',' << s.layer_type << ','
       << s.flops << ',' << format_sci(s.time_s) << '\n';
  return os.str();
}

std::string transfer_profile_csv(const std::vector<TransferSample>& samples) {
  std::ostringstream os;
  os << "minibatch,seq_no,bytes,time_s\n";
  for (const auto& s : samples)
    os << s.minibatch << ',' << s.seq_no << ',' << s.bytes << ','
       << format_sci(s.time_s) << '\n';
  return os.str();
}

}  // namespace swapsched
