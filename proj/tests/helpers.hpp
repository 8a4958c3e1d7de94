#pragma once

#include <string>
#include <vector>

#include "swapsched/model_ir.hpp"
#include "swapsched/perf_model.hpp"

namespace swapsched::testing {

// n layers, 1 MiB featuremaps, 256 KiB workspaces, 1 GFLOP forward
inline NetworkSpec tiny_network(int n, int k_base = 4) {
  NetworkSpec net;
  net.name = "tiny";
  net.num_layers = n;
  net.k_base = k_base;
  for (int i = 1; i <= n; ++i) {
    LayerDecl l;
    l.index = i;
    l.layer_type = (i % 2) ? LayerType::conv : LayerType::bn;
    l.flops_fwd_base = 1'000'000'000ull;
    l.flops_bwd_base = 2'000'000'000ull;
    l.featuremap_bytes_base = 1u << 20;
    l.workspace_bytes_base = 256u << 10;
    l.param_bytes = 128u << 10;
    l.grad_bytes = 128u << 10;
    net.layers.push_back(l);
  }
  return net;
}

// flat throughput: every type runs at `rate` flops/s regardless of size
inline PerfModel flat_model(double rate, double bandwidth, int k_base,
                            double eta = 1.0) {
  PerfModel m;
  m.k_base = k_base;
  m.bandwidth_avail = bandwidth;
  for (const char* type : {"conv", "bn", "activation", "pooling", "fc"}) {
    ThroughputCurve c;
    c.layer_type = type;
    c.knots = {{1, rate}};
    c.plateau = rate;
    c.efficiency = eta;
    m.curves[type] = c;
  }
  return m;
}

// bare gmap for hand-built op sequences; objects sized directly in bytes
struct GmapBuilder {
  Gmap g;

  explicit GmapBuilder(int num_phases, int k_base = 1) {
    g.num_phases = num_phases;
    g.k_base = k_base;
  }

  ObjectId object(const std::string& name, Bytes size,
                  ObjectKind kind = ObjectKind::featuremap, bool scales = false,
                  int producer = 1, int last_use = 1) {
    MemObject o;
    o.id = static_cast<ObjectId>(g.objects.size());
    o.name = name;
    o.kind = kind;
    o.size_base = size;
    o.scales_with_minibatch = scales;
    o.producer_phase = producer;
    o.last_use_phase = last_use;
    g.objects.push_back(o);
    return o.id;
  }

  GmapBuilder& op(MemOpKind kind, ObjectId obj, int phase) {
    g.ops.push_back(
        MemOp{kind, obj, phase, static_cast<std::uint32_t>(g.ops.size())});
    return *this;
  }

  Gmap build() {
    g.index_phases();
    return g;
  }
};

}  // namespace swapsched::testing
