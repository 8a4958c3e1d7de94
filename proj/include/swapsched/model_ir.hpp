#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "swapsched/types.hpp"

namespace swapsched {

enum class LayerType { conv, bn, activation, pooling, fc, other };

std::string layer_type_name(LayerType t);
std::optional<LayerType> layer_type_from(const std::string& name);

struct LayerDecl {
  int index = 0;  // 1..N
  LayerType layer_type = LayerType::other;
  std::string type_tag;  // required when layer_type == other
  Flops flops_fwd_base = 0;
  std::optional<Flops> flops_bwd_base;
  Bytes featuremap_bytes_base = 0;  // scales with minibatch
  Bytes param_bytes = 0;            // minibatch-independent
  Bytes grad_bytes = 0;             // minibatch-independent
  Bytes workspace_bytes_base = 0;   // scales with minibatch

  // curve-lookup key: enum name, or the tag for custom layer types
  std::string type_key() const;
};

struct NetworkSpec {
  std::string name;
  int num_layers = 0;
  int k_base = 1;
  double backward_flops_factor = 2.0;
  std::vector<LayerDecl> layers;

  const LayerDecl& layer(int index) const { return layers.at(index - 1); }
  Bytes param_grad_bytes_total() const;
};

enum class Direction { forward, backward };

// One of the 2N propagation phases of an unfolded network.
struct PhaseLayer {
  int phase_index = 0;   // 1..2N
  int source_layer = 0;  // 1..N
  Direction direction = Direction::forward;
  Flops flops_base = 0;
  std::string type_key;
};

enum class ObjectKind { featuremap, workspace, param, grad };

using ObjectId = std::uint32_t;
using PinSet = std::set<ObjectId>;

struct MemObject {
  ObjectId id = 0;
  std::string name;
  ObjectKind kind = ObjectKind::featuremap;
  Bytes size_base = 0;
  bool scales_with_minibatch = true;
  int producer_phase = 0;
  int last_use_phase = 0;
};

enum class MemOpKind { allocate, release, offload, prefetch };

std::string mem_op_kind_name(MemOpKind k);

struct MemOp {
  MemOpKind kind = MemOpKind::allocate;
  ObjectId object = 0;
  int phase = 0;
  std::uint32_t sequence_no = 0;
};

// Ordered memory-object access pattern for one training iteration.
// Structure is identical for every minibatch size; only op sizes scale.
struct Gmap {
  int num_phases = 0;  // 2N
  int k_base = 1;
  std::vector<MemObject> objects;
  std::vector<MemOp> ops;              // sorted by sequence_no
  std::vector<std::uint32_t> phase_begin;  // op-index offsets, size num_phases+1

  const MemObject& object(ObjectId id) const { return objects.at(id); }

  // ops belonging to phase j (1-based)
  std::pair<std::uint32_t, std::uint32_t> phase_range(int j) const {
    return {phase_begin.at(j - 1), phase_begin.at(j)};
  }

  Bytes op_bytes(const MemOp& op, int k) const;
  std::vector<ObjectId> featuremap_ids() const;

  // rebuilds phase_begin from ops; call after constructing by hand
  void index_phases();
};

struct HardwareSpec {
  Bytes memory_budget = 0;
  Bytes m_others = 0;          // pre-cached inputs and fixed overheads
  double delta_sync_s = 0.0;   // per-iteration sync cost, 0 for single device
  double pcie_nominal = 0.0;   // bytes/s fallback when no transfer samples
};

NetworkSpec parse_network_spec(const std::filesystem::path& path);
NetworkSpec parse_network_spec_json(const std::string& text,
                                    const std::string& origin);
HardwareSpec parse_hardware_spec(const std::filesystem::path& path);
HardwareSpec parse_hardware_spec_json(const std::string& text,
                                      const std::string& origin);

std::string network_spec_to_json(const NetworkSpec& net);
std::string hardware_spec_to_json(const HardwareSpec& hw);

void validate_network_spec(const NetworkSpec& net);

std::vector<PhaseLayer> unfold_network(const NetworkSpec& net);

Gmap build_gmap(const std::vector<PhaseLayer>& phases, const NetworkSpec& net);

// (k / k_base) * size_base, rounded up; ceil division keeps it exact.
Bytes scaled_bytes(Bytes size_base, int k, int k_base, bool scales);

// scaled and rounded up to the allocator alignment granule
Bytes scale_size(const MemObject& obj, int k, int k_base);

struct PeakResult {
  Bytes peak_bytes = 0;
  std::uint32_t op_begin = 0;  // first op index attaining the peak
  std::uint32_t op_end = 0;    // last op index before the sum drops below it
  std::vector<ObjectId> live_objects;  // resident when the peak is reached
};

// Running-sum traversal with layer-wise active-area semantics: a swapped
// featuremap stops occupying memory at its offload and re-occupies it at
// its prefetch. Pinned featuremaps are charged from allocate to release.
PeakResult peak_layerwise_memory(const Gmap& gmap, int k, const PinSet& pins);

// Same traversal but pinned objects are skipped entirely (they are
// accounted against the residual region, not the active area).
Bytes active_area_peak(const Gmap& gmap, int k, const PinSet& pins);

std::vector<std::string> validate_gmap(const Gmap& gmap);

}  // namespace swapsched
