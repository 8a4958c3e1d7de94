#include "swapsched/model_ir.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace swapsched {

using nlohmann::json;

std::string layer_type_name(LayerType t) {
  switch (t) {
    case LayerType::conv: return "conv";
    case LayerType::bn: return "bn";
    case LayerType::activation: return "activation";
    case LayerType::pooling: return "pooling";
    case LayerType::fc: return "fc";
    case LayerType::other: return "other";
  }
  return "other";
}

std::optional<LayerType> layer_type_from(const std::string& name) {
  if (name == "conv") return LayerType::conv;
  if (name == "bn") return LayerType::bn;
  if (name == "activation") return LayerType::activation;
  if (name == "pooling") return LayerType::pooling;
  if (name == "fc") return LayerType::fc;
  if (name == "other") return LayerType::other;
  return std::nullopt;
}

std::string mem_op_kind_name(MemOpKind k) {
  switch (k) {
    case MemOpKind::allocate: return "allocate";
    case MemOpKind::release: return "release";
    case MemOpKind::offload: return "offload";
    case MemOpKind::prefetch: return "prefetch";
  }
  return "allocate";
}

std::string LayerDecl::type_key() const {
  if (layer_type == LayerType::other) return type_tag;
  return layer_type_name(layer_type);
}

Bytes NetworkSpec::param_grad_bytes_total() const {
  Bytes total = 0;
  for (const auto& l : layers) total += l.param_bytes + l.grad_bytes;
  return total;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Bytes get_bytes(const json& j, const char* key, const std::string& origin) {
  if (!j.contains(key))
    throw SpecError(origin + ": missing field '" + std::string(key) + "'");
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw SpecError(origin + ": field '" + std::string(key) +
                    "' must be an integer byte count");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0)
    throw SpecError(origin + ": field '" + std::string(key) + "' is negative");
  return v.get<Bytes>();
}

void check_format_version(const json& j, const std::string& origin) {
  if (!j.contains("format_version"))
    throw SpecError(origin + ": missing format_version");
  if (j.at("format_version").get<int>() != 1)
    throw SpecError(origin + ": unsupported format_version");
}

}  // namespace

NetworkSpec parse_network_spec_json(const std::string& text,
                                    const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(origin + ": malformed JSON: " + e.what());
  }
  check_format_version(j, origin);

  NetworkSpec net;
  net.name = j.value("name", std::string("unnamed"));
  if (!j.contains("k_base")) throw SpecError(origin + ": missing k_base");
  net.k_base = j.at("k_base").get<int>();
  net.backward_flops_factor = j.value("backward_flops_factor", 2.0);
  if (!j.contains("layers") || !j.at("layers").is_array())
    throw SpecError(origin + ": missing layers array");

  for (const auto& lj : j.at("layers")) {
    LayerDecl l;
    if (!lj.contains("index")) throw SpecError(origin + ": layer without index");
    l.index = lj.at("index").get<int>();
    const std::string where = origin + ": layer " + std::to_string(l.index);
    std::string type_str = lj.value("layer_type", std::string());
    auto lt = layer_type_from(type_str);
    if (!lt) throw SpecError(where + ": unknown layer_type '" + type_str + "'");
    l.layer_type = *lt;
    l.type_tag = lj.value("type_tag", std::string());
    if (l.layer_type == LayerType::other && l.type_tag.empty())
      throw SpecError(where + ": layer_type 'other' requires a type_tag");
    if (!lj.contains("flops_fwd_base"))
      throw SpecError(where + ": missing flops_fwd_base");
    l.flops_fwd_base = lj.at("flops_fwd_base").get<Flops>();
    if (lj.contains("flops_bwd_base"))
      l.flops_bwd_base = lj.at("flops_bwd_base").get<Flops>();
    l.featuremap_bytes_base = get_bytes(lj, "featuremap_bytes_base", where);
    l.param_bytes = get_bytes(lj, "param_bytes", where);
    l.grad_bytes = get_bytes(lj, "grad_bytes", where);
    l.workspace_bytes_base = get_bytes(lj, "workspace_bytes_base", where);
    net.layers.push_back(std::move(l));
  }
  net.num_layers = static_cast<int>(net.layers.size());
  if (j.contains("num_layers") &&
      j.at("num_layers").get<int>() != net.num_layers)
    throw SpecError(origin + ": num_layers does not match the layers array");

  validate_network_spec(net);

  // fill missing backward FLOPs from the configured factor
  for (auto& l : net.layers) {
    if (!l.flops_bwd_base) {
      l.flops_bwd_base = static_cast<Flops>(
          std::llround(net.backward_flops_factor *
                       static_cast<double>(l.flops_fwd_base)));
    }
  }
  return net;
}

NetworkSpec parse_network_spec(const std::filesystem::path& path) {
  return parse_network_spec_json(read_file(path), path.string());
}

void validate_network_spec(const NetworkSpec& net) {
  if (net.num_layers < 1) throw SpecError("network must have at least one layer");
  if (net.k_base < 1) throw SpecError("k_base must be positive");
  if (net.backward_flops_factor <= 0.0)
    throw SpecError("backward_flops_factor must be positive");
  std::vector<bool> seen(static_cast<size_t>(net.num_layers) + 1, false);
  for (const auto& l : net.layers) {
    if (l.index < 1 || l.index > net.num_layers)
      throw SpecError("layer index " + std::to_string(l.index) +
                      " outside [1, N]");
    if (seen[static_cast<size_t>(l.index)])
      throw SpecError("duplicate layer index " + std::to_string(l.index));
    seen[static_cast<size_t>(l.index)] = true;
    if (l.flops_fwd_base == 0)
      throw SpecError("layer " + std::to_string(l.index) +
                      ": forward FLOPs must be positive");
    if (l.flops_bwd_base && *l.flops_bwd_base == 0)
      throw SpecError("layer " + std::to_string(l.index) +
                      ": backward FLOPs must be positive when given");
  }
  for (int i = 1; i <= net.num_layers; ++i)
    if (!seen[static_cast<size_t>(i)])
      throw SpecError("missing layer index " + std::to_string(i));
  // layers must also be stored in index order
  for (int i = 0; i < net.num_layers; ++i)
    if (net.layers[static_cast<size_t>(i)].index != i + 1)
      throw SpecError("layers must be ordered by index");
}

HardwareSpec parse_hardware_spec_json(const std::string& text,
                                      const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(origin + ": malformed JSON: " + e.what());
  }
  check_format_version(j, origin);
  HardwareSpec hw;
  hw.memory_budget = get_bytes(j, "memory_budget_bytes", origin);
  hw.m_others = get_bytes(j, "m_others_bytes", origin);
  hw.delta_sync_s = j.value("delta_sync_s", 0.0);
  hw.pcie_nominal = j.value("pcie_nominal_bytes_per_s", 0.0);
  if (hw.delta_sync_s < 0.0) throw SpecError(origin + ": delta_sync_s negative");
  if (hw.pcie_nominal < 0.0)
    throw SpecError(origin + ": pcie_nominal_bytes_per_s negative");
  return hw;
}

HardwareSpec parse_hardware_spec(const std::filesystem::path& path) {
  return parse_hardware_spec_json(read_file(path), path.string());
}

std::string network_spec_to_json(const NetworkSpec& net) {
  json j;
  j["format_version"] = 1;
  j["name"] = net.name;
  j["num_layers"] = net.num_layers;
  j["k_base"] = net.k_base;
  j["backward_flops_factor"] = net.backward_flops_factor;
  json layers = json::array();
  for (const auto& l : net.layers) {
    json lj;
    lj["index"] = l.index;
    lj["layer_type"] = layer_type_name(l.layer_type);
    if (!l.type_tag.empty()) lj["type_tag"] = l.type_tag;
    lj["flops_fwd_base"] = l.flops_fwd_base;
    if (l.flops_bwd_base) lj["flops_bwd_base"] = *l.flops_bwd_base;
    lj["featuremap_bytes_base"] = l.featuremap_bytes_base;
    lj["param_bytes"] = l.param_bytes;
    lj["grad_bytes"] = l.grad_bytes;
    lj["workspace_bytes_base"] = l.workspace_bytes_base;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

std::string hardware_spec_to_json(const HardwareSpec& hw) {
  json j;
  j["format_version"] = 1;
  j["memory_budget_bytes"] = hw.memory_budget;
  j["m_others_bytes"] = hw.m_others;
  j["delta_sync_s"] = hw.delta_sync_s;
  j["pcie_nominal_bytes_per_s"] = hw.pcie_nominal;
  return j.dump(2) + "\n";
}

std::vector<PhaseLayer> unfold_network(const NetworkSpec& net) {
  validate_network_spec(net);
  const int n = net.num_layers;
  std::vector<PhaseLayer> phases;
  phases.reserve(static_cast<size_t>(2 * n));
  for (int j = 1; j <= 2 * n; ++j) {
    PhaseLayer p;
    p.phase_index = j;
    if (j <= n) {
      p.source_layer = j;
      p.direction = Direction::forward;
      p.flops_base = net.layer(j).flops_fwd_base;
    } else {
      p.source_layer = 2 * n + 1 - j;
      p.direction = Direction::backward;
      const auto& l = net.layer(p.source_layer);
      p.flops_base = l.flops_bwd_base
                         ? *l.flops_bwd_base
                         : static_cast<Flops>(std::llround(
                               net.backward_flops_factor *
                               static_cast<double>(l.flops_fwd_base)));
    }
    p.type_key = net.layer(p.source_layer).type_key();
    phases.push_back(std::move(p));
  }
  return phases;
}

void Gmap::index_phases() {
  phase_begin.assign(static_cast<size_t>(num_phases) + 1, 0);
  std::vector<std::uint32_t> count(static_cast<size_t>(num_phases) + 1, 0);
  for (const auto& op : ops) count.at(static_cast<size_t>(op.phase))++;
  std::uint32_t acc = 0;
  for (int j = 1; j <= num_phases; ++j) {
    phase_begin[static_cast<size_t>(j - 1)] = acc;
    acc += count[static_cast<size_t>(j)];
  }
  phase_begin[static_cast<size_t>(num_phases)] = acc;
}

Bytes Gmap::op_bytes(const MemOp& op, int k) const {
  return scale_size(object(op.object), k, k_base);
}

std::vector<ObjectId> Gmap::featuremap_ids() const {
  std::vector<ObjectId> ids;
  for (const auto& o : objects)
    if (o.kind == ObjectKind::featuremap) ids.push_back(o.id);
  return ids;
}

Gmap build_gmap(const std::vector<PhaseLayer>& phases, const NetworkSpec& net) {
  const int n = net.num_layers;
  if (static_cast<int>(phases.size()) != 2 * n)
    throw SpecError("phase list does not match the network");

  Gmap g;
  g.num_phases = 2 * n;
  g.k_base = net.k_base;

  // objects in creation order: per forward layer its workspace then its
  // featuremap, then one backward workspace per backward phase
  std::vector<ObjectId> ws_fwd(static_cast<size_t>(n) + 1);
  std::vector<ObjectId> fm(static_cast<size_t>(n) + 1);
  std::vector<ObjectId> ws_bwd(static_cast<size_t>(n) + 1);

  auto add_object = [&g](std::string name, ObjectKind kind, Bytes size,
                         int producer, int last_use) {
    MemObject o;
    o.id = static_cast<ObjectId>(g.objects.size());
    o.name = std::move(name);
    o.kind = kind;
    o.size_base = size;
    o.scales_with_minibatch =
        kind == ObjectKind::featuremap || kind == ObjectKind::workspace;
    o.producer_phase = producer;
    o.last_use_phase = last_use;
    g.objects.push_back(o);
    return o.id;
  };

  for (int l = 1; l <= n; ++l) {
    const auto& decl = net.layer(l);
    ws_fwd[static_cast<size_t>(l)] =
        add_object("ws_f" + std::to_string(l), ObjectKind::workspace,
                   decl.workspace_bytes_base, l, l);
    fm[static_cast<size_t>(l)] =
        add_object("fm" + std::to_string(l), ObjectKind::featuremap,
                   decl.featuremap_bytes_base, l, 2 * n + 1 - l);
  }
  for (int j = n + 1; j <= 2 * n; ++j) {
    const int l = 2 * n + 1 - j;
    ws_bwd[static_cast<size_t>(l)] =
        add_object("ws_b" + std::to_string(l), ObjectKind::workspace,
                   net.layer(l).workspace_bytes_base, j, j);
  }

  // Within a phase, ops are staged: prefetches, allocations, then after
  // the compute boundary offloads and releases; ties break on object id.
  std::uint32_t seq = 0;
  auto emit = [&g, &seq](MemOpKind kind, ObjectId obj, int phase) {
    g.ops.push_back(MemOp{kind, obj, phase, seq++});
  };

  for (int j = 1; j <= n; ++j) {
    emit(MemOpKind::allocate, ws_fwd[static_cast<size_t>(j)], j);
    emit(MemOpKind::allocate, fm[static_cast<size_t>(j)], j);
    emit(MemOpKind::offload, fm[static_cast<size_t>(j)], j);
    emit(MemOpKind::release, ws_fwd[static_cast<size_t>(j)], j);
  }
  for (int j = n + 1; j <= 2 * n; ++j) {
    const int l = 2 * n + 1 - j;
    emit(MemOpKind::prefetch, fm[static_cast<size_t>(l)], j);
    emit(MemOpKind::allocate, ws_bwd[static_cast<size_t>(l)], j);
    emit(MemOpKind::release, fm[static_cast<size_t>(l)], j);
    emit(MemOpKind::release, ws_bwd[static_cast<size_t>(l)], j);
  }

  g.index_phases();
  return g;
}

Bytes scaled_bytes(Bytes size_base, int k, int k_base, bool scales) {
  if (k <= 0) throw std::invalid_argument("minibatch must be positive");
  if (k_base <= 0) throw std::invalid_argument("k_base must be positive");
  if (!scales) return size_base;
  using u128 = unsigned __int128;
  u128 numer = static_cast<u128>(size_base) * static_cast<u128>(k);
  u128 denom = static_cast<u128>(k_base);
  return static_cast<Bytes>((numer + denom - 1) / denom);
}

Bytes scale_size(const MemObject& obj, int k, int k_base) {
  Bytes raw = scaled_bytes(obj.size_base, k, k_base, obj.scales_with_minibatch);
  if (raw == 0) return 0;
  return (raw + kAlignGranule - 1) / kAlignGranule * kAlignGranule;
}

namespace {

// Shared traversal core. skip_pinned drops pinned objects entirely;
// otherwise they are charged from allocate to release.
PeakResult traverse_peak(const Gmap& gmap, int k, const PinSet& pins,
                         bool skip_pinned) {
  PeakResult res;
  std::int64_t running = 0;
  std::int64_t peak = 0;
  std::set<ObjectId> live;
  std::vector<ObjectId> live_at_peak;
  std::uint32_t peak_begin = 0, peak_end = 0;
  bool at_peak_run = false;

  for (std::uint32_t i = 0; i < gmap.ops.size(); ++i) {
    const MemOp& op = gmap.ops[i];
    const MemObject& obj = gmap.object(op.object);
    const bool pinned = pins.count(op.object) > 0;
    if (pinned && skip_pinned) continue;
    std::int64_t delta = 0;
    const auto sz = static_cast<std::int64_t>(scale_size(obj, k, gmap.k_base));
    switch (op.kind) {
      case MemOpKind::allocate:
        delta = sz;
        live.insert(op.object);
        break;
      case MemOpKind::release:
        delta = -sz;
        live.erase(op.object);
        break;
      case MemOpKind::offload:
        // a swapped featuremap stops occupying device memory here
        if (!pinned) {
          delta = -sz;
          live.erase(op.object);
        }
        break;
      case MemOpKind::prefetch:
        if (!pinned) {
          delta = sz;
          live.insert(op.object);
        }
        break;
    }
    running += delta;
    if (running > peak) {
      peak = running;
      peak_begin = i;
      peak_end = i;
      live_at_peak.assign(live.begin(), live.end());
      at_peak_run = true;
    } else if (running == peak && at_peak_run) {
      peak_end = i;
    } else if (running < peak) {
      at_peak_run = false;
    }
  }

  res.peak_bytes = static_cast<Bytes>(peak < 0 ? 0 : peak);
  res.op_begin = peak_begin;
  res.op_end = peak_end;
  res.live_objects = std::move(live_at_peak);
  return res;
}

}  // namespace

PeakResult peak_layerwise_memory(const Gmap& gmap, int k, const PinSet& pins) {
  return traverse_peak(gmap, k, pins, /*skip_pinned=*/false);
}

Bytes active_area_peak(const Gmap& gmap, int k, const PinSet& pins) {
  return traverse_peak(gmap, k, pins, /*skip_pinned=*/true).peak_bytes;
}

std::vector<std::string> validate_gmap(const Gmap& gmap) {
  std::vector<std::string> diags;
  auto complain = [&diags](const std::string& msg) { diags.push_back(msg); };

  for (std::uint32_t i = 0; i < gmap.ops.size(); ++i) {
    const MemOp& op = gmap.ops[i];
    if (i + 1 < gmap.ops.size() &&
        gmap.ops[i + 1].sequence_no <= op.sequence_no)
      complain("ops not strictly ordered by sequence_no at index " +
               std::to_string(i));
    if (op.phase < 1 || op.phase > gmap.num_phases)
      complain("op seq " + std::to_string(op.sequence_no) +
               " has phase outside [1, 2N]");
    if (op.object >= gmap.objects.size())
      complain("op seq " + std::to_string(op.sequence_no) +
               " references unknown object");
  }
  if (!diags.empty()) return diags;

  struct PerObject {
    int allocs = 0, releases = 0, offloads = 0, prefetches = 0;
    std::uint32_t alloc_seq = 0, release_seq = 0, offload_seq = 0,
                  prefetch_seq = 0;
  };
  std::vector<PerObject> st(gmap.objects.size());

  for (const MemOp& op : gmap.ops) {
    PerObject& s = st[op.object];
    switch (op.kind) {
      case MemOpKind::allocate:
        s.allocs++;
        s.alloc_seq = op.sequence_no;
        break;
      case MemOpKind::release:
        s.releases++;
        s.release_seq = op.sequence_no;
        break;
      case MemOpKind::offload:
        s.offloads++;
        s.offload_seq = op.sequence_no;
        break;
      case MemOpKind::prefetch:
        s.prefetches++;
        s.prefetch_seq = op.sequence_no;
        break;
    }
  }

  for (const MemObject& obj : gmap.objects) {
    const PerObject& s = st[obj.id];
    const std::string who = "object " + obj.name;
    if (s.allocs != 1)
      complain(who + ": expected exactly one allocate, found " +
               std::to_string(s.allocs));
    if (s.releases != 1)
      complain(who + ": expected exactly one release, found " +
               std::to_string(s.releases));
    if (obj.kind != ObjectKind::featuremap && (s.offloads || s.prefetches))
      complain(who + ": offload/prefetch on a non-featuremap object");
    if (s.offloads > 1) complain(who + ": multiple offloads");
    if (s.prefetches > 1) complain(who + ": multiple prefetches");
    if (s.offloads != s.prefetches)
      complain(who + ": offload and prefetch must come in pairs");
    if (s.allocs == 1 && s.releases == 1 && s.release_seq < s.alloc_seq)
      complain(who + ": release (seq " + std::to_string(s.release_seq) +
               ") precedes allocate (seq " + std::to_string(s.alloc_seq) + ")");
    if (s.offloads == 1 && s.allocs == 1 && s.offload_seq < s.alloc_seq)
      complain(who + ": offload precedes allocate");
    if (s.prefetches == 1 && s.offloads == 1 &&
        s.prefetch_seq < s.offload_seq)
      complain(who + ": prefetch (seq " + std::to_string(s.prefetch_seq) +
               ") precedes offload (seq " + std::to_string(s.offload_seq) + ")");
    if (s.prefetches == 1 && s.releases == 1 &&
        s.release_seq < s.prefetch_seq)
      complain(who + ": release precedes prefetch");
    if (obj.producer_phase > obj.last_use_phase)
      complain(who + ": producer phase after last-use phase");
  }
  return diags;
}

}  // namespace swapsched
