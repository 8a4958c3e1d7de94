#include "swapsched/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

namespace swapsched {

using nlohmann::json;

double ThroughputCurve::rate_at(Flops flops) const {
  if (knots.empty()) throw std::logic_error("empty throughput curve");
  const double f = static_cast<double>(flops);
  double raw;
  if (flops <= knots.front().first) {
    raw = knots.front().second;  // clamp below the first sample
  } else if (flops >= knots.back().first) {
    raw = plateau;
  } else {
    size_t hi = 1;
    while (knots[hi].first < flops) ++hi;
    const auto& [x0, y0] = knots[hi - 1];
    const auto& [x1, y1] = knots[hi];
    const double t = (f - static_cast<double>(x0)) /
                     (static_cast<double>(x1) - static_cast<double>(x0));
    raw = y0 + t * (y1 - y0);
  }
  return raw * efficiency;
}

const ThroughputCurve& PerfModel::curve_for(const std::string& type_key) const {
  auto it = curves.find(type_key);
  if (it == curves.end())
    throw SpecError("no throughput curve for layer type '" + type_key + "'");
  return it->second;
}

ThroughputCurve fit_throughput_curve(const std::vector<ComputeSample>& samples,
                                     double eta) {
  if (eta <= 0.0 || eta > 1.0)
    throw std::invalid_argument("efficiency factor must be in (0, 1]");

  // pool duplicate FLOPs values up front: mean rate, summed weight
  std::map<Flops, std::pair<double, double>> grouped;  // flops -> (sum, w)
  std::string type_key;
  for (const auto& s : samples) {
    if (type_key.empty()) type_key = s.layer_type;
    if (!(s.time_s > 0.0) || s.flops == 0)
      throw SpecError("nonpositive sample for layer type '" + s.layer_type + "'");
    const double rate = static_cast<double>(s.flops) / s.time_s;
    auto& g = grouped[s.flops];
    g.first += rate;
    g.second += 1.0;
  }
  if (grouped.size() < 2)
    throw SpecError("need samples at >= 2 distinct FLOPs values for layer type '" +
                    type_key + "'");

  struct Block {
    double value;
    double weight;
    size_t count;  // knots pooled into this block
  };
  std::vector<Flops> xs;
  std::vector<Block> stack;
  for (const auto& [flops, g] : grouped) {
    xs.push_back(flops);
    Block b{g.first / g.second, g.second, 1};
    stack.push_back(b);
    // pool adjacent violators
    while (stack.size() >= 2 &&
           stack[stack.size() - 2].value > stack.back().value) {
      Block top = stack.back();
      stack.pop_back();
      Block& prev = stack.back();
      prev.value = (prev.value * prev.weight + top.value * top.weight) /
                   (prev.weight + top.weight);
      prev.weight += top.weight;
      prev.count += top.count;
    }
  }

  ThroughputCurve curve;
  curve.layer_type = type_key;
  curve.efficiency = eta;
  size_t xi = 0;
  for (const Block& b : stack)
    for (size_t c = 0; c < b.count; ++c)
      curve.knots.emplace_back(xs[xi++], b.value);
  curve.plateau = curve.knots.back().second;
  return curve;
}

PerfModel build_perf_model(const ProfileSet& profiles, int k_base, double eta,
                           double bandwidth_fallback) {
  PerfModel model;
  model.k_base = k_base;
  std::map<std::string, std::vector<ComputeSample>> by_type;
  for (const auto& s : profiles.compute_samples) by_type[s.layer_type].push_back(s);
  if (by_type.empty()) throw SpecError("no compute samples to fit");
  for (auto& [type, samples] : by_type)
    model.curves[type] = fit_throughput_curve(samples, eta);
  model.bandwidth_avail =
      effective_bandwidth(profiles.transfer_samples, bandwidth_fallback);
  if (model.bandwidth_avail <= 0.0)
    throw SpecError("effective bandwidth must be positive; no transfer samples "
                    "and no usable fallback");
  return model;
}

TimeNs layer_compute_time(const PhaseLayer& phase, int k, const PerfModel& model) {
  const Flops flops = scale_flops(phase, k, model.k_base);
  const ThroughputCurve& curve = model.curve_for(phase.type_key);
  return compute_duration(flops, curve.rate_at(flops));
}

std::vector<TimeNs> phase_compute_times(const std::vector<PhaseLayer>& phases,
                                        int k, const PerfModel& model) {
  std::vector<TimeNs> out;
  out.reserve(phases.size());
  for (const auto& p : phases) out.push_back(layer_compute_time(p, k, model));
  return out;
}

TimeNs iteration_time(const std::vector<PhaseLayer>& phases, int k,
                      const PerfModel& model) {
  TimeNs total = 0;
  for (const auto& p : phases) total += layer_compute_time(p, k, model);
  return total;
}

double whole_training_time_s(const std::vector<PhaseLayer>& phases, int k,
                             const PerfModel& model, const TrainingConfig& cfg) {
  if (k <= 0) throw std::invalid_argument("minibatch must be positive");
  if (cfg.dataset_size > 0 && k > cfg.dataset_size)
    throw std::invalid_argument("minibatch exceeds dataset size");
  const long long total_samples = cfg.epochs * cfg.dataset_size;
  const long long iterations = (total_samples + k - 1) / k;  // final partial one
  const double per_iter =
      to_seconds(iteration_time(phases, k, model)) + cfg.delta_sync_s;
  return static_cast<double>(iterations) * per_iter;
}

TimeNs transfer_time(const Gmap& gmap, const MemOp& op, int k,
                     const PerfModel& model, const PinSet& pins) {
  if (op.kind != MemOpKind::offload && op.kind != MemOpKind::prefetch)
    throw std::invalid_argument("transfer_time requires an offload or prefetch op");
  if (pins.count(op.object)) return 0;
  return transfer_duration(gmap.op_bytes(op, k), model.bandwidth_avail);
}

std::string perf_model_to_json(const PerfModel& model) {
  json j;
  j["format_version"] = 1;
  j["k_base"] = model.k_base;
  j["bandwidth_avail_bytes_per_s"] = model.bandwidth_avail;
  json curves = json::object();
  for (const auto& [type, curve] : model.curves) {
    json cj;
    cj["efficiency"] = curve.efficiency;
    cj["plateau"] = curve.plateau;
    json knots = json::array();
    for (const auto& [flops, rate] : curve.knots)
      knots.push_back(json::array({flops, rate}));
    cj["knots"] = std::move(knots);
    curves[type] = std::move(cj);
  }
  j["curves"] = std::move(curves);
  return j.dump(2) + "\n";
}

PerfModel perf_model_from_json(const std::string& text,
                               const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(origin + ": malformed JSON: " + e.what());
  }
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw SpecError(origin + ": missing or unsupported format_version");
  PerfModel model;
  model.k_base = j.at("k_base").get<int>();
  model.bandwidth_avail = j.at("bandwidth_avail_bytes_per_s").get<double>();
  for (const auto& [type, cj] : j.at("curves").items()) {
    ThroughputCurve curve;
    curve.layer_type = type;
    curve.efficiency = cj.at("efficiency").get<double>();
    curve.plateau = cj.at("plateau").get<double>();
    for (const auto& kn : cj.at("knots"))
      curve.knots.emplace_back(kn.at(0).get<Flops>(), kn.at(1).get<double>());
    if (curve.knots.empty()) throw SpecError(origin + ": curve without knots");
    model.curves[type] = std::move(curve);
  }
  if (model.curves.empty()) throw SpecError(origin + ": model without curves");
  return model;
}

}  // namespace swapsched
