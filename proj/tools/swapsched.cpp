// Command-line front end: validate specs, fit performance models, plan
// swap schedules, simulate iterations, tune learning rates, sweep grids.
//
// Exit codes: 0 success, 1 validation or infeasibility, 2 I/O failure,
// 3 internal invariant breach.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "swapsched/lr_tuner.hpp"
#include "swapsched/model_ir.hpp"
#include "swapsched/perf_model.hpp"
#include "swapsched/planner.hpp"
#include "swapsched/profiles.hpp"
#include "swapsched/simulator.hpp"
#include "swapsched/sweep.hpp"
#include "swapsched/synthetic.hpp"
#include "swapsched/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace swapsched;

namespace {

enum LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("SWAPSCHED_LOG");
    if (!env) return kWarn;
    const std::string v = env;
    if (v == "debug") return kDebug;
    if (v == "info") return kInfo;
    if (v == "error") return kError;
    return kWarn;
  }();
  return level;
}

void log_line(LogLevel lvl, const std::string& msg) {
  if (lvl < log_level()) return;
  const char* tag[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", tag[lvl], msg.c_str());
}

struct RunManifest {
  std::string subcommand;
  std::vector<fs::path> inputs;
  std::vector<std::pair<std::string, std::string>> params;

  void param(const std::string& key, const std::string& value) {
    params.emplace_back(key, value);
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// FNV-1a over input file contents plus the canonical parameter string
std::string manifest_digest(const RunManifest& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  mix(m.subcommand);
  for (const auto& p : m.inputs) mix(read_file(p));
  for (const auto& [k, v] : m.params) mix(k + "=" + v + ";");
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ensure_inputs_exist(const RunManifest& m) {
  for (const auto& p : m.inputs)
    if (!fs::exists(p)) throw IoError("input file missing: " + p.string());
}

void forbid_overwriting_inputs(const RunManifest& m,
                               const std::vector<fs::path>& outputs) {
  for (const auto& out : outputs)
    for (const auto& in : m.inputs)
      if (fs::weakly_canonical(out) == fs::weakly_canonical(in))
        throw SpecError("output would overwrite input " + in.string());
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

// re-serializes a JSON document with the run digest attached
std::string with_digest(const std::string& doc, const std::string& digest) {
  json j = json::parse(doc);
  j["manifest_digest"] = digest;
  return j.dump(2) + "\n";
}

struct LoadedModel {
  NetworkSpec network;
  std::vector<PhaseLayer> phases;
  Gmap gmap;
  HardwareSpec hardware;
  PerfModel model;
};

PerfModel fit_model(const NetworkSpec& net,
                    const std::vector<fs::path>& profile_paths, double eta,
                    double fallback_bw) {
  ProfileSet profiles = load_profiles(profile_paths);
  for (const auto& d : profiles.diagnostics) log_line(kWarn, d);
  // every layer type in the network needs a fitted curve
  PerfModel model = build_perf_model(profiles, net.k_base, eta, fallback_bw);
  for (const auto& phase : unfold_network(net)) model.curve_for(phase.type_key);
  return model;
}

SimMode parse_mode(const std::string& name) {
  if (name == "naive") return SimMode::naive;
  if (name == "dynamic") return SimMode::dynamic;
  if (name == "resident") return SimMode::resident;
  throw SpecError("unknown mode '" + name + "'");
}

PinSet pins_from_names(const Gmap& gmap, const std::vector<std::string>& names) {
  PinSet pins;
  for (const auto& name : names) {
    bool found = false;
    for (const auto& o : gmap.objects) {
      if (o.name == name) {
        pins.insert(o.id);
        found = true;
        break;
      }
    }
    if (!found) throw SpecError("plan pins unknown object '" + name + "'");
  }
  return pins;
}

void write_sim_outputs(const fs::path& out_dir, const SimResult& sim,
                       Bytes fixed_overhead, const std::string& digest) {
  write_file(out_dir / "trace.csv", trace_to_csv(sim.events));
  write_file(out_dir / "summary.json",
             with_digest(summary_to_json(sim.summary), digest));
  write_file(out_dir / "mem_curves.csv",
             mem_curves_csv(sim.events, fixed_overhead));
  write_file(out_dir / "stall_bars.csv", stall_bars_csv(sim.summary));
}

int run_validate(const fs::path& network_path,
                 const std::optional<fs::path>& hardware_path) {
  RunManifest m;
  m.subcommand = "validate";
  m.inputs.push_back(network_path);
  if (hardware_path) m.inputs.push_back(*hardware_path);
  ensure_inputs_exist(m);

  NetworkSpec net = parse_network_spec(network_path);
  if (hardware_path) parse_hardware_spec(*hardware_path);
  Gmap gmap = build_gmap(unfold_network(net), net);
  auto diags = validate_gmap(gmap);
  for (const auto& d : diags) std::printf("diagnostic: %s\n", d.c_str());
  if (!diags.empty()) return 1;
  std::printf("ok: %s (%d layers, %zu memory ops)\n", net.name.c_str(),
              net.num_layers, gmap.ops.size());
  return 0;
}

int run_fit(const fs::path& network_path,
            const std::vector<fs::path>& profile_paths,
            const std::optional<fs::path>& hardware_path, double eta,
            const fs::path& out_path) {
  RunManifest m;
  m.subcommand = "fit";
  m.inputs.push_back(network_path);
  for (const auto& p : profile_paths) m.inputs.push_back(p);
  if (hardware_path) m.inputs.push_back(*hardware_path);
  m.param("eta", std::to_string(eta));
  ensure_inputs_exist(m);
  forbid_overwriting_inputs(m, {out_path});

  NetworkSpec net = parse_network_spec(network_path);
  double fallback = 0.0;
  if (hardware_path) fallback = parse_hardware_spec(*hardware_path).pcie_nominal;
  PerfModel model = fit_model(net, profile_paths, eta, fallback);

  const std::string digest = manifest_digest(m);
  write_file(out_path, with_digest(perf_model_to_json(model), digest));

  std::printf("bandwidth_avail: %.3e bytes/s\n", model.bandwidth_avail);
  for (const auto& [type, curve] : model.curves) {
    std::printf("curve %s: %zu knots, plateau %.3e flops/s\n", type.c_str(),
                curve.knots.size(), curve.plateau);
    for (const auto& [flops, rate] : curve.knots)
      std::printf("  %llu -> %.3e\n", static_cast<unsigned long long>(flops),
                  rate);
  }
  return 0;
}

LoadedModel load_for_planning(const fs::path& network_path,
                              const fs::path& hardware_path,
                              const fs::path& model_path,
                              std::optional<Bytes> budget_override) {
  LoadedModel lm;
  lm.network = parse_network_spec(network_path);
  lm.hardware = parse_hardware_spec(hardware_path);
  if (budget_override) lm.hardware.memory_budget = *budget_override;
  lm.model = perf_model_from_json(read_file(model_path), model_path.string());
  lm.phases = unfold_network(lm.network);
  lm.gmap = build_gmap(lm.phases, lm.network);
  return lm;
}

int run_plan(const fs::path& network_path, const fs::path& hardware_path,
             const fs::path& model_path, std::optional<Bytes> budget_override,
             int step, int k_override, long long epochs, long long dataset_size,
             const fs::path& out_path) {
  RunManifest m;
  m.subcommand = "plan";
  m.inputs = {network_path, hardware_path, model_path};
  m.param("step", std::to_string(step));
  m.param("k", std::to_string(k_override));
  m.param("epochs", std::to_string(epochs));
  m.param("dataset_size", std::to_string(dataset_size));
  if (budget_override) m.param("budget", std::to_string(*budget_override));
  ensure_inputs_exist(m);
  forbid_overwriting_inputs(m, {out_path});

  LoadedModel lm = load_for_planning(network_path, hardware_path, model_path,
                                     budget_override);
  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.dataset_size = dataset_size;
  cfg.delta_sync_s = lm.hardware.delta_sync_s;
  PlannerOptions opts;
  opts.step = step;
  opts.k_override = k_override;

  PlanResult res = find_efficiency_optimal_minibatch(
      lm.gmap, lm.phases, lm.network, lm.hardware, lm.model, cfg, opts);
  if (res.status == PlanStatus::untrainable) {
    std::printf("untrainable: %s\n", res.detail.c_str());
    return 1;
  }
  if (res.status == PlanStatus::infeasible) {
    std::printf("infeasible: %s\n", res.detail.c_str());
    return 1;
  }
  const SwapPlan& plan = *res.plan;
  auto compute = phase_compute_times(lm.phases, plan.k_star, lm.model);
  ConstraintReport report =
      build_constraint_report(lm.gmap, plan.k_star, lm.hardware.memory_budget,
                              plan.pin_set, plan.t_ready, compute);
  const std::string digest = manifest_digest(m);
  write_file(out_path,
             with_digest(swap_plan_to_json(plan, lm.gmap, report.slack), digest));

  const size_t fm_count = lm.gmap.featuremap_ids().size();
  std::printf("k_star: %d\n", plan.k_star);
  std::printf("pinned: %zu of %zu featuremaps (%.1f%%)\n", plan.pin_set.size(),
              fm_count,
              fm_count ? 100.0 * static_cast<double>(plan.pin_set.size()) /
                             static_cast<double>(fm_count)
                       : 0.0);
  for (ObjectId id : plan.pin_set) {
    const MemObject& obj = lm.gmap.object(id);
    std::printf("  pin %s: %llu bytes\n", obj.name.c_str(),
                static_cast<unsigned long long>(
                    scale_size(obj, plan.k_star, lm.gmap.k_base)));
  }
  std::printf("predicted_iter_time_s: %.6f\n",
              to_seconds(plan.predicted_iter_time));
  std::printf("predicted_whole_time_s: %.3f\n", plan.predicted_whole_time_s);
  return 0;
}

int run_simulate(const fs::path& network_path, const fs::path& hardware_path,
                 const fs::path& model_path,
                 const std::optional<fs::path>& plan_path,
                 const std::string& mode_name, int k_flag,
                 std::optional<Bytes> budget_override, const fs::path& out_dir,
                 double tolerance) {
  RunManifest m;
  m.subcommand = "simulate";
  m.inputs = {network_path, hardware_path, model_path};
  if (plan_path) m.inputs.push_back(*plan_path);
  m.param("mode", mode_name);
  m.param("k", std::to_string(k_flag));
  m.param("tolerance", std::to_string(tolerance));
  if (budget_override) m.param("budget", std::to_string(*budget_override));
  ensure_inputs_exist(m);
  forbid_overwriting_inputs(
      m, {out_dir / "trace.csv", out_dir / "summary.json",
          out_dir / "mem_curves.csv", out_dir / "stall_bars.csv"});

  LoadedModel lm = load_for_planning(network_path, hardware_path, model_path,
                                     budget_override);
  const SimMode mode = parse_mode(mode_name);

  int k = k_flag;
  PinSet pins;
  std::optional<SwapPlan> plan;
  if (mode == SimMode::dynamic) {
    if (!plan_path) throw SpecError("dynamic mode needs --plan");
    json pj;
    try {
      pj = json::parse(read_file(*plan_path));
    } catch (const json::exception& e) {
      throw SpecError(plan_path->string() + ": malformed plan: " + e.what());
    }
    SwapPlan p;
    p.k_star = pj.at("k_star").get<int>();
    std::vector<std::string> names =
        pj.at("pinned_objects").get<std::vector<std::string>>();
    pins = pins_from_names(lm.gmap, names);
    p.pin_set = pins;
    for (double t : pj.at("t_ready_s").get<std::vector<double>>())
      p.t_ready.push_back(from_seconds(t));
    p.predicted_iter_time =
        from_seconds(pj.at("predicted_iter_time_s").get<double>());
    plan = p;
    if (k <= 0) k = p.k_star;
  } else if (mode == SimMode::resident) {
    for (ObjectId id : lm.gmap.featuremap_ids()) pins.insert(id);
  }
  if (k <= 0) throw SpecError("--k is required outside dynamic mode");

  SimConfig cfg;
  cfg.budget = lm.hardware.memory_budget;
  cfg.fixed_overhead =
      lm.hardware.m_others + lm.network.param_grad_bytes_total();
  cfg.mode = mode;
  cfg.bandwidth = lm.model.bandwidth_avail;

  SimResult sim = simulate_iteration(lm.gmap, lm.phases, k, pins, lm.model, cfg);
  const std::string digest = manifest_digest(m);
  write_sim_outputs(out_dir, sim, cfg.fixed_overhead, digest);

  if (sim.summary.oom) {
    std::printf("oom: %s\n", sim.summary.oom_detail.c_str());
    return 1;
  }
  std::printf("iter_time_s: %.6f\n", to_seconds(sim.summary.iter_time));
  std::printf("total_stall_s: %.6f\n", to_seconds(sim.summary.total_stall));
  std::printf("peak_mem_bytes: %llu\n",
              static_cast<unsigned long long>(sim.summary.peak_mem));
  if (plan) {
    Verdict v = verify_plan(*plan, sim.summary, cfg.budget, tolerance);
    json vj;
    vj["format_version"] = 1;
    vj["pass"] = v.pass;
    vj["stall_fraction"] = v.stall_fraction;
    vj["memory_ok"] = v.memory_ok;
    vj["max_ready_deviation_s"] = to_seconds(v.max_ready_deviation);
    write_file(out_dir / "verify.json", with_digest(vj.dump(2), digest));
    std::printf("verify: %s (%s)\n", v.pass ? "pass" : "fail", v.detail.c_str());
    if (!v.pass) return 1;
  }
  return 0;
}

int run_sweep(const fs::path& network_path, const fs::path& hardware_path,
              const fs::path& model_path, const std::vector<int>& k_list,
              const std::string& modes_arg, bool parallel, long long epochs,
              long long dataset_size, const fs::path& out_path) {
  RunManifest m;
  m.subcommand = "sweep";
  m.inputs = {network_path, hardware_path, model_path};
  {
    std::string ks;
    for (int k : k_list) ks += std::to_string(k) + ",";
    m.param("k_list", ks);
  }
  m.param("modes", modes_arg);
  m.param("epochs", std::to_string(epochs));
  m.param("dataset_size", std::to_string(dataset_size));
  ensure_inputs_exist(m);
  forbid_overwriting_inputs(m, {out_path});

  LoadedModel lm =
      load_for_planning(network_path, hardware_path, model_path, std::nullopt);
  std::vector<SimMode> modes;
  std::stringstream ss(modes_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) modes.push_back(parse_mode(tok));

  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.dataset_size = dataset_size;
  cfg.delta_sync_s = lm.hardware.delta_sync_s;

  auto rows = sweep_grid(lm.gmap, lm.phases, lm.network, lm.hardware, lm.model,
                         cfg, k_list, modes, parallel);
  write_file(out_path, sweep_to_csv(rows));
  std::printf("%zu cells -> %s\n", rows.size(), out_path.string().c_str());
  return 0;
}

int run_tune_lr(double alpha_base, double convexity, double mu, double q,
                long long iters_base) {
  LrConfig cfg;
  cfg.alpha_base = alpha_base;
  cfg.convexity = convexity;
  cfg.mu = mu;
  cfg.q = q;
  cfg.iters_base = iters_base;
  const double alpha_star = adapted_learning_rate(cfg);
  const double residual = contraction_residual(cfg, alpha_star);
  const long long iters =
      static_cast<long long>(std::ceil(static_cast<double>(iters_base) / q));
  std::printf("alpha_star: %.10g\n", alpha_star);
  std::printf("contraction_residual: %.6e\n", residual);
  std::printf("adjusted_iterations: %lld\n", iters);
  return 0;
}

int run_gen(std::uint64_t seed, int min_layers, int max_layers,
            const fs::path& out_dir) {
  SyntheticOptions opts;
  if (min_layers > 0) opts.min_layers = min_layers;
  if (max_layers > 0) opts.max_layers = std::max(max_layers, opts.min_layers);
  SyntheticInstance inst = generate_instance(seed, opts);
  write_file(out_dir / "network.json", network_spec_to_json(inst.network));
  write_file(out_dir / "hardware.json", hardware_spec_to_json(inst.hardware));
  write_file(out_dir / "compute_profile.csv",
             compute_profile_csv(inst.profiles.compute_samples));
  write_file(out_dir / "transfer_profile.csv",
             transfer_profile_csv(inst.profiles.transfer_samples));
  std::printf("wrote fixture (%d layers, k_base %d) to %s\n",
              inst.network.num_layers, inst.network.k_base,
              out_dir.string().c_str());
  return 0;
}

int run_pipeline(const fs::path& network_path, const fs::path& hardware_path,
                 const std::vector<fs::path>& profile_paths, double eta,
                 double tolerance, const fs::path& out_dir) {
  RunManifest m;
  m.subcommand = "pipeline";
  m.inputs = {network_path, hardware_path};
  for (const auto& p : profile_paths) m.inputs.push_back(p);
  m.param("eta", std::to_string(eta));
  m.param("tolerance", std::to_string(tolerance));
  ensure_inputs_exist(m);
  forbid_overwriting_inputs(
      m, {out_dir / "model.json", out_dir / "plan.json", out_dir / "trace.csv",
          out_dir / "summary.json", out_dir / "mem_curves.csv",
          out_dir / "stall_bars.csv", out_dir / "verify.json"});
  const std::string digest = manifest_digest(m);

  NetworkSpec net = parse_network_spec(network_path);
  HardwareSpec hw = parse_hardware_spec(hardware_path);
  auto phases = unfold_network(net);
  Gmap gmap = build_gmap(phases, net);
  auto diags = validate_gmap(gmap);
  for (const auto& d : diags) std::printf("diagnostic: %s\n", d.c_str());
  if (!diags.empty()) return 1;
  std::printf("validate: ok\n");

  PerfModel model = fit_model(net, profile_paths, eta, hw.pcie_nominal);
  write_file(out_dir / "model.json",
             with_digest(perf_model_to_json(model), digest));
  std::printf("fit: %zu curves, bandwidth %.3e B/s\n", model.curves.size(),
              model.bandwidth_avail);

  TrainingConfig cfg;
  cfg.delta_sync_s = hw.delta_sync_s;
  PlanResult res =
      find_efficiency_optimal_minibatch(gmap, phases, net, hw, model, cfg);
  if (res.status != PlanStatus::ok) {
    std::printf("plan: %s (%s)\n",
                res.status == PlanStatus::untrainable ? "untrainable"
                                                      : "infeasible",
                res.detail.c_str());
    return 1;
  }
  const SwapPlan& plan = *res.plan;
  auto compute = phase_compute_times(phases, plan.k_star, model);
  ConstraintReport report =
      build_constraint_report(gmap, plan.k_star, hw.memory_budget,
                              plan.pin_set, plan.t_ready, compute);
  write_file(out_dir / "plan.json",
             with_digest(swap_plan_to_json(plan, gmap, report.slack), digest));
  std::printf("plan: k_star %d, %zu pinned\n", plan.k_star, plan.pin_set.size());

  SimConfig sim_cfg;
  sim_cfg.budget = hw.memory_budget;
  sim_cfg.fixed_overhead = hw.m_others + net.param_grad_bytes_total();
  sim_cfg.mode = SimMode::dynamic;
  sim_cfg.bandwidth = model.bandwidth_avail;
  SimResult sim = simulate_iteration(gmap, phases, plan.k_star, plan.pin_set,
                                     model, sim_cfg);
  write_sim_outputs(out_dir, sim, sim_cfg.fixed_overhead, digest);
  if (sim.summary.oom) {
    std::printf("simulate: oom (%s)\n", sim.summary.oom_detail.c_str());
    return 1;
  }
  std::printf("simulate: iter %.6f s, stall %.6f s\n",
              to_seconds(sim.summary.iter_time),
              to_seconds(sim.summary.total_stall));

  Verdict v = verify_plan(plan, sim.summary, sim_cfg.budget, tolerance);
  json vj;
  vj["format_version"] = 1;
  vj["pass"] = v.pass;
  vj["stall_fraction"] = v.stall_fraction;
  vj["memory_ok"] = v.memory_ok;
  vj["max_ready_deviation_s"] = to_seconds(v.max_ready_deviation);
  write_file(out_dir / "verify.json", with_digest(vj.dump(2), digest));
  std::printf("verify: %s (%s)\n", v.pass ? "pass" : "fail", v.detail.c_str());
  return v.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planner and discrete-event simulator for memory-swap "
               "schedules in DNN training"};
  app.require_subcommand(1);

  std::string network, hardware, model_path, plan_path, mode = "naive";
  std::string out = "out.json", out_dir = "out";
  std::string modes = "naive,dynamic,resident";
  std::vector<std::string> profiles;
  std::vector<int> k_list;
  double eta = 0.95, tolerance = 0.02;
  double alpha_base = 0.0, convexity = 0.0, mu = 1.0, q = 1.0;
  long long iters_base = 1000, epochs = 1, dataset_size = 0;
  int step = 1, k_flag = 0, min_layers = 0, max_layers = 0;
  std::uint64_t seed = 1;
  std::uint64_t budget_flag = 0;
  bool parallel = false;

  auto* validate = app.add_subcommand("validate", "check specs and the gmap");
  validate->add_option("--network", network)->required();
  validate->add_option("--hardware", hardware);

  auto* fit = app.add_subcommand("fit", "fit throughput curves and bandwidth");
  fit->add_option("--network", network)->required();
  fit->add_option("--profiles", profiles)->required()->expected(-1);
  fit->add_option("--hardware", hardware);
  fit->add_option("--eta", eta);
  fit->add_option("--out", out);

  auto* plan =
      app.add_subcommand("plan", "search the efficiency-optimal minibatch");
  plan->add_option("--network", network)->required();
  plan->add_option("--hardware", hardware)->required();
  plan->add_option("--model", model_path)->required();
  plan->add_option("--budget-bytes", budget_flag);
  plan->add_option("--step", step);
  plan->add_option("--k", k_flag);
  plan->add_option("--epochs", epochs);
  plan->add_option("--dataset-size", dataset_size);
  plan->add_option("--out", out);

  auto* simulate = app.add_subcommand("simulate", "event-level iteration replay");
  simulate->add_option("--network", network)->required();
  simulate->add_option("--hardware", hardware)->required();
  simulate->add_option("--model", model_path)->required();
  simulate->add_option("--plan", plan_path);
  simulate->add_option("--mode", mode);
  simulate->add_option("--k", k_flag);
  simulate->add_option("--budget-bytes", budget_flag);
  simulate->add_option("--tolerance", tolerance);
  simulate->add_option("--out-dir", out_dir);

  auto* sweep = app.add_subcommand("sweep", "grid of (k, mode) evaluations");
  sweep->add_option("--network", network)->required();
  sweep->add_option("--hardware", hardware)->required();
  sweep->add_option("--model", model_path)->required();
  sweep->add_option("--k", k_list)->required()->expected(-1);
  sweep->add_option("--modes", modes);
  sweep->add_flag("--parallel", parallel);
  sweep->add_option("--epochs", epochs);
  sweep->add_option("--dataset-size", dataset_size);
  sweep->add_option("--out", out);

  auto* tune =
      app.add_subcommand("tune-lr", "learning rate for the new minibatch");
  tune->add_option("--alpha-base", alpha_base)->required();
  tune->add_option("--convexity", convexity)->required();
  tune->add_option("--mu", mu);
  tune->add_option("--q", q)->required();
  tune->add_option("--iters-base", iters_base);

  auto* gen = app.add_subcommand("gen", "write a synthetic fixture");
  gen->add_option("--seed", seed);
  gen->add_option("--min-layers", min_layers);
  gen->add_option("--max-layers", max_layers);
  gen->add_option("--out-dir", out_dir);

  auto* pipeline = app.add_subcommand(
      "pipeline", "validate, fit, plan, simulate and verify in one run");
  pipeline->add_option("--network", network)->required();
  pipeline->add_option("--hardware", hardware)->required();
  pipeline->add_option("--profiles", profiles)->required()->expected(-1);
  pipeline->add_option("--eta", eta);
  pipeline->add_option("--tolerance", tolerance);
  pipeline->add_option("--out-dir", out_dir);

  CLI11_PARSE(app, argc, argv);

  auto opt_path = [](const std::string& s) {
    return s.empty() ? std::optional<fs::path>() : std::optional<fs::path>(s);
  };
  auto opt_budget = [&]() {
    return budget_flag ? std::optional<Bytes>(budget_flag)
                       : std::optional<Bytes>();
  };
  std::vector<fs::path> profile_paths(profiles.begin(), profiles.end());

  try {
    if (*validate) return run_validate(network, opt_path(hardware));
    if (*fit)
      return run_fit(network, profile_paths, opt_path(hardware), eta, out);
    if (*plan)
      return run_plan(network, hardware, model_path, opt_budget(), step, k_flag,
                      epochs, dataset_size, out);
    if (*simulate)
      return run_simulate(network, hardware, model_path, opt_path(plan_path),
                          mode, k_flag, opt_budget(), out_dir, tolerance);
    if (*sweep)
      return run_sweep(network, hardware, model_path, k_list, modes, parallel,
                       epochs, dataset_size, out);
    if (*tune) return run_tune_lr(alpha_base, convexity, mu, q, iters_base);
    if (*gen) return run_gen(seed, min_layers, max_layers, out_dir);
    if (*pipeline)
      return run_pipeline(network, hardware, profile_paths, eta, tolerance,
                          out_dir);
  } catch (const IoError& e) {
    log_line(kError, e.what());
    return 2;
  } catch (const SpecError& e) {
    log_line(kError, e.what());
    return 1;
  } catch (const UntrainableError& e) {
    log_line(kError, e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    log_line(kError, e.what());
    return 1;
  } catch (const json::exception& e) {
    log_line(kError, std::string("malformed document: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log_line(kError, std::string("internal error: ") + e.what());
    return 3;
  }
  return 0;
}
