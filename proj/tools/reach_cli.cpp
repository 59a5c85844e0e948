// Command-line surface for the reachability toolkit. Every run writes a
// manifest (full config echo + seed + version); `rerun --manifest` re-executes
// any run from its manifest alone to byte-identical outputs.
//
// Exit codes: 0 success, 2 configuration error, 3 dimension error (no partial
// output), 4 certification/step failure, 5 divergence (artifacts still
// written, flagged in the tube).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "reach/baseline.hpp"
#include "reach/closed_loop.hpp"
#include "reach/dt_reach.hpp"
#include "reach/fields.hpp"
#include "reach/flowpipe_ct.hpp"
#include "reach/io.hpp"
#include "reach/mpc.hpp"
#include "reach/refine.hpp"
#include "reach/rng.hpp"
#include "reach/systems.hpp"
#include "reach/training.hpp"

using namespace reach;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDimension = 3;
constexpr int kExitStep = 4;
constexpr int kExitDivergence = 5;

// Thrown for dimension cross-check failures (exit 3, no partial output).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for bad configuration values (exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Buffered outputs: nothing touches the filesystem until the run succeeded
// far enough to be allowed to emit artifacts.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
  void write_all(const std::string& out_dir) const {
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, content] : files)
      write_text_file((std::filesystem::path(out_dir) / name).string(), content);
  }
};

Vec<double> parse_list(const std::string& s) {
  Vec<double> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t next = s.find(',', pos);
    std::string tok = s.substr(pos, next == std::string::npos ? next : next - pos);
    if (tok.empty()) throw std::invalid_argument("empty entry in list \"" + s + "\"");
    out.push_back(std::stod(tok));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

SplitPlan make_split_plan(const std::string& spec, int n_dims) {
  if (spec.rfind("rpy:", 0) == 0)
    return SplitPlan::rpy(n_dims, std::stoi(spec.substr(4)));
  SplitPlan plan = SplitPlan::parse(spec);
  plan.validate(n_dims);
  return plan;
}

// ---------------------------------------------------------------------------
// System registry (continuous-time fields, keyed by name).

struct FieldEntry {
  VectorField<double> field;
  int n = 0;
};

FieldEntry make_field(const std::string& name) {
  if (name == "quadrotor") {
    QuadrotorParams prm;
    Vec<double> hover = {prm.mass * prm.gravity, 0.0, 0.0, 0.0};
    return {quadrotor_field<double>(prm, hover), 12};
  }
  if (name == "swarm") {
    SwarmParams prm;
    prm.agents = 12;  // 72-dim state
    return {swarm_field<double>(prm, Vec<double>(static_cast<size_t>(prm.input_dim()), 0.0)),
            prm.state_dim()};
  }
  if (name == "arm") {
    ArmParams prm;
    return {arm_field<double>(prm, Vec<double>(static_cast<size_t>(prm.joints), 0.0)),
            2 * prm.joints};
  }
  if (name == "rotation") return {rotation_field<double>(1.0), 2};
  if (name == "decay") return {diag_linear_field<double>({-1.0}), 1};
  throw ConfigError("unknown system \"" + name +
                    "\" (known: quadrotor, swarm, arm, rotation, decay)");
}

struct AugEntry {
  VectorField<double> field;
  int n = 0;  // plant state dim
  int l = 0;  // control dim
};

AugEntry make_augmented(const std::string& name) {
  if (name == "quadrotor") {
    QuadrotorParams prm;
    return {make_augmented_field<double>(
                12, 4, [prm](const auto& x, const auto& u, auto& dx) { quadrotor_ode(x, u, prm, dx); }),
            12, 4};
  }
  if (name == "arm") {
    ArmParams prm;
    return {make_augmented_field<double>(
                2 * prm.joints, prm.joints,
                [prm](const auto& x, const auto& u, auto& dx) { arm_ode(x, u, prm, dx); }),
            2 * prm.joints, prm.joints};
  }
  if (name == "swarm") {
    SwarmParams prm;
    return {make_augmented_field<double>(
                prm.state_dim(), prm.input_dim(),
                [prm](const auto& x, const auto& u, auto& dx) { swarm_ode(x, u, prm, dx); }),
            prm.state_dim(), prm.input_dim()};
  }
  if (name == "integrator2") {
    return {make_augmented_field<double>(2, 2,
                                         [](const auto& x, const auto& u, auto& dx) {
                                           dx.assign(2, x[0] * 0.0);
                                           dx[0] = dx[0] + u[0];
                                           dx[1] = dx[1] + u[1];
                                         }),
            2, 2};
  }
  throw ConfigError("unknown closed-loop system \"" + name +
                    "\" (known: quadrotor, arm, swarm, integrator2)");
}

// ---------------------------------------------------------------------------
// Shared artifact emission.

void emit_tube(Outputs& out, const Tube& tube, bool with_time) {
  out.add("tube.csv", tube_to_csv(tube, with_time));
  out.add("tube.json", tube_to_json(tube).dump(2) + "\n");
}

void emit_manifest(Outputs& out, const std::string& command, const json& cfg) {
  Manifest m;
  m.command = command;
  m.config = cfg;
  m.seed = cfg.value("seed", 0ULL);
  m.threads = hardware_threads();
  out.add("manifest.json", m.to_json().dump(2) + "\n");
}

int finish(const std::string& command, const json& cfg, const std::string& out_dir, Outputs& out,
           bool diverged, const std::string& reason) {
  emit_manifest(out, command, cfg);
  out.write_all(out_dir);
  if (diverged) {
    std::cerr << "divergence: " << (reason.empty() ? "enclosure diverged" : reason) << "\n";
    return kExitDivergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Command handlers. Each consumes a fully-resolved JSON config (all referenced
// file contents are embedded), so a manifest alone re-executes the run.

int cmd_reach_ct(const json& cfg, const std::string& out_dir, const std::string& command) {
  FieldEntry sys = make_field(cfg.at("system"));
  Vec<double> center = cfg.at("x0_center").get<Vec<double>>();
  if (static_cast<int>(center.size()) != sys.n)
    throw DimensionError("x0 has " + std::to_string(center.size()) + " dims, system \"" +
                         std::string(cfg.at("system")) + "\" has " + std::to_string(sys.n));
  FlowpipeParams fp;
  fp.h = cfg.value("h", fp.h);
  fp.steps = cfg.value("steps", fp.steps);
  fp.order = cfg.value("order", fp.order);
  fp.validate();
  Box x0 = box_from_center(center, cfg.value("eps", 0.0));
  bool baseline = cfg.value("baseline", std::string()) == "interval";
  ScopedOutwardRounding rounding(cfg.value("sound_rounding", false));

  auto engine = [&](const Box& b) {
    return baseline ? ct_interval_baseline(sys.field, b, fp) : ct_reach(sys.field, b, fp);
  };
  std::string split = cfg.value("split", std::string());
  Tube tube = split.empty() ? engine(x0)
                            : reach_with_splitting(engine, x0, make_split_plan(split, sys.n));

  Outputs out;
  emit_tube(out, tube, true);
  return finish(command, cfg, out_dir, out, tube.diverged, tube.failure_reason);
}

int cmd_reach_dt(const json& cfg, const std::string& out_dir) {
  MLPNet<double> net = net_from_json(cfg.at("net"));
  Vec<double> center = cfg.at("x0_center").get<Vec<double>>();
  int n = static_cast<int>(center.size());
  int m = net.input_dim() - n;
  if (m < 0 || net.output_dim() != n)
    throw DimensionError("one-step map is " + std::to_string(net.input_dim()) + " -> " +
                         std::to_string(net.output_dim()) + ", x0 has " + std::to_string(n) +
                         " dims");
  DTSystem<double> sys;
  sys.step = net;
  sys.n = n;
  sys.m = m;
  sys.validate();

  std::vector<Vec<double>> actions;
  if (cfg.contains("actions")) {
    for (const auto& a : cfg.at("actions")) {
      actions.push_back(a.get<Vec<double>>());
      if (static_cast<int>(actions.back().size()) != m)
        throw DimensionError("action row has " + std::to_string(actions.back().size()) +
                             " dims, map expects " + std::to_string(m));
    }
  } else {
    actions.assign(static_cast<size_t>(cfg.value("steps", 10)),
                   Vec<double>(static_cast<size_t>(m), 0.0));
  }
  Box x0 = box_from_center(center, cfg.value("eps", 0.0));
  bool baseline = cfg.value("baseline", std::string()) == "interval";
  ScopedOutwardRounding rounding(cfg.value("sound_rounding", false));

  auto engine = [&](const Box& b) {
    return baseline ? dt_interval_baseline(sys, b, actions) : dt_reach(sys, b, actions);
  };
  std::string split = cfg.value("split", std::string());
  Tube tube =
      split.empty() ? engine(x0) : reach_with_splitting(engine, x0, make_split_plan(split, n));

  Outputs out;
  emit_tube(out, tube, false);
  return finish("reach-dt", cfg, out_dir, out, tube.diverged, tube.failure_reason);
}

int cmd_reach_cl(const json& cfg, const std::string& out_dir) {
  AugEntry sys = make_augmented(cfg.at("system"));
  MLPNet<double> controller = net_from_json(cfg.at("net"));
  Vec<double> center = cfg.at("x0_center").get<Vec<double>>();
  if (static_cast<int>(center.size()) != sys.n)
    throw DimensionError("x0 has " + std::to_string(center.size()) + " dims, plant has " +
                         std::to_string(sys.n));
  if (controller.input_dim() != sys.n || controller.output_dim() != sys.l)
    throw DimensionError("controller is " + std::to_string(controller.input_dim()) + " -> " +
                         std::to_string(controller.output_dim()) + ", plant needs " +
                         std::to_string(sys.n) + " -> " + std::to_string(sys.l));

  ClosedLoopSpec<double> spec;
  spec.dynamics = sys.field;
  spec.controller = controller;
  spec.n = sys.n;
  spec.l = sys.l;
  spec.ctl_steps = cfg.value("steps", 5);
  spec.k_atomic = cfg.value("k_atomic", 1);
  spec.fp.h = cfg.value("h", spec.fp.h);
  spec.fp.order = cfg.value("order", spec.fp.order);
  spec.fp.steps = spec.ctl_steps * spec.k_atomic;
  spec.validate();
  Box x0 = box_from_center(center, cfg.value("eps", 0.0));
  ScopedOutwardRounding rounding(cfg.value("sound_rounding", false));

  Tube tube = cl_reach(spec, x0);
  Outputs out;
  emit_tube(out, tube, true);
  return finish("reach-cl", cfg, out_dir, out, tube.diverged, tube.failure_reason);
}

int cmd_refine(const json& cfg, const std::string& out_dir) {
  MLPNet<double> net = net_from_json(cfg.at("net"));
  Vec<double> center = cfg.at("x0_center").get<Vec<double>>();
  int n = static_cast<int>(center.size());
  int m = net.input_dim() - n;
  if (m < 0 || net.output_dim() != n)
    throw DimensionError("one-step map is " + std::to_string(net.input_dim()) + " -> " +
                         std::to_string(net.output_dim()) + ", x0 has " + std::to_string(n) +
                         " dims");
  DTSystem<double> sys;
  sys.step = net;
  sys.n = n;
  sys.m = m;
  sys.validate();

  int horizon = cfg.value("steps", 10);
  double eps = cfg.value("eps", 0.0);
  double bound = cfg.value("bound", 0.5);
  std::string target = cfg.value("target", std::string("center"));
  if (target != "center" && target != "actions")
    throw ConfigError("refine target must be \"center\" or \"actions\"");

  auto objective = [&](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::value_type;
    DTSystem<S> s;
    s.step = net_cast<S>(sys.step);
    s.n = n;
    s.m = m;
    Vec<S> c = to_scalar<S>(center);
    std::vector<Vec<S>> acts(static_cast<size_t>(horizon), Vec<S>(static_cast<size_t>(m), S(0.0)));
    if (target == "center") {
      c.assign(p.begin(), p.end());
    } else {
      for (int t = 0; t < horizon; ++t)
        acts[static_cast<size_t>(t)] =
            Vec<S>(p.begin() + static_cast<long>(t) * m, p.begin() + static_cast<long>(t + 1) * m);
    }
    return tube_volume(dt_reach(s, box_from_center(c, S(eps)), acts));
  };

  Vec<double> x = target == "center" ? center : Vec<double>(static_cast<size_t>(horizon * m), 0.0);
  Vec<double> lo = x, hi = x;
  for (size_t j = 0; j < x.size(); ++j) {
    lo[j] -= bound;
    hi[j] += bound;
  }
  RefineParams rp;
  rp.iters = cfg.value("grad_iters", 20);
  auto res = gradient_refine(objective, x, lo, hi, rp);

  Outputs out;
  json rj = {{"target", target},
             {"initial_objective", res.initial_objective},
             {"objective", res.objective},
             {"progressed", res.progressed},
             {"subgradient", res.subgradient},
             {"accepted_steps", res.accepted_steps},
             {"x", res.x}};
  out.add("refine.json", rj.dump(2) + "\n");
  return finish("refine", cfg, out_dir, out, false, "");
}

int cmd_train_dt(const json& cfg, const std::string& out_dir) {
  TrainConfig tc;
  tc.iters = cfg.value("iters", 50);
  tc.batch = cfg.value("batch", 4);
  tc.lambda = cfg.value("lambda", 0.0);
  tc.horizon_max = cfg.value("horizon", 3);
  tc.eps0 = cfg.value("eps0", 0.1);
  tc.eps_final = cfg.value("eps_final", 0.01);
  tc.lr = cfg.value("lr", 1e-3);
  tc.seed = cfg.value("seed", 0ULL);
  tc.validate();
  int hidden = cfg.value("hidden", 16);
  int episodes = cfg.value("episodes", 32);

  // bundled ground truth: damped 2D rotation with a scalar forcing input
  const double th = 0.3, damp = 0.95;
  auto truth = [&](const Vec<double>& x, const Vec<double>& u) {
    return Vec<double>{damp * (x[0] * std::cos(th) - x[1] * std::sin(th)) + 0.1 * u[0],
                       damp * (x[0] * std::sin(th) + x[1] * std::cos(th))};
  };
  Rng rng(tc.seed);
  auto dataset = make_dt_dataset(truth, 2, 1, episodes, tc.horizon_max, 0.5, 0.3, rng);
  auto init = random_mlp(rng, 3, {hidden}, 2, Act::Tanh, 0.5);

  auto res = train_dt_dyn(init, tc, dataset);
  Outputs out;
  out.add("net.json", net_to_json(res.net).dump(2) + "\n");
  out.add("train_log.csv", res.log.to_csv());
  return finish("train-dt", cfg, out_dir, out, false, "");
}

int cmd_train_ctl(const json& cfg, const std::string& out_dir) {
  TrainConfig tc;
  tc.iters = cfg.value("iters", 50);
  tc.batch = cfg.value("batch", 4);
  tc.lambda = cfg.value("lambda", 0.0);
  tc.gamma = cfg.value("gamma", 0.1);
  tc.horizon_max = cfg.value("horizon", 3);
  tc.eps0 = cfg.value("eps0", 0.05);
  tc.eps_final = cfg.value("eps_final", 0.02);
  tc.lr = cfg.value("lr", 1e-2);
  tc.seed = cfg.value("seed", 0ULL);
  tc.validate();
  const double delta = cfg.value("delta", 0.1);

  // bundled imitation task: scalar integrator xdot = u, expert u = -x
  auto plant = [](const auto& x, const auto& u, auto& dx) {
    dx.assign(1, x[0] * 0.0);
    dx[0] = dx[0] + u[0];
  };
  Rng rng(tc.seed);
  std::vector<Episode> dataset;
  for (int e = 0; e < cfg.value("episodes", 16); ++e) {
    Episode ep;
    double x = rng.uniform(-1.0, 1.0);
    ep.states.push_back({x});
    for (int t = 0; t < tc.horizon_max; ++t) {
      double u = -x;
      ep.actions.push_back({u});
      x += delta * u;  // expert rollout under explicit Euler
      ep.states.push_back({x});
    }
    dataset.push_back(std::move(ep));
  }
  Mat<double> w(1, 1);
  w(0, 0) = rng.uniform(-0.5, 0.5);
  auto init = affine_net(w, Vec<double>{0.0});

  auto res = train_ct_ctl(init, tc, dataset, plant, 1, 1, delta);
  Outputs out;
  out.add("net.json", net_to_json(res.net).dump(2) + "\n");
  out.add("train_log.csv", res.log.to_csv());
  return finish("train-ctl", cfg, out_dir, out, false, "");
}

int cmd_mpc(const json& cfg, const std::string& out_dir) {
  PlanProblem prob;
  SamplerConfig sampler;
  MPCConfig mpc;
  scenario_from_json(cfg.at("scenario"), prob, sampler, mpc);
  Vec<double> x0 = cfg.at("x0_center").get<Vec<double>>();
  if (static_cast<int>(x0.size()) != prob.sys.n)
    throw DimensionError("x0 has " + std::to_string(x0.size()) + " dims, model has " +
                         std::to_string(prob.sys.n));
  if (cfg.contains("seed")) {
    uint64_t s = cfg.at("seed");
    mpc.seed = s;
    sampler.seed = s;
  }

  auto sim = [&](const Vec<double>& x, const Vec<double>& u) {
    Vec<double> in = x;
    in.insert(in.end(), u.begin(), u.end());
    return prob.sys.step.forward(in);
  };
  auto res = mpc_run(prob, sampler, mpc, sim, x0);

  Outputs out;
  out.add("run_log.csv", res.log_to_csv());
  json rj = {{"success", res.success},
             {"violated", res.violated},
             {"steps_used", res.steps_used},
             {"final_state", res.final_state}};
  out.add("result.json", rj.dump(2) + "\n");
  return finish("mpc", cfg, out_dir, out, false, "");
}

int cmd_bench(const json& cfg, const std::string& out_dir) {
  FlowpipeParams fp;
  fp.h = cfg.value("h", 0.01);
  fp.steps = cfg.value("steps", 20);
  fp.validate();

  auto timed = [&](const std::string& name, double eps) {
    FieldEntry sys = make_field(name);
    Vec<double> center(static_cast<size_t>(sys.n), 0.0);
    if (name == "quadrotor") center = {0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    auto t0 = std::chrono::steady_clock::now();
    Tube tube = ct_reach(sys.field, box_from_center(center, eps), fp);
    auto t1 = std::chrono::steady_clock::now();
    double sec = std::chrono::duration<double>(t1 - t0).count();
    // timings go to stdout only: wall time is not a reproducible artifact
    std::cout << name << "," << sys.n << "," << fmt_g17(sec) << ","
              << (tube.diverged ? "diverged" : fmt_g17(tube_volume(tube))) << "\n";
    return tube;
  };
  std::cout << "system,dims,seconds,tube_volume\n";
  Tube quad = timed("quadrotor", 0.01);
  Tube swarm = timed("swarm", 0.01);

  Outputs out;
  json bj = {{"quadrotor_volume", quad.diverged ? json() : json(tube_volume(quad))},
             {"swarm_volume", swarm.diverged ? json() : json(tube_volume(swarm))},
             {"steps", fp.steps},
             {"h", fp.h}};
  out.add("bench.json", bj.dump(2) + "\n");
  return finish("bench", cfg, out_dir, out, quad.diverged || swarm.diverged, "");
}

int run_command(const std::string& command, const json& cfg, const std::string& out_dir) {
  if (command == "reach-ct" || command == "split") return cmd_reach_ct(cfg, out_dir, command);
  if (command == "reach-dt") return cmd_reach_dt(cfg, out_dir);
  if (command == "reach-cl") return cmd_reach_cl(cfg, out_dir);
  if (command == "refine") return cmd_refine(cfg, out_dir);
  if (command == "train-dt") return cmd_train_dt(cfg, out_dir);
  if (command == "train-ctl") return cmd_train_ctl(cfg, out_dir);
  if (command == "mpc") return cmd_mpc(cfg, out_dir);
  if (command == "bench") return cmd_bench(cfg, out_dir);
  throw std::invalid_argument("unknown command in manifest: " + command);
}

int run_guarded(const std::string& command, const json& cfg, const std::string& out_dir) {
  try {
    return run_command(command, cfg, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kExitDimension;
  } catch (const std::invalid_argument& e) {
    // engine-level validation failures are dimension/shape errors by contract
    std::cerr << "dimension error: " << e.what() << "\n";
    return kExitDimension;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "step failure: " << e.what() << "\n";
    return kExitStep;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certified reachability toolkit"};
  app.require_subcommand(1);
  // long-only help so the step-size flag --h stays unambiguous
  app.set_help_flag("--help", "print help");
  app.option_defaults()->configurable();
  auto add_sub = [&](const std::string& n, const std::string& d) {
    auto* c = app.add_subcommand(n, d);
    c->set_help_flag("--help", "print help");
    return c;
  };

  // shared option storage; each subcommand registers the flags it supports
  std::string system, net_path, x0_center, split, baseline, out_dir = "out", actions_path,
              scenario_path, target = "center", manifest_path;
  double eps = 0.0, h = 0.01, lambda = 0.0, bound = 0.5, lr = 0.0, eps0 = -1.0, eps_final = -1.0;
  int steps = 10, order = 2, grad_iters = 20, k_atomic = 1, iters = 50, batch = 4, horizon = 3,
      hidden = 16;
  uint64_t seed = 0;
  bool sound_rounding = false;

  auto add_out = [&](CLI::App* c) { c->add_option("--out", out_dir, "output directory"); };
  auto add_common_reach = [&](CLI::App* c, bool ct) {
    c->add_option("--x0-center", x0_center, "comma-separated initial-state center")->required();
    c->add_option("--eps", eps, "initial box radius");
    c->add_option("--steps", steps, "number of steps");
    if (ct) {
      c->add_option("--h", h, "step size");
      c->add_option("--order", order, "polynomial order");
    }
    c->add_option("--split", split, "grid split (\"2x2x1...\" or \"rpy:8\")");
    c->add_option("--seed", seed, "rng seed (recorded in the manifest)");
    c->add_flag("--sound-rounding", sound_rounding, "outward-rounded interval arithmetic");
    add_out(c);
  };

  auto* ct = add_sub("reach-ct", "continuous-time flowpipe for a named system");
  ct->add_option("--system", system, "system name")->required();
  ct->add_option("--baseline", baseline, "\"interval\" for the box-only Picard baseline");
  add_common_reach(ct, true);

  auto* sp = add_sub("split", "flowpipe with a required initial-set split");
  sp->add_option("--system", system, "system name")->required();
  sp->add_option("--baseline", baseline, "\"interval\" for the box-only Picard baseline");
  add_common_reach(sp, true);

  auto* dt = add_sub("reach-dt", "discrete-time reachability through a one-step map");
  dt->add_option("--net", net_path, "one-step map (JSON)")->required();
  dt->add_option("--actions", actions_path, "action sequence (JSON array of arrays)");
  dt->add_option("--baseline", baseline, "\"interval\" for the layerwise interval baseline");
  add_common_reach(dt, false);

  auto* cl = add_sub("reach-cl", "closed-loop flowpipe with a neural controller");
  cl->add_option("--system", system, "plant name")->required();
  cl->add_option("--net", net_path, "controller network (JSON)")->required();
  cl->add_option("--k-atomic", k_atomic, "flowpipe steps per control interval");
  add_common_reach(cl, true);

  auto* rf = add_sub("refine", "gradient refinement of the tube volume");
  rf->add_option("--net", net_path, "one-step map (JSON)")->required();
  rf->add_option("--x0-center", x0_center, "comma-separated initial-state center")->required();
  rf->add_option("--eps", eps, "initial box radius");
  rf->add_option("--steps", steps, "horizon");
  rf->add_option("--grad-iters", grad_iters, "refinement iterations");
  rf->add_option("--bound", bound, "search-box radius around the initial value");
  rf->add_option("--target", target, "\"center\" or \"actions\"");
  rf->add_option("--seed", seed, "rng seed (recorded in the manifest)");
  add_out(rf);

  auto* td = add_sub("train-dt", "train a one-step dynamics model on the bundled task");
  td->add_option("--iters", iters);
  td->add_option("--batch", batch);
  td->add_option("--lambda", lambda, "certified-tube penalty weight");
  td->add_option("--horizon", horizon);
  td->add_option("--hidden", hidden);
  td->add_option("--lr", lr);
  td->add_option("--eps0", eps0);
  td->add_option("--eps-final", eps_final);
  td->add_option("--seed", seed);
  add_out(td);

  auto* tcl = add_sub("train-ctl", "train a controller on the bundled imitation task");
  tcl->add_option("--iters", iters);
  tcl->add_option("--batch", batch);
  tcl->add_option("--lambda", lambda, "closed-loop tube penalty weight");
  tcl->add_option("--horizon", horizon);
  tcl->add_option("--lr", lr);
  tcl->add_option("--seed", seed);
  add_out(tcl);

  auto* mp = add_sub("mpc", "receding-horizon run from a scenario file");
  mp->add_option("--scenario", scenario_path, "scenario (JSON)")->required();
  mp->add_option("--x0-center", x0_center, "comma-separated start state")->required();
  mp->add_option("--seed", seed, "override the scenario seeds");
  add_out(mp);

  auto* be = add_sub("bench", "timing comparison across bundled systems");
  be->add_option("--h", h);
  be->add_option("--steps", steps);
  add_out(be);

  auto* rr = add_sub("rerun", "re-execute a run from its manifest");
  rr->add_option("--manifest", manifest_path, "manifest.json from a previous run")->required();
  add_out(rr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  // build the self-contained config (embed all referenced files), then run
  try {
    json cfg;
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();

    if (name == "rerun") {
      Manifest m = Manifest::from_json(read_json_file(manifest_path));
      return run_guarded(m.command, m.config, out_dir);
    }

    if (auto* seed_opt = sub->get_option_no_throw("--seed"); seed_opt && seed_opt->count())
      cfg["seed"] = seed;
    if (name == "reach-ct" || name == "split" || name == "reach-dt" || name == "reach-cl") {
      cfg["x0_center"] = parse_list(x0_center);
      cfg["eps"] = eps;
      cfg["steps"] = steps;
      if (!split.empty()) cfg["split"] = split;
      if (sound_rounding) cfg["sound_rounding"] = true;
      if (!baseline.empty()) cfg["baseline"] = baseline;
    }
    if (name == "reach-ct" || name == "split" || name == "reach-cl") {
      cfg["system"] = system;
      cfg["h"] = h;
      cfg["order"] = order;
    }
    if (name == "split" && split.empty())
      throw std::invalid_argument("split requires --split");
    if (name == "reach-dt" || name == "reach-cl" || name == "refine")
      cfg["net"] = read_json_file(net_path);
    if (name == "reach-dt" && !actions_path.empty()) cfg["actions"] = read_json_file(actions_path);
    if (name == "reach-cl") cfg["k_atomic"] = k_atomic;
    if (name == "refine") {
      cfg["x0_center"] = parse_list(x0_center);
      cfg["eps"] = eps;
      cfg["steps"] = steps;
      cfg["grad_iters"] = grad_iters;
      cfg["bound"] = bound;
      cfg["target"] = target;
    }
    if (name == "train-dt" || name == "train-ctl") {
      cfg["iters"] = iters;
      cfg["batch"] = batch;
      cfg["lambda"] = lambda;
      cfg["horizon"] = horizon;
      cfg["seed"] = seed;
      if (lr > 0.0) cfg["lr"] = lr;
      if (name == "train-dt") {
        cfg["hidden"] = hidden;
        if (eps0 >= 0.0) cfg["eps0"] = eps0;
        if (eps_final >= 0.0) cfg["eps_final"] = eps_final;
      }
    }
    if (name == "mpc") {
      cfg["scenario"] = read_json_file(scenario_path);
      cfg["x0_center"] = parse_list(x0_center);
    }
    if (name == "bench") {
      cfg["h"] = h;
      cfg["steps"] = steps;
    }

    return run_guarded(name, cfg, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}
