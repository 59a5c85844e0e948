#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "reach/dt_reach.hpp"
#include "reach/io.hpp"
#include "reach/refine.hpp"
#include "reach/rng.hpp"

// Reachability-aware sampling-based MPC: cross-entropy action search scoring
// a nominal-cost-plus-tube-penalty objective, gradient refinement of the top
// candidate, and a receding-horizon loop with bounded disturbance injection.

namespace reach {

// ---------------------------------------------------------------------------
// Constraint registry over boxes. margin(box) >= 0 means the whole box is
// safe; max(0, -margin) is the exact violation depth for the box.

struct Constraint {
  enum class Type { halfspace_avoid, sphere_avoid, box_stay_in, max_volume };
  Type type = Type::max_volume;
  std::vector<int> dims;  // state dims the constraint reads (empty = all)
  // halfspace-avoid: unsafe set {y : a.y >= b}
  Vec<double> a;
  double b = 0.0;
  // sphere-avoid: unsafe open ball B(center, radius)
  Vec<double> center;
  double radius = 0.0;
  // box-stay-in: safe box [lo, hi]
  Vec<double> lo, hi;
  // max-volume: width-sum budget
  double vmax = 0.0;

  template <class S>
  S margin(const IntervalBox<S>& box) const {
    std::vector<int> idx = dims;
    if (idx.empty())
      for (int d = 0; d < box.size(); ++d) idx.push_back(d);
    switch (type) {
      case Type::halfspace_avoid: {
        // b - max_{y in box} a.y, exact on boxes
        S worst(b);
        for (size_t j = 0; j < idx.size(); ++j) {
          const auto& iv = box[idx[j]];
          S term = a[j] >= 0.0 ? iv.hi * S(a[j]) : iv.lo * S(a[j]);
          worst -= term;
        }
        return worst;
      }
      case Type::sphere_avoid: {
        // exact box-to-point distance minus the ball radius
        S d2(0.0);
        for (size_t j = 0; j < idx.size(); ++j) {
          const auto& iv = box[idx[j]];
          S gap(0.0);
          if (value(iv.lo) > center[j]) gap = iv.lo - S(center[j]);
          else if (value(iv.hi) < center[j]) gap = S(center[j]) - iv.hi;
          d2 += gap * gap;
        }
        using std::sqrt;
        return sqrt(d2) - S(radius);
      }
      case Type::box_stay_in: {
        S worst(std::numeric_limits<double>::infinity());
        using std::min;
        for (size_t j = 0; j < idx.size(); ++j) {
          const auto& iv = box[idx[j]];
          worst = min(worst, iv.lo - S(lo[j]));
          worst = min(worst, S(hi[j]) - iv.hi);
        }
        return worst;
      }
      case Type::max_volume: {
        S v(0.0);
        for (size_t j = 0; j < idx.size(); ++j) v += box[idx[j]].width();
        return S(vmax) - v;
      }
    }
    throw std::logic_error("Constraint: unknown type");
  }

  void validate(int n) const {
    for (int d : dims)
      if (d < 0 || d >= n) throw std::invalid_argument("Constraint: dim out of range");
    size_t k = dims.empty() ? static_cast<size_t>(n) : dims.size();
    switch (type) {
      case Type::halfspace_avoid:
        if (a.size() != k) throw std::invalid_argument("Constraint: halfspace size");
        break;
      case Type::sphere_avoid:
        if (center.size() != k || radius < 0.0)
          throw std::invalid_argument("Constraint: sphere parameters");
        break;
      case Type::box_stay_in:
        if (lo.size() != k || hi.size() != k)
          throw std::invalid_argument("Constraint: stay-in box size");
        break;
      case Type::max_volume:
        if (vmax < 0.0) throw std::invalid_argument("Constraint: volume budget");
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// Planning problem: diagonal-quadratic stage cost plus constraint penalties
// over the certified tube at planning radius eps.

struct PlanProblem {
  DTSystem<double> sys;
  Vec<double> x_goal;
  Vec<double> q_weights;  // diagonal state-cost weights (applied to x_{t+1})
  Vec<double> r_weights;  // diagonal action-cost weights
  std::vector<Constraint> constraints;
  double penalty = 100.0;          // C
  double diverged_margin = 1e3;    // violation depth charged for a diverged tube
  int horizon = 5;                 // H
  Vec<double> u_lo, u_hi;          // action box U
  double eps = 0.0;                // planning radius around the current state
  DTReachParams dt_prm;

  void validate() const {
    sys.validate();
    if (horizon < 1) throw std::invalid_argument("PlanProblem: horizon < 1");
    size_t n = static_cast<size_t>(sys.n), m = static_cast<size_t>(sys.m);
    if (x_goal.size() != n || q_weights.size() != n || r_weights.size() != m)
      throw std::invalid_argument("PlanProblem: cost dimension mismatch");
    if (u_lo.size() != m || u_hi.size() != m)
      throw std::invalid_argument("PlanProblem: action box dimension mismatch");
    for (size_t j = 0; j < m; ++j)
      if (!(u_lo[j] <= u_hi[j]) || !std::isfinite(u_lo[j]) || !std::isfinite(u_hi[j]))
        throw std::invalid_argument("PlanProblem: action box must be bounded");
    if (eps < 0.0 || penalty < 0.0) throw std::invalid_argument("PlanProblem: negative weight");
    for (const auto& c : constraints) c.validate(sys.n);
  }
};

template <class S>
struct PlanEval {
  S objective{0.0};
  ReachTube<S> tube;
  std::vector<Vec<S>> nominal;  // xhat_0..xhat_H
  bool diverged = false;
};

// One-pass evaluation of the planning objective
//   O = sum_t [ (xhat_{t+1}-g)' Q (xhat_{t+1}-g) + u_t' R u_t ]
//     + C * sum_t sum_c max(0, -margin_c(R_{t+1})),
// with the nominal rollout through the model and the tube from dt_reach at
// radius eps around x0. A diverged tube is charged the configured violation
// depth for every remaining step.
template <class S>
PlanEval<S> plan_eval(const PlanProblem& prob, const Vec<double>& x0,
                      const std::vector<Vec<S>>& actions) {
  if (static_cast<int>(actions.size()) != prob.horizon)
    throw std::invalid_argument("plan_eval: action count != horizon");
  PlanEval<S> out;
  DTSystem<S> sys;
  sys.step = net_cast<S>(prob.sys.step);
  sys.n = prob.sys.n;
  sys.m = prob.sys.m;

  // nominal rollout + stage costs
  Vec<S> x = to_scalar<S>(x0);
  out.nominal.push_back(x);
  for (int t = 0; t < prob.horizon; ++t) {
    const auto& u = actions[static_cast<size_t>(t)];
    Vec<S> in = x;
    in.insert(in.end(), u.begin(), u.end());
    x = sys.step.forward(in);
    out.nominal.push_back(x);
    for (size_t j = 0; j < u.size(); ++j) out.objective += S(prob.r_weights[j]) * u[j] * u[j];
    for (size_t j = 0; j < x.size(); ++j) {
      S d = x[j] - S(prob.x_goal[j]);
      out.objective += S(prob.q_weights[j]) * d * d;
    }
  }

  // certified tube + penalties
  out.tube = dt_reach(sys, box_from_center(to_scalar<S>(x0), S(prob.eps)), actions, prob.dt_prm);
  out.diverged = out.tube.diverged;
  for (int t = 1; t <= prob.horizon; ++t) {
    if (t < out.tube.steps() && !out.tube.boxes[static_cast<size_t>(t)].diverged) {
      const auto& box = out.tube.boxes[static_cast<size_t>(t)];
      for (const auto& c : prob.constraints) {
        S g = c.margin(box);
        using std::max;
        out.objective += S(prob.penalty) * max(S(0.0), -g);
      }
    } else if (!prob.constraints.empty()) {
      out.objective +=
          S(prob.penalty * prob.diverged_margin * static_cast<double>(prob.constraints.size()));
    }
  }
  return out;
}

template <class S>
S plan_objective(const PlanProblem& prob, const Vec<double>& x0,
                 const std::vector<Vec<S>>& actions) {
  return plan_eval(prob, x0, actions).objective;
}

// Worst constraint margin of the box at a tube step (+inf if no constraints).
inline double plan_step_margin(const PlanProblem& prob, const Box& box) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : prob.constraints) worst = std::min(worst, c.margin(box));
  return worst;
}

// ---------------------------------------------------------------------------
// Cross-entropy search with top-candidate gradient refinement.

struct SamplerConfig {
  int population = 256;
  double elite_frac = 0.1;
  int iterations = 5;
  double init_std = 0.3;
  double smoothing = 0.5;  // kept mass of the previous mean/std in the refit
  int refine_iters = 5;
  uint64_t seed = 0;

  void validate() const {
    if (population < 2 || elite_frac <= 0.0 || elite_frac > 1.0 || iterations < 1 ||
        init_std <= 0.0 || smoothing < 0.0 || smoothing >= 1.0 || refine_iters < 0)
      throw std::invalid_argument("SamplerConfig: invalid configuration");
  }
};

struct PlanResult {
  std::vector<Vec<double>> actions;
  double objective = 0.0;
  Tube tube;
  std::vector<double> best_history;  // best objective after each CEM iteration
  bool best_effort = false;          // every candidate's tube diverged
  bool refined = false;              // gradient refinement made progress
};

namespace detail {

inline std::vector<Vec<double>> unflatten_actions(const Vec<double>& flat, int horizon, int m) {
  std::vector<Vec<double>> out(static_cast<size_t>(horizon));
  for (int t = 0; t < horizon; ++t)
    out[static_cast<size_t>(t)] =
        Vec<double>(flat.begin() + static_cast<long>(t) * m,
                    flat.begin() + static_cast<long>(t + 1) * m);
  return out;
}

}  // namespace detail

inline PlanResult plan_cem(const PlanProblem& prob, const SamplerConfig& cfg,
                           const Vec<double>& x0) {
  prob.validate();
  cfg.validate();
  const int h = prob.horizon, m = prob.sys.m;
  const size_t dim = static_cast<size_t>(h * m);
  Rng rng(cfg.seed);

  Vec<double> mean(dim), stdv(dim, cfg.init_std);
  for (int t = 0; t < h; ++t)
    for (int j = 0; j < m; ++j)
      mean[static_cast<size_t>(t * m + j)] =
          0.5 * (prob.u_lo[static_cast<size_t>(j)] + prob.u_hi[static_cast<size_t>(j)]);
  auto clip = [&](Vec<double>& flat) {
    for (size_t k = 0; k < dim; ++k) {
      size_t j = k % static_cast<size_t>(m);
      flat[k] = std::clamp(flat[k], prob.u_lo[j], prob.u_hi[j]);
    }
  };

  PlanResult res;
  Vec<double> best = mean;
  clip(best);
  double best_obj = std::numeric_limits<double>::infinity();
  bool any_finite_tube = false;
  int n_elite = std::max(1, static_cast<int>(cfg.population * cfg.elite_frac));

  std::vector<Vec<double>> cands(static_cast<size_t>(cfg.population));
  std::vector<double> scores(static_cast<size_t>(cfg.population));
  std::vector<char> cand_ok(static_cast<size_t>(cfg.population));
  for (int it = 0; it < cfg.iterations; ++it) {
    // sampling is sequential so the stream is independent of thread count
    for (int c = 0; c < cfg.population; ++c) {
      Vec<double>& u = cands[static_cast<size_t>(c)];
      u.resize(dim);
      if (it > 0 && c == 0) {
        u = best;  // elite retention: the incumbent always competes
      } else {
        for (size_t k = 0; k < dim; ++k) u[k] = mean[k] + stdv[k] * rng.normal();
        clip(u);
      }
    }
    parallel_for(cfg.population, [&](int c) {
      auto ev = plan_eval(prob, x0, detail::unflatten_actions(cands[static_cast<size_t>(c)], h, m));
      scores[static_cast<size_t>(c)] = value(ev.objective);
      cand_ok[static_cast<size_t>(c)] = ev.diverged ? 0 : 1;
    });
    // fixed ascending-score selection with stable index tie-break
    std::vector<int> order(static_cast<size_t>(cfg.population));
    for (int c = 0; c < cfg.population; ++c) order[static_cast<size_t>(c)] = c;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
    });
    int top = order.front();
    if (scores[static_cast<size_t>(top)] < best_obj) {
      best_obj = scores[static_cast<size_t>(top)];
      best = cands[static_cast<size_t>(top)];
    }
    for (int e = 0; e < n_elite; ++e)
      if (cand_ok[static_cast<size_t>(order[static_cast<size_t>(e)])]) any_finite_tube = true;
    res.best_history.push_back(best_obj);

    // refit to elites with smoothing
    for (size_t k = 0; k < dim; ++k) {
      double em = 0.0, ev = 0.0;
      for (int e = 0; e < n_elite; ++e)
        em += cands[static_cast<size_t>(order[static_cast<size_t>(e)])][k];
      em /= n_elite;
      for (int e = 0; e < n_elite; ++e) {
        double d = cands[static_cast<size_t>(order[static_cast<size_t>(e)])][k] - em;
        ev += d * d;
      }
      double es = std::sqrt(ev / n_elite);
      mean[k] = cfg.smoothing * mean[k] + (1.0 - cfg.smoothing) * em;
      stdv[k] = std::max(1e-6, cfg.smoothing * stdv[k] + (1.0 - cfg.smoothing) * es);
    }
  }
  res.best_effort = !any_finite_tube;

  // gradient refinement of the top candidate only
  if (cfg.refine_iters > 0 && std::isfinite(best_obj)) {
    auto objective = [&](const auto& p) {
      using S = typename std::decay_t<decltype(p)>::value_type;
      std::vector<Vec<S>> acts(static_cast<size_t>(h));
      for (int t = 0; t < h; ++t)
        acts[static_cast<size_t>(t)] =
            Vec<S>(p.begin() + static_cast<long>(t) * m, p.begin() + static_cast<long>(t + 1) * m);
      return plan_objective(prob, x0, acts);
    };
    Vec<double> lo(dim), hi(dim);
    for (size_t k = 0; k < dim; ++k) {
      size_t j = k % static_cast<size_t>(m);
      lo[k] = prob.u_lo[j];
      hi[k] = prob.u_hi[j];
    }
    RefineParams rp;
    rp.iters = cfg.refine_iters;
    auto ref = gradient_refine(objective, best, lo, hi, rp);
    if (ref.objective < best_obj) {
      best = ref.x;
      best_obj = ref.objective;
      res.refined = ref.progressed;
    }
  }

  res.actions = detail::unflatten_actions(best, h, m);
  auto ev = plan_eval(prob, x0, res.actions);
  res.objective = value(ev.objective);
  res.tube = ev.tube;
  return res;
}

// ---------------------------------------------------------------------------
// Receding-horizon loop.

struct MPCConfig {
  int replan_period = 3;  // actions executed per plan
  int total_steps = 30;
  double dist_action = 0.0;  // planning-level bound: uniform noise on executed actions
  double dist_state = 0.0;   // control-level bound: uniform noise on the next state
  std::vector<int> goal_dims;  // dims measured for goal attainment (empty = all)
  double goal_radius = 0.1;
  uint64_t seed = 0;

  void validate(int horizon) const {
    if (replan_period < 1 || replan_period > horizon || total_steps < 1 || dist_action < 0.0 ||
        dist_state < 0.0 || goal_radius <= 0.0)
      throw std::invalid_argument("MPCConfig: invalid configuration");
  }
};

struct MPCLogRow {
  int step = 0;
  Vec<double> state;
  Vec<double> action;
  double objective = 0.0;   // objective of the plan this action came from
  double tube_volume = 0.0;
  double g_margin = 0.0;    // planned tube margin at this step
};

struct MPCResult {
  bool success = false;
  bool violated = false;  // a true state broke a constraint
  int steps_used = 0;
  Vec<double> final_state;
  std::vector<MPCLogRow> log;

  std::string log_to_csv() const {
    std::string out = "step,objective,tube_volume,g_margin,state,action\n";
    for (const auto& r : log) {
      out += std::to_string(r.step) + ',' + fmt_g17(r.objective) + ',' + fmt_g17(r.tube_volume) +
             ',' + fmt_g17(r.g_margin) + ',';
      for (size_t j = 0; j < r.state.size(); ++j)
        out += (j ? ";" : "") + fmt_g17(r.state[j]);
      out += ',';
      for (size_t j = 0; j < r.action.size(); ++j)
        out += (j ? ";" : "") + fmt_g17(r.action[j]);
      out += '\n';
    }
    return out;
  }
};

// Receding-horizon execution: plan, execute replan_period actions through the
// true simulator with bounded uniform disturbances (action-level and
// state-level), observe, replan. Success = goal ball reached without any true
// state breaking a constraint.
template <class Sim>
MPCResult mpc_run(const PlanProblem& prob, const SamplerConfig& sampler, const MPCConfig& cfg,
                  Sim&& sim_step, const Vec<double>& x0) {
  prob.validate();
  cfg.validate(prob.horizon);
  Rng rng(cfg.seed);
  MPCResult res;
  Vec<double> x = x0;

  auto goal_reached = [&](const Vec<double>& s) {
    std::vector<int> idx = cfg.goal_dims;
    if (idx.empty())
      for (int d = 0; d < prob.sys.n; ++d) idx.push_back(d);
    double d2 = 0.0;
    for (int d : idx) {
      double diff = s[static_cast<size_t>(d)] - prob.x_goal[static_cast<size_t>(d)];
      d2 += diff * diff;
    }
    return std::sqrt(d2) <= cfg.goal_radius;
  };
  auto state_ok = [&](const Vec<double>& s) {
    Box pt = box_from_center(s, 0.0);
    return plan_step_margin(prob, pt) >= 0.0;
  };

  if (!state_ok(x)) res.violated = true;
  int step = 0;
  SamplerConfig plan_cfg = sampler;
  while (step < cfg.total_steps && !goal_reached(x)) {
    plan_cfg.seed = sampler.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(step + 1));
    auto plan = plan_cem(prob, plan_cfg, x);
    for (int k = 0; k < cfg.replan_period && step < cfg.total_steps; ++k, ++step) {
      Vec<double> u = plan.actions[static_cast<size_t>(k)];
      for (size_t j = 0; j < u.size(); ++j) {
        u[j] += rng.uniform(-cfg.dist_action, cfg.dist_action);
        u[j] = std::clamp(u[j], prob.u_lo[j], prob.u_hi[j]);
      }
      MPCLogRow row;
      row.step = step;
      row.state = x;
      row.action = u;
      row.objective = plan.objective;
      row.tube_volume = plan.tube.diverged
                            ? std::numeric_limits<double>::infinity()
                            : value(tube_volume(plan.tube));
      row.g_margin = (k + 1 < plan.tube.steps())
                         ? plan_step_margin(prob, plan.tube.boxes[static_cast<size_t>(k + 1)])
                         : -std::numeric_limits<double>::infinity();
      res.log.push_back(std::move(row));

      x = sim_step(x, u);
      for (auto& v : x) {
        if (!std::isfinite(v)) {
          res.final_state = x;
          res.steps_used = step + 1;
          return res;  // simulator divergence: failure with log
        }
        v += rng.uniform(-cfg.dist_state, cfg.dist_state);
      }
      if (!state_ok(x)) res.violated = true;
      if (goal_reached(x)) {
        ++step;
        break;
      }
    }
  }
  res.final_state = x;
  res.steps_used = step;
  res.success = goal_reached(x) && !res.violated;
  return res;
}

// ---------------------------------------------------------------------------
// Scenario serialization (CLI surface).

inline json constraint_to_json(const Constraint& c) {
  json j;
  switch (c.type) {
    case Constraint::Type::halfspace_avoid:
      j = {{"type", "halfspace-avoid"}, {"a", c.a}, {"b", c.b}};
      break;
    case Constraint::Type::sphere_avoid:
      j = {{"type", "sphere-avoid"}, {"center", c.center}, {"radius", c.radius}};
      break;
    case Constraint::Type::box_stay_in:
      j = {{"type", "box-stay-in"}, {"lo", c.lo}, {"hi", c.hi}};
      break;
    case Constraint::Type::max_volume:
      j = {{"type", "max-volume"}, {"vmax", c.vmax}};
      break;
  }
  j["dims"] = c.dims;
  return j;
}

inline Constraint constraint_from_json(const json& j) {
  Constraint c;
  std::string t = j.at("type");
  if (t == "halfspace-avoid") {
    c.type = Constraint::Type::halfspace_avoid;
    c.a = j.at("a").get<Vec<double>>();
    c.b = j.at("b");
  } else if (t == "sphere-avoid") {
    c.type = Constraint::Type::sphere_avoid;
    c.center = j.at("center").get<Vec<double>>();
    c.radius = j.at("radius");
  } else if (t == "box-stay-in") {
    c.type = Constraint::Type::box_stay_in;
    c.lo = j.at("lo").get<Vec<double>>();
    c.hi = j.at("hi").get<Vec<double>>();
  } else if (t == "max-volume") {
    c.type = Constraint::Type::max_volume;
    c.vmax = j.at("vmax");
  } else {
    throw std::invalid_argument("unknown constraint type: " + t);
  }
  c.dims = j.at("dims").get<std::vector<int>>();
  return c;
}

inline json scenario_to_json(const PlanProblem& prob, const SamplerConfig& sampler,
                             const MPCConfig& mpc) {
  json cons = json::array();
  for (const auto& c : prob.constraints) cons.push_back(constraint_to_json(c));
  return {{"model", net_to_json(prob.sys.step)},
          {"n", prob.sys.n},
          {"m", prob.sys.m},
          {"x_goal", prob.x_goal},
          {"q_weights", prob.q_weights},
          {"r_weights", prob.r_weights},
          {"constraints", std::move(cons)},
          {"penalty", prob.penalty},
          {"horizon", prob.horizon},
          {"u_lo", prob.u_lo},
          {"u_hi", prob.u_hi},
          {"eps", prob.eps},
          {"sampler",
           {{"population", sampler.population},
            {"elite_frac", sampler.elite_frac},
            {"iterations", sampler.iterations},
            {"init_std", sampler.init_std},
            {"smoothing", sampler.smoothing},
            {"refine_iters", sampler.refine_iters},
            {"seed", sampler.seed}}},
          {"mpc",
           {{"replan_period", mpc.replan_period},
            {"total_steps", mpc.total_steps},
            {"dist_action", mpc.dist_action},
            {"dist_state", mpc.dist_state},
            {"goal_dims", mpc.goal_dims},
            {"goal_radius", mpc.goal_radius},
            {"seed", mpc.seed}}}};
}

inline void scenario_from_json(const json& j, PlanProblem& prob, SamplerConfig& sampler,
                               MPCConfig& mpc) {
  prob.sys.step = net_from_json(j.at("model"));
  prob.sys.n = j.at("n");
  prob.sys.m = j.at("m");
  prob.x_goal = j.at("x_goal").get<Vec<double>>();
  prob.q_weights = j.at("q_weights").get<Vec<double>>();
  prob.r_weights = j.at("r_weights").get<Vec<double>>();
  prob.constraints.clear();
  for (const auto& cj : j.at("constraints")) prob.constraints.push_back(constraint_from_json(cj));
  prob.penalty = j.at("penalty");
  prob.horizon = j.at("horizon");
  prob.u_lo = j.at("u_lo").get<Vec<double>>();
  prob.u_hi = j.at("u_hi").get<Vec<double>>();
  prob.eps = j.at("eps");
  const auto& sj = j.at("sampler");
  sampler.population = sj.at("population");
  sampler.elite_frac = sj.at("elite_frac");
  sampler.iterations = sj.at("iterations");
  sampler.init_std = sj.at("init_std");
  sampler.smoothing = sj.at("smoothing");
  sampler.refine_iters = sj.at("refine_iters");
  sampler.seed = sj.at("seed");
  const auto& mj = j.at("mpc");
  mpc.replan_period = mj.at("replan_period");
  mpc.total_steps = mj.at("total_steps");
  mpc.dist_action = mj.at("dist_action");
  mpc.dist_state = mj.at("dist_state");
  mpc.goal_dims = mj.at("goal_dims").get<std::vector<int>>();
  mpc.goal_radius = mj.at("goal_radius");
  mpc.seed = mj.at("seed");
  prob.validate();
  sampler.validate();
  mpc.validate(prob.horizon);
}

}  // namespace reach
