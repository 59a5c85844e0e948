#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "reach/closed_loop.hpp"
#include "reach/dt_reach.hpp"
#include "reach/fields.hpp"
#include "reach/io.hpp"
#include "reach/ode.hpp"
#include "reach/refine.hpp"
#include "reach/rng.hpp"

// Certified training: multi-step prediction / tracking losses, a reachability
// regularizer built on the certified engines, curriculum schedules over
// horizon and perturbation radius, and a toy-scale Adam loop. All losses are
// scalar-generic so the refine-module forward-mode gradients apply.

namespace reach {

// One rollout: states x_0..x_T, actions u_0..u_{T-1}, optional per-step
// references for controller training.
struct Episode {
  std::vector<Vec<double>> states;
  std::vector<Vec<double>> actions;
  std::vector<Vec<double>> y_ref;

  int length() const { return static_cast<int>(actions.size()); }

  void validate() const {
    if (states.size() != actions.size() + 1 || states.empty())
      throw std::invalid_argument("Episode: length mismatch");
    for (const auto& s : states)
      if (s.size() != states.front().size()) throw std::invalid_argument("Episode: state dims");
    for (const auto& u : actions)
      if (u.size() != actions.front().size()) throw std::invalid_argument("Episode: action dims");
    if (!y_ref.empty() && y_ref.size() != actions.size())
      throw std::invalid_argument("Episode: reference length mismatch");
  }
};

// Time-increasing weights for the prediction of x_{t+1}, t = 0..T_h-1.
inline Vec<double> horizon_weights(int t_h) {
  Vec<double> w(static_cast<size_t>(t_h));
  for (int t = 0; t < t_h; ++t)
    w[static_cast<size_t>(t)] = 1.0 + static_cast<double>(t + 1) / t_h;
  return w;
}

// ---------------------------------------------------------------------------
// Losses.

// Autoregressive multi-step prediction loss:
//   (1 / (M' T_h)) sum_m sum_t w_t || x_{t+1} - xhat_{t+1} ||^2,
// with xhat_0 = x_0 and xhat advanced by the model on logged actions.
template <class S>
S pred_loss(const MLPNet<S>& model, const std::vector<Episode>& batch, int t_h,
            const Vec<double>& weights) {
  if (batch.empty() || t_h < 1 || weights.size() != static_cast<size_t>(t_h))
    throw std::invalid_argument("pred_loss: bad batch/horizon/weights");
  S acc(0.0);
  for (const auto& ep : batch) {
    if (ep.length() < t_h) throw std::invalid_argument("pred_loss: episode shorter than T_h");
    Vec<S> xhat = to_scalar<S>(ep.states.front());
    for (int t = 0; t < t_h; ++t) {
      Vec<S> in = xhat;
      for (double u : ep.actions[static_cast<size_t>(t)]) in.push_back(S(u));
      xhat = model.forward(in);
      S err(0.0);
      const auto& target = ep.states[static_cast<size_t>(t + 1)];
      for (size_t j = 0; j < xhat.size(); ++j) {
        S d = xhat[j] - S(target[j]);
        err += d * d;
      }
      acc += S(weights[static_cast<size_t>(t)]) * err;
    }
  }
  return acc / S(static_cast<double>(batch.size()) * t_h);
}

// Volume of the predicted part of a tube: the initial box is the input, not a
// prediction, so it is excluded from the regularized volume.
template <class S>
S predicted_volume(const ReachTube<S>& tube) {
  S v(0.0);
  for (size_t k = 1; k < tube.boxes.size(); ++k) v += box_volume_proxy(tube.boxes[k]);
  return v;
}

// Reachability regularizer: (1/M') sum_m log(1 + V_m), with V_m the predicted
// tube volume of dt_reach from the eps-ball around x_0^m under the episode's
// actions. A diverged tube contributes the finite cap instead (and bumps the
// counter when one is supplied), keeping gradients finite early in training.
template <class S>
S reach_loss(const MLPNet<S>& model, const std::vector<Episode>& batch, double eps, int t_h,
             double cap, int* diverged_count = nullptr, const DTReachParams& prm = {}) {
  if (batch.empty() || t_h < 1) throw std::invalid_argument("reach_loss: bad batch/horizon");
  const int n = static_cast<int>(batch.front().states.front().size());
  const int m = static_cast<int>(batch.front().actions.front().size());
  DTSystem<S> sys;
  sys.step = model;
  sys.n = n;
  sys.m = m;
  S acc(0.0);
  for (const auto& ep : batch) {
    if (ep.length() < t_h) throw std::invalid_argument("reach_loss: episode shorter than T_h");
    auto x0 = box_from_center(to_scalar<S>(ep.states.front()), S(eps));
    std::vector<Vec<S>> acts;
    acts.reserve(static_cast<size_t>(t_h));
    for (int t = 0; t < t_h; ++t) acts.push_back(to_scalar<S>(ep.actions[static_cast<size_t>(t)]));
    auto tube = dt_reach(sys, x0, acts, prm);
    if (tube.diverged) {
      acc += S(cap);
      if (diverged_count) ++*diverged_count;
    } else {
      using std::log;
      acc += log(S(1.0) + predicted_volume(tube));
    }
  }
  return acc / S(static_cast<double>(batch.size()));
}

// Tracking loss for a controller against logged (state, action) pairs:
//   (1 / (M' T_t)) sum_m sum_t w_t ( ||u_t - uhat_t||^2 + gamma ||x_{t+1} - xhat_{t+1}||^2 ),
// where uhat_t = controller(xhat_t [, y_ref_t]) is held over the control
// interval (zero-order hold) and xhat advances by fixed-step RK4 on the
// dynamics proxy. A blown-up rollout contributes the cap.
template <class S, class Body>
S track_loss(const MLPNet<S>& controller, Body&& dyn, const std::vector<Episode>& batch, int t_t,
             const Vec<double>& weights, double gamma, double delta, int rk4_substeps = 4,
             double cap = 1e6, int* blowup_count = nullptr) {
  if (batch.empty() || t_t < 1 || weights.size() != static_cast<size_t>(t_t) || delta <= 0.0 ||
      rk4_substeps < 1)
    throw std::invalid_argument("track_loss: bad configuration");
  S acc(0.0);
  for (const auto& ep : batch) {
    if (ep.length() < t_t) throw std::invalid_argument("track_loss: episode shorter than T_t");
    Vec<S> xhat = to_scalar<S>(ep.states.front());
    S ep_acc(0.0);
    bool blown = false;
    for (int t = 0; t < t_t && !blown; ++t) {
      Vec<S> in = xhat;
      if (!ep.y_ref.empty())
        for (double r : ep.y_ref[static_cast<size_t>(t)]) in.push_back(S(r));
      Vec<S> uhat = controller.forward(in);
      S err_u(0.0);
      const auto& u_log = ep.actions[static_cast<size_t>(t)];
      for (size_t j = 0; j < uhat.size(); ++j) {
        S d = uhat[j] - S(u_log[j]);
        err_u += d * d;
      }
      std::function<void(const Vec<S>&, Vec<S>&)> rhs = [&](const Vec<S>& x, Vec<S>& dx) {
        dyn(x, uhat, dx);
      };
      for (int ss = 0; ss < rk4_substeps; ++ss)
        xhat = rk4_step<S>(rhs, xhat, delta / rk4_substeps);
      S err_x(0.0);
      const auto& x_log = ep.states[static_cast<size_t>(t + 1)];
      for (size_t j = 0; j < xhat.size(); ++j) {
        S d = xhat[j] - S(x_log[j]);
        err_x += d * d;
      }
      ep_acc += S(weights[static_cast<size_t>(t)]) * (err_u + S(gamma) * err_x);
      if (!is_finite(ep_acc)) blown = true;
    }
    if (blown) {
      acc += S(cap);
      if (blowup_count) ++*blowup_count;
    } else {
      acc += ep_acc;
    }
  }
  return acc / S(static_cast<double>(batch.size()) * t_t);
}

// Closed-loop reachability regularizer for controller training: cl_reach from
// the eps-ball around each episode start, with the (fixed) plant dynamics.
template <class S, class Body>
S ctl_reach_loss(const MLPNet<S>& controller, Body&& plant, const std::vector<Episode>& batch,
                 double eps, int t_h, int n, int l, double delta, int k_atomic, double cap,
                 int* diverged_count = nullptr, const FlowpipeParams& fp_base = {}) {
  if (batch.empty() || t_h < 1) throw std::invalid_argument("ctl_reach_loss: bad batch/horizon");
  ClosedLoopSpec<S> spec;
  spec.n = n;
  spec.l = l;
  spec.ctl_steps = t_h;
  spec.k_atomic = k_atomic;
  spec.fp = fp_base;
  spec.fp.h = delta / k_atomic;
  spec.controller = controller;
  spec.dynamics = make_augmented_field<S>(n, l, plant);
  S acc(0.0);
  for (const auto& ep : batch) {
    if (!ep.y_ref.empty()) {
      spec.y_ref.assign(ep.y_ref.begin(), ep.y_ref.begin() + t_h);
    }
    auto x0 = box_from_center(to_scalar<S>(ep.states.front()), S(eps));
    auto tube = cl_reach(spec, x0);
    if (tube.diverged) {
      acc += S(cap);
      if (diverged_count) ++*diverged_count;
    } else {
      using std::log;
      acc += log(S(1.0) + predicted_volume(tube));
    }
  }
  return acc / S(static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------
// Curriculum schedules.

// Logarithmic horizon ramp with exact anchors: T_h(0) = 1, T_h(S-1) = T_max,
// non-decreasing in between.
inline int horizon_schedule(int s, int iters, int t_h_max) {
  if (s < 0 || s >= iters) throw std::invalid_argument("horizon_schedule: iter out of range");
  if (iters <= 1) return t_h_max;
  double u = std::log(1.0 + static_cast<double>(s) * (std::numbers::e - 1.0) / (iters - 1));
  int t = std::max(1, static_cast<int>(std::llround(t_h_max * u)));
  return std::min(t, t_h_max);
}

// Linear radius decay with exact endpoints eps_0 -> eps_final.
inline double eps_schedule(int s, int iters, double eps0, double eps_final) {
  if (s < 0 || s >= iters) throw std::invalid_argument("eps_schedule: iter out of range");
  if (eps0 < eps_final) throw std::invalid_argument("eps_schedule: eps0 < eps_final");
  if (iters <= 1) return eps_final;
  return eps_final + (eps0 - eps_final) * (1.0 - static_cast<double>(s) / (iters - 1));
}

// ---------------------------------------------------------------------------
// Optimizer and training loops.

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vec<double> m, v;
  int t = 0;

  void step(Vec<double>& params, const Vec<double>& grad) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    if (grad.size() != params.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, t);
    double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t j = 0; j < params.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
      params[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
};

struct TrainConfig {
  int horizon_max = 4;      // T_h^max
  double eps0 = 0.1;        // initial perturbation radius
  double eps_final = 0.01;  // target radius
  double lambda = 0.0;      // reachability penalty weight
  double gamma = 0.1;       // tracking-state weight
  int iters = 50;           // S
  int batch = 4;            // M'
  double lr = 1e-3;
  double reach_cap = 20.0;  // per-episode capped log-loss on divergence
  bool curriculum = true;
  uint64_t seed = 0;
  DTReachParams dt_prm;

  void validate() const {
    if (horizon_max < 1 || eps0 < eps_final || eps_final < 0.0 || lambda < 0.0 || gamma < 0.0 ||
        iters < 1 || batch < 1 || lr <= 0.0 || reach_cap <= 0.0)
      throw std::invalid_argument("TrainConfig: invalid configuration");
  }
};

struct TrainLogRow {
  int iter = 0;
  int t_h = 0;
  double eps = 0.0;
  double l_pred = 0.0;
  double l_reach = 0.0;
  double l_total = 0.0;
  int diverged_count = 0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  std::string to_csv() const {
    std::string out = "iter,T_h,eps,L_pred,L_reach,L_total,diverged_count\n";
    for (const auto& r : rows) {
      out += std::to_string(r.iter) + ',' + std::to_string(r.t_h) + ',' + fmt_g17(r.eps) + ',' +
             fmt_g17(r.l_pred) + ',' + fmt_g17(r.l_reach) + ',' + fmt_g17(r.l_total) + ',' +
             std::to_string(r.diverged_count) + '\n';
    }
    return out;
  }
};

struct TrainResult {
  MLPNet<double> net;
  TrainLog log;
};

namespace detail {

inline std::vector<Episode> sample_batch(const std::vector<Episode>& dataset, int batch,
                                         Rng& rng) {
  std::vector<Episode> out;
  out.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b)
    out.push_back(dataset[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(dataset.size()) - 1))]);
  return out;
}

}  // namespace detail

// Certified training of a discrete-time dynamics net:
//   L_total = L_pred + lambda * L_reach,
// with the horizon/radius curriculum and Adam updates. Deterministic for a
// fixed seed: the minibatch stream, loss evaluations and updates are all
// sequential with fixed order.
inline TrainResult train_dt_dyn(const MLPNet<double>& init, const TrainConfig& cfg,
                                const std::vector<Episode>& dataset) {
  cfg.validate();
  init.validate();
  if (dataset.empty()) throw std::invalid_argument("train_dt_dyn: empty dataset");
  for (const auto& ep : dataset) {
    ep.validate();
    if (ep.length() < cfg.horizon_max)
      throw std::invalid_argument("train_dt_dyn: episode shorter than T_h^max");
  }

  Vec<double> params = net_params(init);
  Adam opt;
  opt.lr = cfg.lr;
  Rng rng(cfg.seed);
  TrainResult res;
  for (int s = 0; s < cfg.iters; ++s) {
    int t_h = cfg.curriculum ? horizon_schedule(s, cfg.iters, cfg.horizon_max) : cfg.horizon_max;
    double eps = cfg.curriculum ? eps_schedule(s, cfg.iters, cfg.eps0, cfg.eps_final)
                                : cfg.eps_final;
    auto batch = detail::sample_batch(dataset, cfg.batch, rng);
    Vec<double> w = horizon_weights(t_h);

    int diverged = 0;
    MLPNet<double> cur = net_with_params<double>(init, params);
    double lp = pred_loss(cur, batch, t_h, w);
    double lr_ = cfg.lambda > 0.0
                     ? reach_loss(cur, batch, eps, t_h, cfg.reach_cap, &diverged, cfg.dt_prm)
                     : 0.0;
    double lt = lp + cfg.lambda * lr_;
    res.log.rows.push_back({s, t_h, eps, lp, lr_, lt, diverged});
    if (!std::isfinite(lt))
      throw std::runtime_error("train_dt_dyn: non-finite loss at iter " + std::to_string(s) +
                               " (L_pred=" + fmt_g17(lp) + ", L_reach=" + fmt_g17(lr_) + ")");

    auto objective = [&](const auto& p) {
      using S = typename std::decay_t<decltype(p)>::value_type;
      MLPNet<S> model = net_with_params<S>(init, p);
      S l = pred_loss(model, batch, t_h, w);
      if (cfg.lambda > 0.0)
        l += S(cfg.lambda) *
             reach_loss(model, batch, eps, t_h, cfg.reach_cap, nullptr, cfg.dt_prm);
      return l;
    };
    Gradient g = grad_forward(objective, params);
    opt.step(params, g.g);
  }
  res.net = net_with_params<double>(init, params);
  return res;
}

// Certified training of a CT controller against a fixed plant:
//   L_total = L_track + lambda * L_reach(cl_reach),
// same curriculum and optimizer. `plant` is a scalar-generic ODE body
// plant(x, u, dx) used both by the RK4 tracking proxy and the certified
// closed-loop engine.
template <class Body>
TrainResult train_ct_ctl(const MLPNet<double>& init, const TrainConfig& cfg,
                         const std::vector<Episode>& dataset, Body&& plant, int n, int l,
                         double delta, int k_atomic = 1, int rk4_substeps = 4,
                         const FlowpipeParams& fp_base = {}) {
  cfg.validate();
  init.validate();
  if (dataset.empty()) throw std::invalid_argument("train_ct_ctl: empty dataset");
  for (const auto& ep : dataset) {
    ep.validate();
    if (ep.length() < cfg.horizon_max)
      throw std::invalid_argument("train_ct_ctl: episode shorter than T_h^max");
  }

  Vec<double> params = net_params(init);
  Adam opt;
  opt.lr = cfg.lr;
  Rng rng(cfg.seed);
  TrainResult res;
  for (int s = 0; s < cfg.iters; ++s) {
    int t_h = cfg.curriculum ? horizon_schedule(s, cfg.iters, cfg.horizon_max) : cfg.horizon_max;
    double eps = cfg.curriculum ? eps_schedule(s, cfg.iters, cfg.eps0, cfg.eps_final)
                                : cfg.eps_final;
    auto batch = detail::sample_batch(dataset, cfg.batch, rng);
    Vec<double> w = horizon_weights(t_h);

    int diverged = 0;
    MLPNet<double> cur = net_with_params<double>(init, params);
    double ltr = track_loss(cur, plant, batch, t_h, w, cfg.gamma, delta, rk4_substeps);
    double lr_ = cfg.lambda > 0.0
                     ? ctl_reach_loss(cur, plant, batch, eps, t_h, n, l, delta, k_atomic,
                                      cfg.reach_cap, &diverged, fp_base)
                     : 0.0;
    double lt = ltr + cfg.lambda * lr_;
    res.log.rows.push_back({s, t_h, eps, ltr, lr_, lt, diverged});
    if (!std::isfinite(lt))
      throw std::runtime_error("train_ct_ctl: non-finite loss at iter " + std::to_string(s) +
                               " (L_track=" + fmt_g17(ltr) + ", L_reach=" + fmt_g17(lr_) + ")");

    auto objective = [&](const auto& p) {
      using S = typename std::decay_t<decltype(p)>::value_type;
      MLPNet<S> model = net_with_params<S>(init, p);
      S loss = track_loss(model, plant, batch, t_h, w, cfg.gamma, delta, rk4_substeps);
      if (cfg.lambda > 0.0)
        loss += S(cfg.lambda) * ctl_reach_loss(model, plant, batch, eps, t_h, n, l, delta,
                                               k_atomic, cfg.reach_cap, nullptr, fp_base);
      return loss;
    };
    Gradient g = grad_forward(objective, params);
    opt.step(params, g.g);
  }
  res.net = net_with_params<double>(init, params);
  return res;
}

// Synthetic data: random-action rollouts of a DT one-step map.
template <class Step>
std::vector<Episode> make_dt_dataset(Step&& step, int n, int m, int episodes, int length,
                                     double x_scale, double u_scale, Rng& rng) {
  std::vector<Episode> out;
  out.reserve(static_cast<size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Episode ep;
    Vec<double> x(static_cast<size_t>(n));
    for (auto& v : x) v = rng.uniform(-x_scale, x_scale);
    ep.states.push_back(x);
    for (int t = 0; t < length; ++t) {
      Vec<double> u(static_cast<size_t>(m));
      for (auto& v : u) v = rng.uniform(-u_scale, u_scale);
      x = step(x, u);
      ep.actions.push_back(std::move(u));
      ep.states.push_back(x);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace reach
