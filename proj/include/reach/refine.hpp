#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "reach/dt_reach.hpp"
#include "reach/linalg.hpp"
#include "reach/parallel.hpp"
#include "reach/scalar.hpp"
#include "reach/tube.hpp"

// Conservatism reduction: parallelized input splitting with per-step hulls,
// and gradient-based refinement of differentiable inputs (initial-set
// placement, action sequences, network weights).

namespace reach {

// Axis-aligned grid split of the initial set: counts[d] parts along
// dimension d, product = total parts.
struct SplitPlan {
  std::vector<int> counts;

  static constexpr long long kMaxParts = 1 << 20;

  static SplitPlan all_one(int n_dims) {
    SplitPlan p;
    p.counts.assign(static_cast<size_t>(n_dims), 1);
    return p;
  }

  // Parses "2x2x2"-style per-dimension counts.
  static SplitPlan parse(const std::string& s) {
    SplitPlan p;
    size_t pos = 0;
    while (pos <= s.size()) {
      size_t next = s.find('x', pos);
      std::string tok = s.substr(pos, next == std::string::npos ? next : next - pos);
      if (tok.empty()) throw std::invalid_argument("SplitPlan: empty count in \"" + s + "\"");
      p.counts.push_back(std::stoi(tok));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    return p;
  }

  // Quadrotor preset: split the roll/pitch/yaw angle dimensions (6, 7, 8 in
  // the 12-dim state layout) evenly; parts must be a perfect cube.
  static SplitPlan rpy(int n_dims, int parts) {
    if (n_dims < 9) throw std::invalid_argument("SplitPlan::rpy: needs at least 9 dimensions");
    int k = static_cast<int>(std::llround(std::cbrt(static_cast<double>(parts))));
    if (k < 1 || k * k * k != parts)
      throw std::invalid_argument("SplitPlan::rpy: parts must be a perfect cube");
    SplitPlan p = all_one(n_dims);
    p.counts[6] = p.counts[7] = p.counts[8] = k;
    return p;
  }

  long long total_parts() const {
    long long t = 1;
    for (int c : counts) {
      if (c < 1) throw std::invalid_argument("SplitPlan: counts must be >= 1");
      t *= c;
      if (t > kMaxParts) throw std::invalid_argument("SplitPlan: total part count overflow");
    }
    return t;
  }

  void validate(int n_dims) const {
    if (static_cast<int>(counts.size()) != n_dims)
      throw std::invalid_argument("SplitPlan: dimension mismatch");
    (void)total_parts();
  }
};

// Grid partition of x0: disjoint interiors, exact union (adjacent parts share
// the identical edge value; the last edge is exactly the upper endpoint).
template <class S>
std::vector<IntervalBox<S>> split_box(const IntervalBox<S>& x0, const SplitPlan& plan) {
  plan.validate(x0.size());
  const int n = x0.size();
  std::vector<std::vector<S>> edges(static_cast<size_t>(n));
  for (int d = 0; d < n; ++d) {
    int k = plan.counts[static_cast<size_t>(d)];
    auto& e = edges[static_cast<size_t>(d)];
    e.resize(static_cast<size_t>(k + 1));
    e.front() = x0[d].lo;
    e.back() = x0[d].hi;
    for (int i = 1; i < k; ++i)
      e[static_cast<size_t>(i)] =
          x0[d].lo + (x0[d].hi - x0[d].lo) * (static_cast<double>(i) / k);
  }
  long long total = plan.total_parts();
  std::vector<IntervalBox<S>> parts;
  parts.reserve(static_cast<size_t>(total));
  std::vector<int> idx(static_cast<size_t>(n), 0);
  for (long long p = 0; p < total; ++p) {
    IntervalBox<S> b(n);
    for (int d = 0; d < n; ++d) {
      const auto& e = edges[static_cast<size_t>(d)];
      int i = idx[static_cast<size_t>(d)];
      b[d] = {e[static_cast<size_t>(i)], e[static_cast<size_t>(i + 1)]};
    }
    parts.push_back(std::move(b));
    for (int d = n - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < plan.counts[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  return parts;
}

// Runs `engine` (any IntervalBox -> ReachTube call) on every sub-box in
// parallel and returns the per-step hull, reduced in ascending sub-box index
// order for determinism. Sound: each sub-tube is sound and the parts cover
// x0 exactly. Any diverged sub-tube marks the hull diverged.
template <class S, class Engine>
ReachTube<S> reach_with_splitting(Engine&& engine, const IntervalBox<S>& x0,
                                  const SplitPlan& plan) {
  auto parts = split_box(x0, plan);
  std::vector<ReachTube<S>> subs(parts.size());
  parallel_for(static_cast<int>(parts.size()), [&](int i) {
    try {
      subs[static_cast<size_t>(i)] = engine(parts[static_cast<size_t>(i)]);
    } catch (const std::exception& e) {
      subs[static_cast<size_t>(i)].mark_failed(0, e.what());
    }
  });

  int steps = subs.front().steps();
  bool any_div = false;
  int div_step = std::numeric_limits<int>::max();
  std::string reason;
  for (size_t i = 0; i < subs.size(); ++i) {
    steps = std::min(steps, subs[i].steps());
    if (subs[i].diverged) {
      any_div = true;
      int fs = subs[i].failed_step >= 0 ? subs[i].failed_step : subs[i].steps();
      if (fs < div_step) {
        div_step = fs;
        reason = "sub-box " + std::to_string(i) + ": " + subs[i].failure_reason;
      }
    }
  }

  ReachTube<S> hull;
  for (int k = 0; k < steps; ++k) {
    IntervalBox<S> b = subs.front().boxes[static_cast<size_t>(k)];
    for (size_t i = 1; i < subs.size(); ++i)
      b = box_hull(b, subs[i].boxes[static_cast<size_t>(k)]);
    hull.push(b, subs.front().t_lo[static_cast<size_t>(k)],
              subs.front().t_hi[static_cast<size_t>(k)]);
  }
  if (any_div) hull.mark_failed(div_step, reason);
  return hull;
}

// ---------------------------------------------------------------------------
// Gradients of scalar objectives over a flat parameter vector.

enum class GradMethod { forward_dual, finite_difference };

inline std::string grad_method_name(GradMethod m) {
  return m == GradMethod::forward_dual ? "forward_dual" : "finite_difference";
}

struct Gradient {
  Vec<double> g;
  GradMethod method = GradMethod::forward_dual;
  // True if a frozen discrete branch sat exactly on its decision boundary
  // during evaluation (e.g. an activation bound at zero): the returned vector
  // is then only a subgradient of the piecewise-smooth objective.
  bool subgradient = false;
};

// Forward-mode gradient: one dual-number pass per direction. `f` must be
// callable on Vec<double> and Vec<Dual>. Every comparison inside the engines
// goes through value(), and dual primal values are bit-identical to the plain
// pass, so each dual pass retraces exactly the primal branches — discrete
// choices (activation patterns, remainder acceptance, enlargement counts)
// are frozen by construction.
template <class F>
Gradient grad_forward(F&& f, const Vec<double>& x) {
  (void)take_branch_boundary();
  double f0 = value(f(x));
  bool sub = take_branch_boundary();
  if (!std::isfinite(f0)) throw std::runtime_error("grad_forward: objective non-finite");
  Gradient out;
  out.method = GradMethod::forward_dual;
  out.g.assign(x.size(), 0.0);
  for (size_t j = 0; j < x.size(); ++j) {
    Vec<Dual> xd(x.begin(), x.end());
    xd[j].d = 1.0;
    Dual r = f(xd);
    sub = take_branch_boundary() || sub;
    if (!std::isfinite(r.v) || !std::isfinite(r.d))
      throw std::runtime_error("grad_forward: non-finite derivative");
    out.g[j] = r.d;
  }
  out.subgradient = sub;
  return out;
}

// Central finite differences with a relative step.
template <class F>
Gradient grad_fd(F&& f, const Vec<double>& x, double rel_step = 1e-5) {
  (void)take_branch_boundary();
  double f0 = value(f(x));
  bool sub = take_branch_boundary();
  if (!std::isfinite(f0)) throw std::runtime_error("grad_fd: objective non-finite");
  Gradient out;
  out.method = GradMethod::finite_difference;
  out.subgradient = sub;
  out.g.assign(x.size(), 0.0);
  Vec<double> xp = x;
  for (size_t j = 0; j < x.size(); ++j) {
    double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    double fp = value(f(xp));
    xp[j] = x[j] - h;
    double fm = value(f(xp));
    xp[j] = x[j];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_fd: objective non-finite near x");
    out.g[j] = (fp - fm) / (2.0 * h);
  }
  return out;
}

template <class F>
Gradient grad_objective(F&& f, const Vec<double>& x, GradMethod m) {
  return m == GradMethod::forward_dual ? grad_forward(f, x) : grad_fd(f, x);
}

// ---------------------------------------------------------------------------
// Tube-volume gradients for discrete-time reachability.

enum class GradTarget { x0_center, actions, weights };

namespace detail {

template <class P>
using scalar_of = typename std::decay_t<P>::value_type;

template <class S>
std::vector<Vec<S>> cast_actions(const std::vector<Vec<double>>& actions) {
  std::vector<Vec<S>> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(to_scalar<S>(a));
  return out;
}

}  // namespace detail

// d(tube_volume)/d(target) of dt_reach. Parameter layouts (flat vectors):
//   x0_center — the n center coordinates (radii held fixed);
//   actions   — the action sequence, step-major, m entries per step;
//   weights   — net_params order of the one-step map.
inline Gradient grad_tube_volume(const DTSystem<double>& sys, const IntervalBox<double>& x0,
                                 const std::vector<Vec<double>>& actions, GradTarget target,
                                 GradMethod method = GradMethod::forward_dual,
                                 const DTReachParams& prm = {}) {
  sys.validate();
  const Vec<double> center = box_center(x0);
  const Vec<double> radius = box_radius(x0);

  auto eval = [&](const auto& p) {
    using S = detail::scalar_of<decltype(p)>;
    DTSystem<S> s;
    s.n = sys.n;
    s.m = sys.m;
    Vec<S> c = to_scalar<S>(center);
    auto acts = detail::cast_actions<S>(actions);
    switch (target) {
      case GradTarget::x0_center:
        c = Vec<S>(p.begin(), p.end());
        s.step = net_cast<S>(sys.step);
        break;
      case GradTarget::actions: {
        s.step = net_cast<S>(sys.step);
        size_t k = 0;
        for (auto& a : acts)
          for (auto& v : a) v = p[k++];
        if (k != p.size()) throw std::invalid_argument("grad_tube_volume: action layout mismatch");
        break;
      }
      case GradTarget::weights:
        s.step = net_with_params<S>(sys.step, p);
        break;
    }
    return tube_volume(dt_reach(s, box_from_center(c, to_scalar<S>(radius)), acts, prm));
  };

  Vec<double> x;
  switch (target) {
    case GradTarget::x0_center:
      x = center;
      break;
    case GradTarget::actions:
      for (const auto& a : actions) x.insert(x.end(), a.begin(), a.end());
      break;
    case GradTarget::weights:
      x = net_params(sys.step);
      break;
  }
  return grad_objective(eval, x, method);
}

// ---------------------------------------------------------------------------
// Projected gradient descent with backtracking line search.

struct RefineParams {
  int iters = 20;
  double step0 = 1.0;       // initial line-search step
  double shrink = 0.5;      // backtracking factor
  double armijo = 1e-4;     // sufficient-decrease constant
  int max_backtracks = 30;
  GradMethod method = GradMethod::forward_dual;

  void validate() const {
    if (iters < 0 || step0 <= 0.0 || shrink <= 0.0 || shrink >= 1.0 || armijo < 0.0 ||
        max_backtracks < 1)
      throw std::invalid_argument("RefineParams: invalid configuration");
  }
};

struct RefineResult {
  Vec<double> x;                   // refined inputs (== initial if no progress)
  double initial_objective = 0.0;
  double objective = 0.0;          // always <= initial_objective
  bool progressed = false;         // at least one descent step accepted
  bool subgradient = false;        // some gradient was only a subgradient
  int accepted_steps = 0;
};

namespace detail {

inline Vec<double> project_box(Vec<double> x, const Vec<double>& lo, const Vec<double>& hi) {
  for (size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
  return x;
}

}  // namespace detail

// Minimizes f over the box [lo, hi] starting from x. Monotone by
// construction: a step is accepted only under Armijo sufficient decrease
// measured along the projected step, so the returned objective never exceeds
// the initial one. Unbounded dimensions use +/-inf bounds.
template <class F>
RefineResult gradient_refine(F&& f, Vec<double> x, const Vec<double>& lo, const Vec<double>& hi,
                             const RefineParams& prm = {}) {
  prm.validate();
  if (x.size() != lo.size() || x.size() != hi.size())
    throw std::invalid_argument("gradient_refine: bound dimension mismatch");
  for (size_t j = 0; j < x.size(); ++j)
    if (!(lo[j] <= hi[j])) throw std::invalid_argument("gradient_refine: empty bound box");
  x = detail::project_box(std::move(x), lo, hi);

  RefineResult res;
  double fx = value(f(x));
  if (!std::isfinite(fx)) throw std::runtime_error("gradient_refine: initial objective non-finite");
  res.initial_objective = fx;

  for (int it = 0; it < prm.iters; ++it) {
    Gradient g = grad_objective(f, x, prm.method);
    res.subgradient = res.subgradient || g.subgradient;
    double gnorm2 = dot(g.g, g.g);
    if (gnorm2 == 0.0) break;

    bool accepted = false;
    double t = prm.step0;
    for (int bt = 0; bt < prm.max_backtracks; ++bt, t *= prm.shrink) {
      Vec<double> xn(x.size());
      for (size_t j = 0; j < x.size(); ++j) xn[j] = x[j] - t * g.g[j];
      xn = detail::project_box(std::move(xn), lo, hi);
      double moved = dot(g.g, vsub(x, xn));
      // Fully clipped step: shrinking t cannot un-clip it, so stop searching.
      if (moved <= 0.0) break;
      double fn = value(f(xn));
      if (std::isfinite(fn) && fn <= fx - prm.armijo * moved) {
        x = std::move(xn);
        fx = fn;
        accepted = true;
        ++res.accepted_steps;
        break;
      }
    }
    if (!accepted) break;
  }
  res.x = std::move(x);
  res.objective = fx;
  res.progressed = res.accepted_steps > 0;
  return res;
}

}  // namespace reach
