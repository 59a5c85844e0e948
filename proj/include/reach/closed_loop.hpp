#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reach/flowpipe_ct.hpp"
#include "reach/neural.hpp"

// Closed-loop continuous-time reachability under zero-order-hold neural
// feedback: alternate controller certification at control boundaries with
// flowpipe propagation of the (state, held control) augmented system.

namespace reach {

template <class S>
struct ClosedLoopSpec {
  VectorField<S> dynamics;   // augmented field over (x, u), udot = 0 rows
  MLPNet<S> controller;      // input (x [, ref]) -> u
  int n = 0;                 // state dim
  int l = 0;                 // control dim
  int ctl_steps = 1;         // number of control intervals
  int k_atomic = 1;          // atomic flowpipe steps per control interval
  std::vector<Vec<double>> y_ref;  // optional per-control-step reference bias
  FlowpipeParams fp;
  // Ablation: intervalize the state set before controller certification,
  // severing the shared-variable dependency between state and control TMs.
  bool intervalize_boundary = false;

  void validate() const {
    fp.validate();
    if (n <= 0 || l <= 0 || ctl_steps <= 0 || k_atomic <= 0)
      throw std::invalid_argument("ClosedLoopSpec: invalid dimensions");
    if (dynamics.n != n + l)
      throw std::invalid_argument("ClosedLoopSpec: dynamics must act on the augmented (x,u) state");
    if (controller.output_dim() != l)
      throw std::invalid_argument("ClosedLoopSpec: controller output dim mismatch");
    int ref_dim = y_ref.empty() ? 0 : static_cast<int>(y_ref.front().size());
    if (controller.input_dim() != n + ref_dim)
      throw std::invalid_argument("ClosedLoopSpec: controller input dim mismatch");
    if (!y_ref.empty() && static_cast<int>(y_ref.size()) != ctl_steps)
      throw std::invalid_argument("ClosedLoopSpec: reference sequence length mismatch");
  }
};

namespace detail {

// State-block TM at a control boundary: the full symbolic representation
// (main generator and every windowed remainder block) becomes the TM's linear
// part, so nothing is intervalized before controller certification.
template <class S>
LinearTM<S> boundary_state_tm(const SymbolicState<S>& aug, int n) {
  int nz = aug.nz();
  LinearTM<S> tm;
  tm.c = Vec<S>(aug.c.begin(), aug.c.begin() + n);
  tm.A = Mat<S>(n, nz + 1);
  tm.remainder = IntervalBox<S>(n);
  tm.time_horizon = 0.0;
  for (int i = 0; i < n; ++i) {
    int off = 0;
    for (int j = 0; j < aug.g0.cols; ++j) tm.A(i, off + j) = aug.g0(i, j);
    off += aug.g0.cols;
    for (const auto& q : aug.queue) {
      for (int j = 0; j < q.cols; ++j) tm.A(i, off + j) = q(i, j);
      off += q.cols;
    }
  }
  return tm;
}

}  // namespace detail

// Full closed-loop loop. Box 0 is the augmented initial set (state = X0,
// control block = certified first control range); box j >= 1 covers atomic
// step j over [(j-1)h, jh]. Control rows are constant within each interval.
template <class S>
ReachTube<S> cl_reach(const ClosedLoopSpec<S>& spec, const IntervalBox<S>& x0) {
  spec.validate();
  if (x0.size() != spec.n) throw std::invalid_argument("cl_reach: X0 dimension mismatch");
  const int n = spec.n, l = spec.l;
  const double h = spec.fp.h;

  ReachTube<S> tube;
  // Boundary state TM for the first interval: X0 on a fresh unit domain.
  LinearTM<S> x_tm = build_linear_tm(x0);
  SymbolicState<S> aug;
  aug.window = spec.fp.window;

  int global_step = 0;
  for (int i = 0; i < spec.ctl_steps; ++i) {
    std::vector<int> block_widths;  // carried symbolic blocks beyond the main one
    if (i > 0) {
      if (spec.intervalize_boundary) {
        IntervalBox<S> xb(n);
        auto full = symbolic_box(aug);
        for (int d = 0; d < n; ++d) xb[d] = full[d];
        x_tm = build_linear_tm(xb);
      } else {
        x_tm = detail::boundary_state_tm(aug, n);
        for (const auto& q : aug.queue) block_widths.push_back(q.cols);
      }
    }

    Vec<S> ref;
    if (!spec.y_ref.empty()) ref = to_scalar<S>(spec.y_ref[static_cast<size_t>(i)]);
    LinearTM<S> u_tm;
    try {
      u_tm = ctl_crown(x_tm, spec.controller, ref);
    } catch (const std::exception& e) {
      tube.mark_failed(global_step, std::string("controller certification failed: ") + e.what());
      return tube;
    }
    if (!u_tm.remainder.finite() || u_tm.remainder.diverged) {
      tube.mark_failed(global_step, "controller certification diverged");
      return tube;
    }

    // Stack into the augmented symbolic state over the shared variables: the
    // main block and every carried symbolic block get control rows from the
    // new control TM's matching columns; certification remainders become a
    // fresh diagonal block.
    int nz = x_tm.nz();
    int p0 = nz;
    for (int w : block_widths) p0 -= w;
    SymbolicState<S> next;
    next.window = spec.fp.window;
    next.c = Vec<S>(static_cast<size_t>(n + l));
    next.g0 = Mat<S>(n + l, p0);
    Mat<S> fresh(n + l, n + l);
    for (int d = 0; d < n; ++d) {
      next.c[static_cast<size_t>(d)] = x_tm.c[static_cast<size_t>(d)] + x_tm.remainder[d].mid();
      for (int j = 0; j < p0; ++j) next.g0(d, j) = x_tm.A(d, j);
      fresh(d, d) = x_tm.remainder[d].rad();
    }
    for (int d = 0; d < l; ++d) {
      next.c[static_cast<size_t>(n + d)] =
          u_tm.c[static_cast<size_t>(d)] + u_tm.remainder[d].mid();
      for (int j = 0; j < p0; ++j) next.g0(n + d, j) = u_tm.A(d, j);
      fresh(n + d, n + d) = u_tm.remainder[d].rad();
    }
    int off = p0;
    for (int w : block_widths) {
      Mat<S> q(n + l, w);
      for (int j = 0; j < w; ++j) {
        for (int d = 0; d < n; ++d) q(d, j) = x_tm.A(d, off + j);
        for (int d = 0; d < l; ++d) q(n + d, j) = u_tm.A(d, off + j);
      }
      next.queue.push_back(std::move(q));
      off += w;
    }
    next.queue.push_back(std::move(fresh));
    fold_overflow(next);
    aug = std::move(next);

    if (i == 0) tube.push(symbolic_box(aug), 0.0, 0.0);

    for (int j = 0; j < spec.k_atomic; ++j) {
      LinearTM<S> seed = symbolic_seed(aug);
      StepResult<S> res;
      try {
        QuasiQuadTM<S> pk = poly_picard(spec.dynamics, seed, h, spec.fp.order);
        res = remainder_picard(spec.dynamics, seed, pk, h, spec.fp);
      } catch (const std::exception& e) {
        res.ok = false;
        res.reason = e.what();
      }
      if (!res.ok) {
        tube.mark_failed(global_step, res.reason);
        return tube;
      }
      IntervalBox<S> box = tm_eval_interval(res.segment, Interval<S>{S(0.0), S(h)});
      tube.push(box, global_step * h, (global_step + 1) * h);
      ++global_step;
      if (box.diverged) {
        tube.mark_failed(global_step - 1, "diverged box");
        return tube;
      }
      aug = symbolic_step(aug, res.endpoint);
    }
  }
  return tube;
}

}  // namespace reach
