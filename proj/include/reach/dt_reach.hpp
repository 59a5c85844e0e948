#pragma once

#include <stdexcept>
#include <vector>

#include "reach/flowpipe_ct.hpp"
#include "reach/neural.hpp"
#include "reach/parallel.hpp"
#include "reach/tube.hpp"

// Discrete-time stepwise reachability for planning dynamics: per-step CROWN
// certification of the action-frozen one-step map on the linear-TM
// representation, with the linear part carried across steps symbolically.

namespace reach {

template <class S>
struct DTSystem {
  MLPNet<S> step;  // one-step map over (x, u); affine maps via affine_net
  int n = 0;       // state dim
  int m = 0;       // action dim

  void validate() const {
    step.validate();
    if (n <= 0 || m < 0) throw std::invalid_argument("DTSystem: invalid dimensions");
    if (step.input_dim() != n + m || step.output_dim() != n)
      throw std::invalid_argument("DTSystem: one-step map shape mismatch");
  }
};

struct DTReachParams {
  int window = 4;  // symbolic remainder queue size
  // Ablation: rebuild the state TM from its box enclosure every step, instead
  // of carrying the certified linear part.
  bool rebuild_from_box = false;
};

// H-step reachability. Box k is the reachable enclosure after k steps
// (box 0 = X0); time stamps carry the step index.
template <class S>
ReachTube<S> dt_reach(const DTSystem<S>& sys, const IntervalBox<S>& x0,
                      const std::vector<Vec<S>>& actions, const DTReachParams& prm = {}) {
  sys.validate();
  if (x0.size() != sys.n) throw std::invalid_argument("dt_reach: X0 dimension mismatch");
  for (const auto& u : actions)
    if (static_cast<int>(u.size()) != sys.m)
      throw std::invalid_argument("dt_reach: action dimension mismatch");

  ReachTube<S> tube;
  tube.push(x0, 0.0, 0.0);
  SymbolicState<S> sym = init_symbolic_state(x0, prm.window);
  for (size_t k = 0; k < actions.size(); ++k) {
    MLPNet<S> frozen = sys.m > 0
                           ? freeze_trailing_inputs(sys.step, sys.n, actions[k])
                           : sys.step;
    LinearTM<S> in_tm = symbolic_seed(sym);
    LinearTM<S> out;
    try {
      out = certify_tm_input(frozen, in_tm);
    } catch (const std::exception& e) {
      tube.mark_failed(static_cast<int>(k), e.what());
      return tube;
    }
    if (!out.remainder.finite() || out.remainder.diverged) {
      tube.mark_failed(static_cast<int>(k), "diverged certification");
      return tube;
    }

    // Re-seed: carry the certified linear map as the new generator blocks and
    // push the certification remainder as a fresh diagonal block.
    int p0 = sym.g0.cols;
    SymbolicState<S> next;
    next.window = sym.window;
    next.c = Vec<S>(static_cast<size_t>(sys.n));
    next.g0 = Mat<S>(sys.n, p0);
    for (int i = 0; i < sys.n; ++i) {
      next.c[static_cast<size_t>(i)] = out.c[static_cast<size_t>(i)] + out.remainder[i].mid();
      for (int j = 0; j < p0; ++j) next.g0(i, j) = out.A(i, j);
    }
    int off = p0;
    for (const auto& q : sym.queue) {
      Mat<S> nq(sys.n, q.cols);
      for (int i = 0; i < sys.n; ++i)
        for (int j = 0; j < q.cols; ++j) nq(i, j) = out.A(i, off + j);
      next.queue.push_back(std::move(nq));
      off += q.cols;
    }
    Mat<S> fresh(sys.n, sys.n);
    for (int i = 0; i < sys.n; ++i) fresh(i, i) = out.remainder[i].rad();
    next.queue.push_back(std::move(fresh));
    fold_overflow(next);
    sym = std::move(next);

    IntervalBox<S> box = symbolic_box(sym);
    double t = static_cast<double>(k + 1);
    tube.push(box, t, t);
    if (box.diverged) {
      tube.mark_failed(static_cast<int>(k), "diverged box");
      return tube;
    }
    if (prm.rebuild_from_box) sym = init_symbolic_state(box, prm.window);
  }
  return tube;
}

// Elementwise dt_reach over a batch; results are identical to sequential
// evaluation (each element is independent and written to its own slot).
template <class S>
std::vector<ReachTube<S>> dt_reach_batch(const DTSystem<S>& sys,
                                         const std::vector<IntervalBox<S>>& x0s,
                                         const std::vector<std::vector<Vec<S>>>& action_seqs,
                                         const DTReachParams& prm = {}) {
  if (x0s.size() != action_seqs.size())
    throw std::invalid_argument("dt_reach_batch: batch size mismatch");
  std::vector<ReachTube<S>> out(x0s.size());
  parallel_for(static_cast<int>(x0s.size()), [&](int i) {
    try {
      out[static_cast<size_t>(i)] =
          dt_reach(sys, x0s[static_cast<size_t>(i)], action_seqs[static_cast<size_t>(i)], prm);
    } catch (const std::exception& e) {
      out[static_cast<size_t>(i)].mark_failed(0, e.what());
    }
  });
  return out;
}

// Naive per-step interval propagation of the same one-step map, used as the
// tightness baseline.
template <class S>
ReachTube<S> dt_interval_baseline(const DTSystem<S>& sys, const IntervalBox<S>& x0,
                                  const std::vector<Vec<S>>& actions) {
  sys.validate();
  ReachTube<S> tube;
  tube.push(x0, 0.0, 0.0);
  IntervalBox<S> box = x0;
  for (size_t k = 0; k < actions.size(); ++k) {
    MLPNet<S> frozen = sys.m > 0
                           ? freeze_trailing_inputs(sys.step, sys.n, actions[k])
                           : sys.step;
    box = interval_forward(frozen, box);
    double t = static_cast<double>(k + 1);
    tube.push(box, t, t);
    if (!box.finite() || box.diverged) {
      tube.mark_failed(static_cast<int>(k), "diverged box");
      return tube;
    }
  }
  return tube;
}

}  // namespace reach
