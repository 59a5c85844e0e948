#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reach/interval.hpp"
#include "reach/linalg.hpp"
#include "reach/neural.hpp"
#include "reach/taylor_model.hpp"
#include "reach/tube.hpp"

// Validated continuous-time flowpipes: truncated Picard iteration on the
// fixed TM shape, remainder validation by contraction, and per-step
// preconditioning with a windowed symbolic remainder queue (wrapping control).

namespace reach {

template <class S>
struct VectorField {
  int n = 0;
  bool neural = false;
  // Symbolic evaluation on TM rows; for neural fields installed by the
  // factory via per-call certification of the tau-frozen input TM.
  std::function<std::vector<TMExpr<S>>(const std::vector<TMExpr<S>>&)> tm_rhs;
  // Pointwise evaluation (simulation / oracles).
  std::function<void(const Vec<S>&, Vec<S>&)> rhs;
  // Interval evaluation (naive baseline, a-priori enclosures).
  std::function<IntervalBox<S>(const IntervalBox<S>&)> iv_rhs;
};

struct FlowpipeParams {
  double h = 0.01;
  int steps = 100;
  int order = 2;                 // Picard truncation order k, 1 or 2
  double eps_init = 1e-4;        // initial remainder radius guess
  int refine_rounds = 3;         // post-acceptance shrink rounds R
  double enlargement = 2.0;      // radius growth factor on rejection
  int max_enlargements = 20;
  int window = 4;                // symbolic remainder queue size M

  void validate() const {
    if (h <= 0 || steps <= 0 || order < 1 || order > 2 || eps_init <= 0 ||
        enlargement <= 1.0 || refine_rounds < 0 || max_enlargements < 0 || window < 0)
      throw std::invalid_argument("FlowpipeParams: invalid configuration");
  }
};

template <class S>
struct StepResult {
  bool ok = false;
  QuasiQuadTM<S> segment;       // certified over tau in [0,h] when ok
  LinearTM<S> endpoint;         // exact-integral enclosure at tau = h
  double contraction_ratio = 0; // last |I1| / |I0| radius ratio when failed
  std::string reason;
};

namespace detail {

// tau-frozen TMExpr rows -> LinearTM over z (time and cross terms folded
// into the remainder), used to certify neural fields on the current iterate.
template <class S>
LinearTM<S> freeze_tau(const std::vector<TMExpr<S>>& rows) {
  using std::abs;
  int n = static_cast<int>(rows.size());
  int nz = rows[0].nz();
  const double h = rows[0].h;
  LinearTM<S> tm;
  tm.c = Vec<S>(static_cast<size_t>(n));
  tm.A = Mat<S>(n, nz + 1);
  tm.remainder = IntervalBox<S>(n);
  tm.time_horizon = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& e = rows[static_cast<size_t>(i)];
    tm.c[static_cast<size_t>(i)] = e.c;
    for (int j = 0; j < nz; ++j) tm.A(i, j) = e.az[static_cast<size_t>(j)];
    Interval<S> rem = e.rem;
    rem = iv_add(rem, iv_mul(Interval<S>{S(0.0), S(h)}, Interval<S>{e.at, e.at}));
    S bmag = e.abs_b() * S(h);
    rem = iv_add(rem, Interval<S>{-bmag, bmag});
    tm.remainder[i] = rem;
  }
  return tm;
}

template <class S>
std::vector<TMExpr<S>> rows_from_linear_tm(const LinearTM<S>& tm, int nz, double h) {
  std::vector<TMExpr<S>> rows;
  rows.reserve(static_cast<size_t>(tm.n()));
  for (int i = 0; i < tm.n(); ++i) {
    TMExpr<S> e(tm.c[static_cast<size_t>(i)], nz, h);
    for (int j = 0; j < nz; ++j) e.az[static_cast<size_t>(j)] = tm.A(i, j);
    e.rem = tm.remainder[i];
    rows.push_back(std::move(e));
  }
  return rows;
}

}  // namespace detail

// Builds the symbolic rhs of a neural continuous-time field: each call
// tau-freezes the iterate, certifies the network on it, and returns the
// certified affine TM as rows over the same z variables.
template <class S>
VectorField<S> make_neural_field(const MLPNet<S>& net) {
  VectorField<S> f;
  f.n = net.output_dim();
  f.neural = true;
  f.tm_rhs = [net](const std::vector<TMExpr<S>>& rows) {
    LinearTM<S> frozen = detail::freeze_tau(rows);
    LinearTM<S> out = certify_tm_input(net, frozen);
    return detail::rows_from_linear_tm(out, rows[0].nz(), rows[0].h);
  };
  f.rhs = [net](const Vec<S>& x, Vec<S>& dx) { dx = net.forward(x); };
  f.iv_rhs = [net](const IntervalBox<S>& x) { return interval_forward(net, x); };
  return f;
}

// Truncated k-order Picard iteration: g_{j+1} = seed + Int_0^tau f(g_j) ds on
// the fixed quasi-quadratic shape. Returns the polynomial part only (the
// provisional remainder is discarded; soundness comes from remainder_picard).
template <class S>
QuasiQuadTM<S> poly_picard(const VectorField<S>& field, const LinearTM<S>& seed, double h, int k) {
  int nz = seed.nz();
  auto seed_rows = detail::rows_from_linear_tm(seed, nz, h);
  auto g = seed_rows;
  for (int j = 0; j < k; ++j) {
    auto fg = field.tm_rhs(g);
    for (size_t i = 0; i < g.size(); ++i) g[i] = seed_rows[i] + tme_integrate(fg[i]);
  }
  for (auto& row : g) {
    if (!is_finite(row.c)) throw std::runtime_error("poly_picard: non-finite coefficients");
    row.rem = Interval<S>{S(0.0), S(0.0)};
  }
  return tm_from_rows(g);
}

// Remainder validation: find I0 with seed + Int f(p_k (+) I0) subset
// p_k (+) I1, I1 subset I0 (contraction). Accepted I1 is then replayed for up
// to R rounds, shrinking toward the minimal contractive interval.
template <class S>
StepResult<S> remainder_picard(const VectorField<S>& field, const LinearTM<S>& seed,
                               const QuasiQuadTM<S>& p_k, double h, const FlowpipeParams& prm) {
  using std::abs;
  using std::max;
  int n = p_k.n(), nz = p_k.nz();
  auto seed_rows = detail::rows_from_linear_tm(seed, nz, h);
  auto pk_rows = tm_rows(p_k);

  // One Picard replay of p_k with candidate remainder I0; returns induced I1.
  auto replay = [&](const IntervalBox<S>& i0) {
    auto cand = pk_rows;
    for (int i = 0; i < n; ++i) cand[static_cast<size_t>(i)].rem = i0[i];
    auto fg = field.tm_rhs(cand);
    IntervalBox<S> i1(n);
    for (int i = 0; i < n; ++i) {
      TMExpr<S> diff = (seed_rows[static_cast<size_t>(i)] + tme_integrate(fg[static_cast<size_t>(i)])) -
                       pk_rows[static_cast<size_t>(i)];
      i1[i] = diff.total_range();
    }
    return i1;
  };
  auto contained = [&](const IntervalBox<S>& inner, const IntervalBox<S>& outer) {
    for (int i = 0; i < n; ++i)
      if (!inner[i].subset_of(outer[i])) return false;
    return true;
  };

  IntervalBox<S> i0(n), i1(n);
  for (int i = 0; i < n; ++i) i0[i] = Interval<S>::symmetric(S(prm.eps_init));
  // Enlargement is per dimension and adaptive: each rejected dimension grows
  // toward (and beyond) its induced remainder, so rows with small induced
  // remainders (e.g. held-input rows with zero dynamics) are not inflated by
  // dimensions that need more room.
  auto enlarge = [&](Interval<S>& cur, const Interval<S>& induced) {
    Interval<S> hull = induced.valid() ? iv_hull(cur, induced) : cur;
    S mid = hull.mid(), rad = hull.rad() * S(prm.enlargement);
    cur = {mid - rad, mid + rad};
  };
  bool accepted = false;
  for (int attempt = 0; attempt <= prm.max_enlargements; ++attempt) {
    bool threw = false;
    try {
      i1 = replay(i0);
    } catch (const std::exception&) {
      threw = true;
    }
    if (!threw && i1.finite() && contained(i1, i0)) {
      accepted = true;
      break;
    }
    for (int i = 0; i < n; ++i)
      enlarge(i0[i], (!threw && i1.size() == n) ? i1[i] : Interval<S>{});
  }

  StepResult<S> result;
  if (!accepted) {
    double worst = 0;
    for (int i = 0; i < n; ++i) {
      double r0 = value(i0[i].rad());
      double r1 = i1.size() == n && i1[i].valid() ? value(i1[i].rad()) : 0.0;
      if (r0 > 0) worst = max(worst, r1 / r0);
    }
    result.contraction_ratio = worst;
    result.reason = "remainder not contractive after max enlargements (reduce h)";
    return result;
  }

  // Shrink: every accepted I1 is itself a valid candidate; replay converges
  // monotonically toward the minimal contractive interval.
  for (int round = 0; round < prm.refine_rounds; ++round) {
    IntervalBox<S> next;
    try {
      next = replay(i1);
    } catch (const std::exception&) {
      break;
    }
    if (!(next.finite() && contained(next, i1))) break;
    i1 = next;
  }

  result.ok = true;
  result.segment = p_k;
  result.segment.remainder = i1;
  result.segment.time_horizon = h;
  assert_tm_shape(result.segment);

  // Endpoint enclosure by exact integration at tau = h: the certified segment
  // contains the solution for all tau in [0,h], so f evaluated on it bounds
  // xdot pointwise and x(h) = seed + Int_0^h f. Integrating the field TM in
  // closed form keeps the deterministic tau^2 part exact instead of widening
  // the propagated remainder by O(h^2) per step.
  result.endpoint.c = Vec<S>(static_cast<size_t>(n));
  result.endpoint.A = Mat<S>(n, nz + 1);
  result.endpoint.remainder = IntervalBox<S>(n);
  result.endpoint.time_horizon = 0.0;
  bool exact_ok = false;
  try {
    auto cand = pk_rows;
    for (int i = 0; i < n; ++i) cand[static_cast<size_t>(i)].rem = i1[i];
    auto fg = field.tm_rhs(cand);
    const S hh = S(h);
    for (int i = 0; i < n; ++i) {
      const auto& f = fg[static_cast<size_t>(i)];
      const auto& s0 = seed_rows[static_cast<size_t>(i)];
      result.endpoint.c[static_cast<size_t>(i)] = s0.c + hh * (f.c + f.at * hh * S(0.5));
      for (int j = 0; j < nz; ++j)
        result.endpoint.A(i, j) = s0.az[static_cast<size_t>(j)] +
                                  hh * (f.az[static_cast<size_t>(j)] +
                                        f.bz[static_cast<size_t>(j)] * hh * S(0.5));
      Interval<S> rem = iv_mul(Interval<S>{hh, hh}, f.rem);
      rem = iv_add(rem, s0.rem);
      result.endpoint.remainder[i] = rem;
    }
    exact_ok = result.endpoint.remainder.finite();
    for (int i = 0; exact_ok && i < n; ++i)
      if (!is_finite(result.endpoint.c[static_cast<size_t>(i)])) exact_ok = false;
  } catch (const std::exception&) {
    exact_ok = false;
  }
  if (!exact_ok) {
    // Fallback: evaluate the certified segment at tau = h.
    for (int i = 0; i < n; ++i) {
      result.endpoint.c[static_cast<size_t>(i)] =
          result.segment.c[static_cast<size_t>(i)] + result.segment.A(i, nz) * S(h);
      for (int j = 0; j < nz; ++j)
        result.endpoint.A(i, j) = result.segment.A(i, j) + result.segment.B(i, j) * S(h);
      result.endpoint.A(i, nz) = S(0.0);
      result.endpoint.remainder[i] = i1[i];
    }
  }
  return result;
}

// --------------------------------------------------------------------------
// Wrapping control: the reachable set is kept as
//   x = c + G0 y0 + Q1 y1 + ... + Qm ym,   y* in unit boxes,
// with a dense main generator block G0 (never intervalized) and a queue of at
// most max(M,1) flowed remainder blocks. Overflow folds the two oldest blocks
// into one diagonal block (their interval hull), which keeps getting flowed.
// Everything stays in original state coordinates, so the cumulative map of
// the preconditioning step is the identity.
template <class S>
struct SymbolicState {
  Vec<S> c;
  Mat<S> g0;                  // n x p0
  std::deque<Mat<S>> queue;   // n rows each; column counts may vary
  int window = 4;

  int n() const { return static_cast<int>(c.size()); }
  int nz() const {
    int k = g0.cols;
    for (const auto& q : queue) k += q.cols;
    return k;
  }
  int capacity() const { return window > 0 ? window : 1; }
};

template <class S>
SymbolicState<S> init_symbolic_state(const IntervalBox<S>& x0, int window) {
  SymbolicState<S> s;
  s.c = box_center(x0);
  s.g0 = Mat<S>::diagonal(box_radius(x0));
  s.window = window;
  return s;
}

// Enforces the queue capacity by folding aged-out blocks. Preferred fold:
// absorb the aged-out block into the main generator's own frame
// (Q y' subset G0 box(rowabs(G0^-1 Q))), scaling G0's columns so the folded
// mass keeps rotating with the flow instead of being re-boxed in state
// coordinates every generation. Falls back to a plain box hull added to the
// newest block's diagonal when G0 is non-square or ill-conditioned.
template <class S>
void fold_overflow(SymbolicState<S>& s) {
  using std::abs;
  const int n = s.n(), p0 = s.g0.cols;
  while (static_cast<int>(s.queue.size()) > s.capacity()) {
    Mat<S> a = std::move(s.queue.front());
    s.queue.pop_front();
    Mat<S>& newest = s.queue.back();
    bool folded = false;
    if (p0 == n) {
      Mat<S> x;
      if (mat_solve(s.g0, a, x)) {
        Vec<S> r(static_cast<size_t>(n));
        double worst = 0;
        for (int j = 0; j < n; ++j) {
          r[static_cast<size_t>(j)] = row_abs_sum(x, j) * S(1.0 + 1e-12);
          worst = std::max(worst, value(r[static_cast<size_t>(j)]));
        }
        if (worst <= 1.0) {
          // Residual of the floating-point solve, boxed into the newest block.
          Mat<S> e = matmul(s.g0, x);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < a.cols; ++j) e(i, j) -= a(i, j);
          for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) s.g0(i, j) *= S(1.0) + r[static_cast<size_t>(j)];
          for (int i = 0; i < n; ++i) newest(i, i) += row_abs_sum(e, i) * S(1.0 + 1e-12);
          folded = true;
        }
      }
    }
    if (!folded)
      for (int i = 0; i < n; ++i) newest(i, i) += row_abs_sum(a, i);
  }
}

// Affine seed TM of the current set, over nz = p0 + sum of queue widths.
template <class S>
LinearTM<S> symbolic_seed(const SymbolicState<S>& sym) {
  int n = sym.n(), nz = sym.nz(), p0 = sym.g0.cols;
  LinearTM<S> tm;
  tm.c = sym.c;
  tm.A = Mat<S>(n, nz + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p0; ++j) tm.A(i, j) = sym.g0(i, j);
  int off = p0;
  for (const auto& q : sym.queue) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < q.cols; ++j) tm.A(i, off + j) = q(i, j);
    off += q.cols;
  }
  tm.remainder = IntervalBox<S>(n);
  tm.time_horizon = 0.0;
  return tm;
}

// Advances the symbolic state across one certified step: slices the endpoint
// map's columns into flowed generator blocks, centers the step remainder and
// pushes its radius as a fresh diagonal block. On overflow the oldest block
// is intervalized (per-row abs sums, a sound box hull) and absorbed into the
// newest diagonal block, so each unit of remainder mass is boxed once per
// window generation rather than on every step.
template <class S>
SymbolicState<S> symbolic_step(const SymbolicState<S>& sym, const LinearTM<S>& endpoint) {
  using std::abs;
  int n = sym.n(), p0 = sym.g0.cols;
  int nz = endpoint.nz();
  if (nz != sym.nz()) throw std::logic_error("symbolic_step: variable count mismatch");

  SymbolicState<S> out;
  out.window = sym.window;
  out.c = Vec<S>(static_cast<size_t>(n));
  out.g0 = Mat<S>(n, p0);
  for (int i = 0; i < n; ++i) {
    out.c[static_cast<size_t>(i)] =
        endpoint.c[static_cast<size_t>(i)] + endpoint.remainder[i].mid();
    for (int j = 0; j < p0; ++j) out.g0(i, j) = endpoint.A(i, j);
  }
  int off = p0;
  for (size_t b = 0; b < sym.queue.size(); ++b) {
    int k = sym.queue[b].cols;
    Mat<S> q(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) q(i, j) = endpoint.A(i, off + j);
    out.queue.push_back(std::move(q));
    off += k;
  }
  Mat<S> fresh(n, n);
  for (int i = 0; i < n; ++i) fresh(i, i) = endpoint.remainder[i].rad();
  out.queue.push_back(std::move(fresh));

  fold_overflow(out);
  return out;
}

// Box enclosure of the symbolic state (used at control boundaries and as the
// per-step intervalized ablation).
template <class S>
IntervalBox<S> symbolic_box(const SymbolicState<S>& sym) {
  int n = sym.n();
  IntervalBox<S> b(n);
  for (int i = 0; i < n; ++i) {
    S r = row_abs_sum(sym.g0, i);
    for (const auto& q : sym.queue) r += row_abs_sum(q, i);
    b[i] = {sym.c[static_cast<size_t>(i)] - r, sym.c[static_cast<size_t>(i)] + r};
  }
  b.check_divergence();
  return b;
}

// Full continuous-time reachability loop. Box i >= 1 covers [(i-1)h, ih];
// box 0 is X0.
template <class S>
ReachTube<S> ct_reach(const VectorField<S>& field, const IntervalBox<S>& x0,
                      const FlowpipeParams& prm) {
  prm.validate();
  ReachTube<S> tube;
  tube.push(x0, 0.0, 0.0);
  SymbolicState<S> sym = init_symbolic_state(x0, prm.window);
  for (int step = 0; step < prm.steps; ++step) {
    LinearTM<S> seed = symbolic_seed(sym);
    StepResult<S> res;
    try {
      QuasiQuadTM<S> pk = poly_picard(field, seed, prm.h, prm.order);
      res = remainder_picard(field, seed, pk, prm.h, prm);
    } catch (const std::exception& e) {
      res.ok = false;
      res.reason = e.what();
    }
    if (!res.ok) {
      tube.mark_failed(step, res.reason);
      return tube;
    }
    IntervalBox<S> box = tm_eval_interval(res.segment, Interval<S>{S(0.0), S(prm.h)});
    tube.push(box, step * prm.h, (step + 1) * prm.h);
    if (box.diverged) {
      tube.mark_failed(step, "diverged box");
      return tube;
    }
    sym = symbolic_step(sym, res.endpoint);
  }
  return tube;
}

}  // namespace reach
