#pragma once

#include <string>

#include "reach/flowpipe_ct.hpp"
#include "reach/tube.hpp"

// Naive continuous-time interval baseline: per-step interval Picard with no
// polynomial part. Each step finds an a-priori box enclosure B of the flow on
// [0, h] by enlarging until x + [0, h] f(B) is contained in B, records B for
// the window, and advances the endpoint to x + h f(B). Every box is an
// axis-aligned set, so rotation/shear re-wrapping happens at full strength.

namespace reach {

template <class S>
ReachTube<S> ct_interval_baseline(const VectorField<S>& field, const IntervalBox<S>& x0,
                                  const FlowpipeParams& prm) {
  prm.validate();
  if (x0.size() != field.n)
    throw std::invalid_argument("ct_interval_baseline: X0 dimension mismatch");
  ReachTube<S> tube;
  tube.push(x0, 0.0, 0.0);
  IntervalBox<S> x = x0;
  const Interval<S> tau{S(0.0), S(prm.h)};
  for (int k = 0; k < prm.steps; ++k) {
    // candidate enclosure: current box inflated per dimension
    IntervalBox<S> b = x;
    for (int d = 0; d < b.size(); ++d)
      b[d] = b[d] + Interval<S>{S(-prm.eps_init), S(prm.eps_init)};
    bool accepted = false;
    for (int round = 0; round <= prm.max_enlargements; ++round) {
      IntervalBox<S> fb = field.iv_rhs(b);
      if (!fb.finite()) break;
      IntervalBox<S> b1(b.size());
      bool inside = true;
      for (int d = 0; d < b.size(); ++d) {
        b1[d] = x[d] + tau * fb[d];
        if (!(b[d].lo <= b1[d].lo) || !(b1[d].hi <= b[d].hi)) inside = false;
      }
      if (inside) {
        b = b1;  // one contraction pass tightens the certified enclosure
        accepted = true;
        break;
      }
      // reject: grow each dimension around the induced enclosure
      for (int d = 0; d < b.size(); ++d) {
        Interval<S> hulld = iv_hull(b[d], b1[d]);
        S mid = hulld.mid();
        S rad = hulld.rad() * S(prm.enlargement);
        b[d] = {mid - rad, mid + rad};
      }
    }
    if (!accepted) {
      tube.mark_failed(k, "interval baseline: enclosure not contractive");
      return tube;
    }
    IntervalBox<S> fb = field.iv_rhs(b);
    IntervalBox<S> nx(x.size());
    for (int d = 0; d < x.size(); ++d) nx[d] = x[d] + fb[d] * Interval<S>{S(prm.h), S(prm.h)};
    tube.push(b, k * prm.h, (k + 1) * prm.h);
    x = std::move(nx);
    x.check_divergence();
    if (x.diverged) {
      tube.mark_failed(k, "interval baseline: diverged");
      return tube;
    }
  }
  return tube;
}

}  // namespace reach
