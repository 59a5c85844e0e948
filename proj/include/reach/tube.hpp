#pragma once

#include <string>
#include <vector>

#include "reach/interval.hpp"

namespace reach {

// Time-indexed sequence of box enclosures. Box 0 is the initial set; box i
// covers the time window [t_lo[i], t_hi[i]] (a point in discrete time).
template <class S>
struct ReachTube {
  std::vector<IntervalBox<S>> boxes;
  std::vector<double> t_lo;
  std::vector<double> t_hi;
  bool diverged = false;       // true from the first diverged/failed step on
  int failed_step = -1;        // -1 if completed
  std::string failure_reason;

  int steps() const { return static_cast<int>(boxes.size()); }

  void push(const IntervalBox<S>& b, double tlo, double thi) {
    boxes.push_back(b);
    t_lo.push_back(tlo);
    t_hi.push_back(thi);
    if (b.diverged) diverged = true;
  }

  void mark_failed(int step, const std::string& reason) {
    diverged = true;
    failed_step = step;
    failure_reason = reason;
  }
};

using Tube = ReachTube<double>;

// Tube-volume proxy: sum of per-step box width sums; +inf once diverged.
template <class S>
S tube_volume(const ReachTube<S>& tube) {
  if (tube.diverged) return S(std::numeric_limits<double>::infinity());
  S acc(0.0);
  for (const auto& b : tube.boxes) acc += box_volume_proxy(b);
  return acc;
}

}  // namespace reach
