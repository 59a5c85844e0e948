#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "reach/linalg.hpp"
#include "reach/scalar.hpp"

// Sound interval arithmetic. Default rounding is round-to-nearest; an opt-in
// outward mode widens every primitive result by one representable step per
// endpoint (double scalars only — gradients are computed in nearest mode).

namespace reach {

inline thread_local bool g_outward_rounding = false;

struct ScopedOutwardRounding {
  bool prev;
  explicit ScopedOutwardRounding(bool on) : prev(g_outward_rounding) { g_outward_rounding = on; }
  ~ScopedOutwardRounding() { g_outward_rounding = prev; }
};

inline double step_down(double x) {
  return g_outward_rounding ? std::nextafter(x, -std::numeric_limits<double>::infinity()) : x;
}
inline double step_up(double x) {
  return g_outward_rounding ? std::nextafter(x, std::numeric_limits<double>::infinity()) : x;
}
inline Dual step_down(Dual x) { return x; }
inline Dual step_up(Dual x) { return x; }

template <class S>
struct Interval {
  S lo = S(0.0);
  S hi = S(0.0);

  Interval() = default;
  Interval(S point) : lo(point), hi(point) {}
  Interval(S l, S h) : lo(l), hi(h) {}

  static Interval symmetric(S radius) { return Interval(-radius, radius); }

  S width() const { return hi - lo; }
  S mid() const { return (lo + hi) * S(0.5); }
  S rad() const { return (hi - lo) * S(0.5); }
  bool valid() const { return value(lo) <= value(hi); }
  bool finite() const { return is_finite(lo) && is_finite(hi); }
  bool contains(S x) const { return value(lo) <= value(x) && value(x) <= value(hi); }
  bool subset_of(const Interval& o) const {
    return value(o.lo) <= value(lo) && value(hi) <= value(o.hi);
  }
};

using Iv = Interval<double>;

template <class S>
Interval<S> iv_add(const Interval<S>& a, const Interval<S>& b) {
  return {step_down(a.lo + b.lo), step_up(a.hi + b.hi)};
}

template <class S>
Interval<S> iv_sub(const Interval<S>& a, const Interval<S>& b) {
  return {step_down(a.lo - b.hi), step_up(a.hi - b.lo)};
}

template <class S>
Interval<S> iv_neg(const Interval<S>& a) {
  return {-a.hi, -a.lo};
}

template <class S>
Interval<S> iv_mul(const Interval<S>& a, const Interval<S>& b) {
  using std::min;
  using std::max;
  S p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return {step_down(min(min(p1, p2), min(p3, p4))), step_up(max(max(p1, p2), max(p3, p4)))};
}

template <class S>
Interval<S> iv_scale(S a, const Interval<S>& x) {
  if (value(a) >= 0.0) return {step_down(a * x.lo), step_up(a * x.hi)};
  return {step_down(a * x.hi), step_up(a * x.lo)};
}

template <class S>
Interval<S> iv_hull(const Interval<S>& a, const Interval<S>& b) {
  using std::min;
  using std::max;
  return {min(a.lo, b.lo), max(a.hi, b.hi)};
}

// Reciprocal; domain must exclude zero.
template <class S>
Interval<S> iv_inv(const Interval<S>& a) {
  if (value(a.lo) <= 0.0 && value(a.hi) >= 0.0)
    throw std::domain_error("iv_inv: interval contains zero");
  return {step_down(S(1.0) / a.hi), step_up(S(1.0) / a.lo)};
}

template <class S>
Interval<S> iv_div(const Interval<S>& a, const Interval<S>& b) {
  return iv_mul(a, iv_inv(b));
}

namespace detail {
// Sound sin over an interval via quadrant analysis on the primal values.
template <class S>
Interval<S> iv_sin_impl(const Interval<S>& x) {
  using std::sin;
  using std::min;
  using std::max;
  const double pi = 3.14159265358979323846;
  double wl = value(x.lo), wh = value(x.hi);
  if (wh - wl >= 2.0 * pi) return {S(-1.0), S(1.0)};
  S slo = sin(x.lo), shi = sin(x.hi);
  Interval<S> r{min(slo, shi), max(slo, shi)};
  // Check whether a max (pi/2 + 2k pi) or min (-pi/2 + 2k pi) lies inside.
  double kmaxf = std::floor((wh - pi / 2.0) / (2.0 * pi));
  if (pi / 2.0 + 2.0 * pi * kmaxf >= wl - 1e-15 && pi / 2.0 + 2.0 * pi * kmaxf <= wh + 1e-15)
    r.hi = S(1.0);
  double kminf = std::floor((wh + pi / 2.0) / (2.0 * pi));
  if (-pi / 2.0 + 2.0 * pi * kminf >= wl - 1e-15 && -pi / 2.0 + 2.0 * pi * kminf <= wh + 1e-15)
    r.lo = S(-1.0);
  // Guard against endpoint rounding: widen by one step in outward mode.
  r.lo = step_down(r.lo);
  r.hi = step_up(r.hi);
  return r;
}
}  // namespace detail

template <class S>
Interval<S> iv_sin(const Interval<S>& x) {
  return detail::iv_sin_impl(x);
}

template <class S>
Interval<S> iv_cos(const Interval<S>& x) {
  using std::cos;
  using std::min;
  using std::max;
  const double pi = 3.14159265358979323846;
  double wl = value(x.lo), wh = value(x.hi);
  if (wh - wl >= 2.0 * pi) return {S(-1.0), S(1.0)};
  S clo = cos(x.lo), chi = cos(x.hi);
  Interval<S> r{min(clo, chi), max(clo, chi)};
  // max at 2k pi, min at pi + 2k pi
  double kmaxf = std::floor(wh / (2.0 * pi));
  if (2.0 * pi * kmaxf >= wl - 1e-15 && 2.0 * pi * kmaxf <= wh + 1e-15) r.hi = S(1.0);
  double kminf = std::floor((wh - pi) / (2.0 * pi));
  if (pi + 2.0 * pi * kminf >= wl - 1e-15 && pi + 2.0 * pi * kminf <= wh + 1e-15) r.lo = S(-1.0);
  r.lo = step_down(r.lo);
  r.hi = step_up(r.hi);
  return r;
}

// Operator sugar so generic vector-field code works on intervals.
template <class S>
Interval<S> operator+(const Interval<S>& a, const Interval<S>& b) { return iv_add(a, b); }
template <class S>
Interval<S> operator-(const Interval<S>& a, const Interval<S>& b) { return iv_sub(a, b); }
template <class S>
Interval<S> operator*(const Interval<S>& a, const Interval<S>& b) { return iv_mul(a, b); }
template <class S>
Interval<S> operator/(const Interval<S>& a, const Interval<S>& b) { return iv_div(a, b); }
template <class S>
Interval<S> operator-(const Interval<S>& a) { return iv_neg(a); }
template <class S>
Interval<S> operator+(const Interval<S>& a, std::type_identity_t<S> s) { return {a.lo + s, a.hi + s}; }
template <class S>
Interval<S> operator+(std::type_identity_t<S> s, const Interval<S>& a) { return a + s; }
template <class S>
Interval<S> operator-(const Interval<S>& a, std::type_identity_t<S> s) { return {a.lo - s, a.hi - s}; }
template <class S>
Interval<S> operator-(std::type_identity_t<S> s, const Interval<S>& a) { return iv_neg(a) + s; }
template <class S>
Interval<S> operator*(const Interval<S>& a, std::type_identity_t<S> s) { return iv_scale(s, a); }
template <class S>
Interval<S> operator*(std::type_identity_t<S> s, const Interval<S>& a) { return iv_scale(s, a); }
template <class S>
Interval<S> operator/(const Interval<S>& a, std::type_identity_t<S> s) { return iv_scale(S(1.0) / s, a); }
template <class S>
Interval<S> operator/(std::type_identity_t<S> s, const Interval<S>& a) { return iv_scale(s, iv_inv(a)); }
template <class S>
Interval<S>& operator+=(Interval<S>& a, const Interval<S>& b) { a = iv_add(a, b); return a; }

template <class S>
Interval<S> sin(const Interval<S>& x) { return iv_sin(x); }
template <class S>
Interval<S> cos(const Interval<S>& x) { return iv_cos(x); }

// --------------------------------------------------------------------------
// IntervalBox: axis-aligned box, the universal set enclosure and I/O format.

template <class S>
struct IntervalBox {
  std::vector<Interval<S>> dims;
  bool diverged = false;

  IntervalBox() = default;
  explicit IntervalBox(int n) : dims(static_cast<size_t>(n)) {}

  int size() const { return static_cast<int>(dims.size()); }
  Interval<S>& operator[](int i) { return dims[static_cast<size_t>(i)]; }
  const Interval<S>& operator[](int i) const { return dims[static_cast<size_t>(i)]; }

  bool finite() const {
    if (diverged) return false;
    for (const auto& d : dims)
      if (!d.finite()) return false;
    return true;
  }

  void check_divergence() {
    if (!diverged && !finite()) diverged = true;
  }
};

using Box = IntervalBox<double>;

template <class S>
IntervalBox<S> box_from_center(const Vec<S>& center, const Vec<S>& radius) {
  if (center.size() != radius.size())
    throw std::invalid_argument("box_from_center: dimension mismatch");
  IntervalBox<S> b(static_cast<int>(center.size()));
  for (size_t j = 0; j < center.size(); ++j) {
    if (value(radius[j]) < 0.0) throw std::invalid_argument("box_from_center: negative radius");
    b.dims[j] = {center[j] - radius[j], center[j] + radius[j]};
  }
  return b;
}

template <class S>
IntervalBox<S> box_from_center(const Vec<S>& center, S radius) {
  return box_from_center(center, Vec<S>(center.size(), radius));
}

template <class S>
bool box_contains(const IntervalBox<S>& box, const Vec<S>& point) {
  if (static_cast<size_t>(box.size()) != point.size())
    throw std::invalid_argument("box_contains: dimension mismatch");
  if (box.diverged) return true;  // a diverged box encloses everything
  for (int j = 0; j < box.size(); ++j)
    if (!box[j].contains(point[static_cast<size_t>(j)])) return false;
  return true;
}

// Tube-volume proxy contribution: sum of per-dimension widths (not product).
template <class S>
S box_volume_proxy(const IntervalBox<S>& box) {
  if (box.diverged || !box.finite()) return S(std::numeric_limits<double>::infinity());
  S acc(0.0);
  for (const auto& d : box.dims) acc += d.width();
  return acc;
}

template <class S>
IntervalBox<S> box_hull(const IntervalBox<S>& a, const IntervalBox<S>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("box_hull: dimension mismatch");
  IntervalBox<S> h(a.size());
  h.diverged = a.diverged || b.diverged;
  for (int j = 0; j < a.size(); ++j) h[j] = iv_hull(a[j], b[j]);
  return h;
}

template <class S>
Vec<S> box_center(const IntervalBox<S>& b) {
  Vec<S> c(static_cast<size_t>(b.size()));
  for (int j = 0; j < b.size(); ++j) c[static_cast<size_t>(j)] = b[j].mid();
  return c;
}

template <class S>
Vec<S> box_radius(const IntervalBox<S>& b) {
  Vec<S> r(static_cast<size_t>(b.size()));
  for (int j = 0; j < b.size(); ++j) r[static_cast<size_t>(j)] = b[j].rad();
  return r;
}

// Interval matrix-vector product M * I for a box I.
template <class S>
IntervalBox<S> box_affine_image(const Mat<S>& m, const IntervalBox<S>& x) {
  IntervalBox<S> y(m.rows);
  y.diverged = x.diverged;
  for (int i = 0; i < m.rows; ++i) {
    Interval<S> acc{S(0.0), S(0.0)};
    for (int j = 0; j < m.cols; ++j) acc = iv_add(acc, iv_scale(m(i, j), x[j]));
    y[i] = acc;
  }
  y.check_divergence();
  return y;
}

}  // namespace reach
