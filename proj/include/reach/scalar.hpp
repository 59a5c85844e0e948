#pragma once

#include <cmath>
#include <cstdint>

// Scalar abstraction: the engine is templated on a scalar type S which is
// either plain double or a forward-mode dual number carrying one tangent
// direction. All comparisons and branch decisions go through value(), so a
// dual-mode pass takes exactly the branches of the primal pass.

namespace reach {

struct Dual {
  double v = 0.0;  // primal value
  double d = 0.0;  // tangent (directional derivative)

  Dual() = default;
  Dual(double value) : v(value), d(0.0) {}
  Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }
inline Dual& operator/=(Dual& a, Dual b) { a = a / b; return a; }

inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }
inline bool operator<=(Dual a, Dual b) { return a.v <= b.v; }
inline bool operator>=(Dual a, Dual b) { return a.v >= b.v; }
inline bool operator==(Dual a, Dual b) { return a.v == b.v; }

inline Dual sin(Dual a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
inline Dual cos(Dual a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }
inline Dual tanh(Dual a) {
  double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}
inline Dual exp(Dual a) { double e = std::exp(a.v); return {e, e * a.d}; }
inline Dual log(Dual a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(Dual a) {
  double s = std::sqrt(a.v);
  return {s, a.v > 0.0 ? a.d / (2.0 * s) : 0.0};
}
inline Dual abs(Dual a) { return a.v < 0.0 ? Dual{-a.v, -a.d} : a; }
inline Dual min(Dual a, Dual b) { return a.v <= b.v ? a : b; }
inline Dual max(Dual a, Dual b) { return a.v >= b.v ? a : b; }

inline double value(double x) { return x; }
inline double value(Dual x) { return x.v; }
inline double deriv(double) { return 0.0; }
inline double deriv(Dual x) { return x.d; }

template <class S> bool is_finite(S x) { return std::isfinite(value(x)); }

// Flags a primal evaluation that sits on the boundary of a frozen branch
// (e.g. a ReLU preactivation bound exactly at zero), where the gradient is
// only a subgradient. Thread-local so parallel batch items stay independent.
inline thread_local bool g_branch_boundary = false;

inline void note_branch_boundary() { g_branch_boundary = true; }
inline bool take_branch_boundary() {
  bool b = g_branch_boundary;
  g_branch_boundary = false;
  return b;
}

}  // namespace reach
