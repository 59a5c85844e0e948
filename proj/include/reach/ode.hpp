#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "reach/linalg.hpp"

namespace reach {

// Dormand-Prince 5(4) adaptive integrator, used as the ground-truth oracle
// for soundness checks (tolerance down to 1e-10).
inline Vec<double> integrate_dp45(
    const std::function<void(const Vec<double>&, Vec<double>&)>& rhs, Vec<double> x, double t_end,
    double tol = 1e-10) {
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  const size_t n = x.size();
  Vec<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), x5(n);
  double t = 0.0, h = t_end / 64.0;
  rhs(x, k1);
  int guard = 0;
  while (t < t_end) {
    if (++guard > 2000000) throw std::runtime_error("integrate_dp45: step guard exceeded");
    if (t + h > t_end) h = t_end - t;
    auto stage = [&](const std::vector<std::pair<double, const Vec<double>*>>& terms, Vec<double>& k) {
      for (size_t i = 0; i < n; ++i) {
        double acc = x[i];
        for (auto& [coef, kk] : terms) acc += h * coef * (*kk)[i];
        tmp[i] = acc;
      }
      rhs(tmp, k);
    };
    stage({{a21, &k1}}, k2);
    stage({{a31, &k1}, {a32, &k2}}, k3);
    stage({{a41, &k1}, {a42, &k2}, {a43, &k3}}, k4);
    stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}, k5);
    stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}, k6);
    for (size_t i = 0; i < n; ++i)
      x5[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs(x5, k7);
    double err = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      double sc = tol + tol * std::abs(x5[i]);
      err = std::max(err, std::abs(e) / sc);
    }
    if (err <= 1.0) {
      t += h;
      x = x5;
      k1 = k7;  // FSAL
    }
    double fac = 0.9 * std::pow(err > 1e-14 ? err : 1e-14, -0.2);
    if (fac > 5.0) fac = 5.0;
    if (fac < 0.2) fac = 0.2;
    h *= fac;
    (void)c2; (void)c3; (void)c4; (void)c5;
  }
  return x;
}

// Fixed-step classical RK4, templated so it can carry dual numbers (used as
// the differentiable rollout proxy in tracking losses).
template <class S>
Vec<S> rk4_step(const std::function<void(const Vec<S>&, Vec<S>&)>& rhs, const Vec<S>& x, double h) {
  const size_t n = x.size();
  Vec<S> k1(n), k2(n), k3(n), k4(n), tmp(n);
  rhs(x, k1);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + S(h * 0.5) * k1[i];
  rhs(tmp, k2);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + S(h * 0.5) * k2[i];
  rhs(tmp, k3);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + S(h) * k3[i];
  rhs(tmp, k4);
  Vec<S> out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = x[i] + S(h / 6.0) * (k1[i] + S(2.0) * k2[i] + S(2.0) * k3[i] + k4[i]);
  return out;
}

}  // namespace reach
