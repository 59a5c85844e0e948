#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reach/flowpipe_ct.hpp"
#include "reach/systems.hpp"

// Adapters that expose the benchmark systems (and generic ODE lambdas) as
// VectorField instances usable on scalars, intervals and TM rows alike.

namespace reach {

// Wraps a scalar-generic ODE body into a VectorField with a constant held
// input. `Body<T>` must be callable as body(x, u, dx) for T in
// {S, Interval<S>, TMExpr<S>}.
template <class S, class Body>
VectorField<S> make_analytic_field(int n, const Vec<double>& u_held, Body body) {
  VectorField<S> f;
  f.n = n;
  f.tm_rhs = [u_held, body](const std::vector<TMExpr<S>>& x) {
    int nz = x[0].nz();
    double h = x[0].h;
    std::vector<TMExpr<S>> u;
    u.reserve(u_held.size());
    for (double v : u_held) u.push_back(tme_const(S(v), nz, h));
    std::vector<TMExpr<S>> dx;
    body(x, u, dx);
    return dx;
  };
  f.rhs = [u_held, body](const Vec<S>& x, Vec<S>& dx) {
    Vec<S> u = to_scalar<S>(u_held);
    body(x, u, dx);
  };
  f.iv_rhs = [u_held, body](const IntervalBox<S>& x) {
    std::vector<Interval<S>> u;
    u.reserve(u_held.size());
    for (double v : u_held) u.push_back(Interval<S>{S(v), S(v)});
    std::vector<Interval<S>> dx;
    body(x.dims, u, dx);
    IntervalBox<S> out;
    out.dims = std::move(dx);
    out.check_divergence();
    return out;
  };
  return f;
}

template <class S>
VectorField<S> quadrotor_field(const QuadrotorParams& prm, const Vec<double>& u) {
  return make_analytic_field<S>(12, u, [prm](const auto& x, const auto& uu, auto& dx) {
    quadrotor_ode(x, uu, prm, dx);
  });
}

template <class S>
VectorField<S> swarm_field(const SwarmParams& prm, const Vec<double>& u) {
  return make_analytic_field<S>(prm.state_dim(), u, [prm](const auto& x, const auto& uu, auto& dx) {
    swarm_ode(x, uu, prm, dx);
  });
}

template <class S>
VectorField<S> arm_field(const ArmParams& prm, const Vec<double>& u) {
  return make_analytic_field<S>(2 * prm.joints, u, [prm](const auto& x, const auto& uu, auto& dx) {
    arm_ode(x, uu, prm, dx);
  });
}

template <class S>
VectorField<S> diag_linear_field(const std::vector<double>& lambda) {
  return make_analytic_field<S>(static_cast<int>(lambda.size()), Vec<double>{},
                                [lambda](const auto& x, const auto&, auto& dx) {
                                  diag_linear_ode(x, lambda, dx);
                                });
}

template <class S>
VectorField<S> rotation_field(double w) {
  return make_analytic_field<S>(2, Vec<double>{}, [w](const auto& x, const auto&, auto& dx) {
    rotation_ode(x, w, dx);
  });
}

template <class S>
VectorField<S> zero_field(int n) {
  return make_analytic_field<S>(n, Vec<double>{}, [n](const auto& x, const auto&, auto& dx) {
    dx.assign(static_cast<size_t>(n), x[0] * 0.0);
  });
}

// Augments a field over (x, u) into an (n + l)-dim field with udot = 0, for
// closed-loop propagation under zero-order hold.
template <class S, class Body>
VectorField<S> make_augmented_field(int n, int l, Body body) {
  VectorField<S> f;
  f.n = n + l;
  f.tm_rhs = [n, l, body](const std::vector<TMExpr<S>>& xu) {
    std::vector<TMExpr<S>> x(xu.begin(), xu.begin() + n);
    std::vector<TMExpr<S>> u(xu.begin() + n, xu.end());
    std::vector<TMExpr<S>> dx;
    body(x, u, dx);
    for (int i = 0; i < l; ++i) dx.push_back(tme_const(S(0.0), xu[0].nz(), xu[0].h));
    return dx;
  };
  f.rhs = [n, l, body](const Vec<S>& xu, Vec<S>& out) {
    Vec<S> x(xu.begin(), xu.begin() + n);
    Vec<S> u(xu.begin() + n, xu.end());
    Vec<S> dx;
    body(x, u, dx);
    for (int i = 0; i < l; ++i) dx.push_back(S(0.0));
    out = std::move(dx);
  };
  f.iv_rhs = [n, l, body](const IntervalBox<S>& xu) {
    std::vector<Interval<S>> x(xu.dims.begin(), xu.dims.begin() + n);
    std::vector<Interval<S>> u(xu.dims.begin() + n, xu.dims.end());
    std::vector<Interval<S>> dx;
    body(x, u, dx);
    for (int i = 0; i < l; ++i) dx.push_back(Interval<S>{S(0.0), S(0.0)});
    IntervalBox<S> out;
    out.dims = std::move(dx);
    out.check_divergence();
    return out;
  };
  return f;
}

// Neural continuous-time dynamics over (x, u), augmented with udot = 0. The
// network is certified per call on the tau-frozen augmented TM.
template <class S>
VectorField<S> make_neural_augmented_field(const MLPNet<S>& net, int n, int l) {
  if (net.input_dim() != n + l || net.output_dim() != n)
    throw std::invalid_argument("make_neural_augmented_field: dimension mismatch");
  VectorField<S> f;
  f.n = n + l;
  f.neural = true;
  f.tm_rhs = [net, n, l](const std::vector<TMExpr<S>>& xu) {
    LinearTM<S> frozen = detail::freeze_tau(xu);
    LinearTM<S> out = certify_tm_input(net, frozen);
    auto rows = detail::rows_from_linear_tm(out, xu[0].nz(), xu[0].h);
    for (int i = 0; i < l; ++i) rows.push_back(tme_const(S(0.0), xu[0].nz(), xu[0].h));
    return rows;
  };
  f.rhs = [net, n, l](const Vec<S>& xu, Vec<S>& out) {
    out = net.forward(xu);
    for (int i = 0; i < l; ++i) out.push_back(S(0.0));
  };
  f.iv_rhs = [net, n, l](const IntervalBox<S>& xu) {
    IntervalBox<S> dx = interval_forward(net, xu);
    for (int i = 0; i < l; ++i) dx.dims.push_back(Interval<S>{S(0.0), S(0.0)});
    return dx;
  };
  return f;
}

}  // namespace reach
