#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "reach/linalg.hpp"

// Benchmark dynamical systems as scalar-generic templates: the same ODE body
// is instantiated on doubles (simulation), dual numbers (gradients), interval
// vectors (the naive baseline) and TM expressions (flowpipe propagation).

namespace reach {

struct QuadrotorParams {
  double mass = 1.0;
  double gravity = 9.81;
  double jx = 0.01, jy = 0.01, jz = 0.02;
};

// State: [x y z, vx vy vz, phi theta psi, p q r]; input: [thrust, tx, ty, tz]
// with the yaw torque conventionally zero. Requires |theta| < pi/2.
template <class T>
void quadrotor_ode(const std::vector<T>& x, const std::vector<T>& u, const QuadrotorParams& prm,
                   std::vector<T>& dx) {
  using std::sin;
  using std::cos;
  dx.resize(12);
  const T& vx = x[3];
  const T& vy = x[4];
  const T& vz = x[5];
  const T& phi = x[6];
  const T& theta = x[7];
  const T& psi = x[8];
  const T& p = x[9];
  const T& q = x[10];
  const T& r = x[11];

  T sphi = sin(phi), cphi = cos(phi);
  T sth = sin(theta), cth = cos(theta);
  T spsi = sin(psi), cpsi = cos(psi);

  T b3x = cphi * sth * cpsi + sphi * spsi;
  T b3y = cphi * sth * spsi - sphi * cpsi;
  T b3z = cphi * cth;

  T a = u[0] * (1.0 / prm.mass);
  dx[0] = vx;
  dx[1] = vy;
  dx[2] = vz;
  dx[3] = a * b3x;
  dx[4] = a * b3y;
  dx[5] = a * b3z - prm.gravity;

  T tth = sth / cth;  // guarded by |theta| < pi/2
  dx[6] = p + sphi * tth * q + cphi * tth * r;
  dx[7] = cphi * q - sphi * r;
  dx[8] = (sphi / cth) * q + (cphi / cth) * r;

  dx[9] = q * r * ((prm.jy - prm.jz) / prm.jx) + u[1] * (1.0 / prm.jx);
  dx[10] = p * r * ((prm.jz - prm.jx) / prm.jy) + u[2] * (1.0 / prm.jy);
  dx[11] = p * q * ((prm.jx - prm.jy) / prm.jz) + u[3] * (1.0 / prm.jz);
}

inline Vec<double> quadrotor_hover_input(const QuadrotorParams& prm) {
  return {prm.mass * prm.gravity, 0.0, 0.0, 0.0};
}

struct SwarmParams {
  int agents = 6;
  int space_dim = 3;   // per-agent position dimension
  double coupling = 1.0;

  int state_dim() const { return agents * 2 * space_dim; }
  int input_dim() const { return agents * space_dim; }
};

// Point-mass agents with spring-like coupling to the swarm centre:
//   p_i' = v_i,  v_i' = u_i + k (pbar - p_i).
// Layout per agent: [p (space_dim), v (space_dim)].
template <class T>
void swarm_ode(const std::vector<T>& x, const std::vector<T>& u, const SwarmParams& prm,
               std::vector<T>& dx) {
  const int d = prm.space_dim, na = prm.agents;
  dx.resize(static_cast<size_t>(prm.state_dim()));
  std::vector<T> pbar;
  pbar.reserve(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    T acc = x[static_cast<size_t>(0 * 2 * d + j)];
    for (int i = 1; i < na; ++i) acc = acc + x[static_cast<size_t>(i * 2 * d + j)];
    pbar.push_back(acc * (1.0 / na));
  }
  for (int i = 0; i < na; ++i) {
    int base = i * 2 * d;
    for (int j = 0; j < d; ++j) {
      dx[static_cast<size_t>(base + j)] = x[static_cast<size_t>(base + d + j)];
      dx[static_cast<size_t>(base + d + j)] =
          u[static_cast<size_t>(i * d + j)] +
          (pbar[static_cast<size_t>(j)] - x[static_cast<size_t>(base + j)]) * prm.coupling;
    }
  }
}

struct ArmParams {
  int joints = 10;
  std::vector<double> link_lengths = std::vector<double>(10, 0.1);
};

// Acceleration-controlled planar arm: state [q (J), qdot (J)], input qddot.
template <class T>
void arm_ode(const std::vector<T>& x, const std::vector<T>& u, const ArmParams& prm,
             std::vector<T>& dx) {
  const int j = prm.joints;
  dx.resize(static_cast<size_t>(2 * j));
  for (int i = 0; i < j; ++i) {
    dx[static_cast<size_t>(i)] = x[static_cast<size_t>(j + i)];
    dx[static_cast<size_t>(j + i)] = u[static_cast<size_t>(i)];
  }
}

// Exact discrete double-integrator step of the arm.
template <class T>
std::vector<T> arm_dt(const std::vector<T>& x, const std::vector<T>& u, const ArmParams& prm,
                      double dt) {
  const int j = prm.joints;
  std::vector<T> nx(x.size());
  for (int i = 0; i < j; ++i) {
    nx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + x[static_cast<size_t>(j + i)] * dt +
                                 u[static_cast<size_t>(i)] * (0.5 * dt * dt);
    nx[static_cast<size_t>(j + i)] = x[static_cast<size_t>(j + i)] + u[static_cast<size_t>(i)] * dt;
  }
  return nx;
}

template <class T>
std::vector<T> eef_position(const std::vector<T>& q, const ArmParams& prm) {
  using std::sin;
  using std::cos;
  T angle = q[0];
  T ex = cos(angle) * prm.link_lengths[0];
  T ey = sin(angle) * prm.link_lengths[0];
  for (int i = 1; i < prm.joints; ++i) {
    angle = angle + q[static_cast<size_t>(i)];
    ex = ex + cos(angle) * prm.link_lengths[static_cast<size_t>(i)];
    ey = ey + sin(angle) * prm.link_lengths[static_cast<size_t>(i)];
  }
  return {ex, ey};
}

// Pedagogical fields used as closed-form oracles in tests.

// x' = lambda * x (componentwise)
template <class T>
void diag_linear_ode(const std::vector<T>& x, const std::vector<double>& lambda,
                     std::vector<T>& dx) {
  dx.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) dx[i] = x[i] * lambda[i];
}

// planar rotation: x' = -w y, y' = w x
template <class T>
void rotation_ode(const std::vector<T>& x, double w, std::vector<T>& dx) {
  dx.resize(2);
  dx[0] = x[1] * (-w);
  dx[1] = x[0] * w;
}

}  // namespace reach
