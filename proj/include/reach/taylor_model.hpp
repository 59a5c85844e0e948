#pragma once

#include <stdexcept>
#include <type_traits>
#include <vector>

#include "reach/interval.hpp"
#include "reach/linalg.hpp"

// Fixed-shape Taylor models over the normalized unit domain z in [-1,1]^nz
// and local time tau in [0, time_horizon]:
//
//   linear:        F(z)      = c + A [z; tau]            (+) remainder
//   quasi-quad:    F(z, tau) = c + A [z; tau] + B tau z  (+) remainder
//
// The last column of A is the time coefficient. Every operation preserves
// these tensor shapes; any higher-order term is interval-bounded and folded
// into the remainder.

namespace reach {

template <class S>
struct LinearTM {
  Vec<S> c;                  // n
  Mat<S> A;                  // n x (nz + 1), last column multiplies tau
  IntervalBox<S> remainder;  // n
  double time_horizon = 0.0;

  int n() const { return static_cast<int>(c.size()); }
  int nz() const { return A.cols - 1; }
};

template <class S>
struct QuasiQuadTM : LinearTM<S> {
  Mat<S> B;  // n x nz, coefficients of tau * z

  QuasiQuadTM() = default;
  explicit QuasiQuadTM(const LinearTM<S>& lin) : LinearTM<S>(lin), B(lin.n(), lin.nz()) {}
};

// One certified flowpipe segment: sound for every tau in [0, time_horizon].
template <class S>
using TMTrajectorySeg = QuasiQuadTM<S>;

template <class S>
void assert_tm_shape(const QuasiQuadTM<S>& tm) {
  if (tm.A.rows != tm.n() || tm.B.rows != tm.n() || tm.B.cols != tm.nz() ||
      tm.remainder.size() != tm.n())
    throw std::logic_error("taylor model shape violation");
}

// Affine TM reproducing a box exactly: c = centers, A = diag(half-widths).
template <class S>
LinearTM<S> build_linear_tm(const IntervalBox<S>& box) {
  if (box.diverged || !box.finite()) throw std::invalid_argument("build_linear_tm: diverged box");
  int n = box.size();
  LinearTM<S> tm;
  tm.c = box_center(box);
  tm.A = Mat<S>(n, n + 1);
  for (int i = 0; i < n; ++i) tm.A(i, i) = box[i].rad();
  tm.remainder = IntervalBox<S>(n);
  tm.time_horizon = 0.0;
  return tm;
}

template <class S>
QuasiQuadTM<S> as_quasi_quad(const LinearTM<S>& lin) {
  return QuasiQuadTM<S>(lin);
}

// Box enclosure of the TM image for tau in `tau`. The linear part is bounded
// exactly over the unit box; the cross term by interval arithmetic.
template <class S>
IntervalBox<S> tm_eval_interval(const QuasiQuadTM<S>& tm, const Interval<S>& tau) {
  using std::abs;
  using std::max;
  if (value(tau.lo) < -1e-12 || value(tau.hi) > tm.time_horizon + 1e-12)
    throw std::invalid_argument("tm_eval_interval: tau outside horizon");
  int n = tm.n(), nz = tm.nz();
  IntervalBox<S> out(n);
  for (int i = 0; i < n; ++i) {
    S lin_rad(0.0);
    for (int j = 0; j < nz; ++j) lin_rad += abs(tm.A(i, j));
    Interval<S> acc{tm.c[i] - lin_rad, tm.c[i] + lin_rad};
    acc = iv_add(acc, iv_scale(tm.A(i, nz), tau));  // time column
    S cross(0.0);
    for (int j = 0; j < nz; ++j) cross += abs(tm.B(i, j));
    // B tau z with z in [-1,1]: symmetric in z, scaled by |tau| bound.
    S tau_mag = max(abs(tau.lo), abs(tau.hi));
    acc = iv_add(acc, Interval<S>{-cross * tau_mag, cross * tau_mag});
    acc = iv_add(acc, tm.remainder[i]);
    out[i] = acc;
  }
  out.diverged = tm.remainder.diverged;
  out.check_divergence();
  return out;
}

template <class S>
IntervalBox<S> tm_eval_interval(const LinearTM<S>& tm, const Interval<S>& tau) {
  return tm_eval_interval(as_quasi_quad(tm), tau);
}

// Exact affine image M * tm + d.
template <class S>
LinearTM<S> tm_affine_image(const LinearTM<S>& tm, const Mat<S>& m, const Vec<S>& d) {
  if (m.cols != tm.n() || static_cast<int>(d.size()) != m.rows)
    throw std::invalid_argument("tm_affine_image: shape mismatch");
  LinearTM<S> out;
  out.c = vadd(matvec(m, tm.c), d);
  out.A = matmul(m, tm.A);
  out.remainder = box_affine_image(m, tm.remainder);
  out.time_horizon = tm.time_horizon;
  return out;
}

// Composition outer(inner(z)): outer's variables are given by the affine map
// `inner` (over the original normalized variables). inner's remainder is
// propagated through |A_outer|.
template <class S>
LinearTM<S> tm_compose_affine(const LinearTM<S>& outer, const LinearTM<S>& inner) {
  using std::abs;
  if (outer.nz() != inner.n())
    throw std::invalid_argument("tm_compose_affine: dimension mismatch");
  int n = outer.n(), nz_in = inner.nz();
  LinearTM<S> out;
  out.c = outer.c;
  out.A = Mat<S>(n, nz_in + 1);
  out.remainder = IntervalBox<S>(n);
  out.time_horizon = outer.time_horizon;
  for (int i = 0; i < n; ++i) {
    Interval<S> rem = outer.remainder[i];
    for (int k = 0; k < outer.nz(); ++k) {
      S a = outer.A(i, k);
      out.c[i] += a * inner.c[k];
      for (int j = 0; j < nz_in; ++j) out.A(i, j) += a * inner.A(k, j);
      // inner's own time column folds into the composed time column
      out.A(i, nz_in) += a * inner.A(k, nz_in);
      rem = iv_add(rem, iv_scale(a, inner.remainder[k]));
    }
    out.A(i, nz_in) += outer.A(i, outer.nz());  // outer's time column
    out.remainder[i] = rem;
  }
  return out;
}

// --------------------------------------------------------------------------
// Excess-term truncation: interval-bounds monomials beyond the fixed shape
// and folds them into the remainder.

struct Monomial {
  int zi = -1;      // first z factor, -1 if absent
  int zj = -1;      // second z factor, -1 if absent
  int tau_pow = 0;  // power of tau
};

template <class S>
struct ExcessTerm {
  Vec<S> coef;  // per output dimension
  Monomial m;
};

template <class S>
Interval<S> monomial_range(const Monomial& m, double h) {
  Interval<S> r{S(1.0), S(1.0)};
  if (m.zi >= 0 && m.zj >= 0) {
    r = (m.zi == m.zj) ? Interval<S>{S(0.0), S(1.0)} : Interval<S>{S(-1.0), S(1.0)};
  } else if (m.zi >= 0) {
    r = Interval<S>{S(-1.0), S(1.0)};
  }
  if (m.tau_pow > 0) {
    S hp(1.0);
    for (int p = 0; p < m.tau_pow; ++p) hp *= S(h);
    r = iv_mul(r, Interval<S>{S(0.0), hp});
  }
  return r;
}

template <class S>
QuasiQuadTM<S> tm_truncate(const QuasiQuadTM<S>& tm, const std::vector<ExcessTerm<S>>& excess) {
  QuasiQuadTM<S> out = tm;
  for (const auto& term : excess) {
    if (static_cast<int>(term.coef.size()) != tm.n())
      throw std::invalid_argument("tm_truncate: coefficient dimension mismatch");
    Interval<S> mono = monomial_range<S>(term.m, tm.time_horizon);
    for (int i = 0; i < tm.n(); ++i)
      out.remainder[i] = iv_add(out.remainder[i], iv_scale(term.coef[static_cast<size_t>(i)], mono));
  }
  return out;
}

// --------------------------------------------------------------------------
// TMExpr: one scalar quasi-quadratic TM row with overloaded arithmetic, used
// to push analytical vector fields through the fixed shape. All excess terms
// produced by products are interval-bounded on the fly.

template <class S>
struct TMExpr {
  S c = S(0.0);
  Vec<S> az;  // nz coefficients of z
  S at = S(0.0);
  Vec<S> bz;  // nz coefficients of tau*z
  Interval<S> rem{S(0.0), S(0.0)};
  double h = 0.0;  // tau horizon

  TMExpr() = default;
  TMExpr(S constant, int nz, double horizon)
      : c(constant), az(static_cast<size_t>(nz), S(0.0)), at(0.0),
        bz(static_cast<size_t>(nz), S(0.0)), h(horizon) {}

  int nz() const { return static_cast<int>(az.size()); }

  S abs_z() const {
    using std::abs;
    S acc(0.0);
    for (const auto& a : az) acc += abs(a);
    return acc;
  }
  S abs_b() const {
    using std::abs;
    S acc(0.0);
    for (const auto& b : bz) acc += abs(b);
    return acc;
  }

  // Range of the polynomial part over z in [-1,1]^nz, tau in [0,h].
  Interval<S> poly_range() const {
    using std::abs;
    S zr = abs_z();
    Interval<S> r{c - zr, c + zr};
    r = iv_add(r, iv_mul(Interval<S>{S(0.0), S(h)}, Interval<S>{at, at}));
    S br = abs_b() * S(h);
    r = iv_add(r, Interval<S>{-br, br});
    return r;
  }

  Interval<S> total_range() const { return iv_add(poly_range(), rem); }
};

template <class S>
TMExpr<S> tme_const(S v, int nz, double h) {
  return TMExpr<S>(v, nz, h);
}

template <class S>
TMExpr<S> operator+(const TMExpr<S>& a, const TMExpr<S>& b) {
  TMExpr<S> r = a;
  r.c += b.c;
  for (int j = 0; j < r.nz(); ++j) {
    r.az[j] += b.az[j];
    r.bz[j] += b.bz[j];
  }
  r.at += b.at;
  r.rem = iv_add(r.rem, b.rem);
  return r;
}

template <class S>
TMExpr<S> operator-(const TMExpr<S>& a, const TMExpr<S>& b) {
  TMExpr<S> r = a;
  r.c -= b.c;
  for (int j = 0; j < r.nz(); ++j) {
    r.az[j] -= b.az[j];
    r.bz[j] -= b.bz[j];
  }
  r.at -= b.at;
  r.rem = iv_sub(r.rem, b.rem);
  return r;
}

template <class S>
TMExpr<S> operator-(const TMExpr<S>& a) {
  TMExpr<S> r = a;
  r.c = -r.c;
  for (int j = 0; j < r.nz(); ++j) {
    r.az[j] = -r.az[j];
    r.bz[j] = -r.bz[j];
  }
  r.at = -r.at;
  r.rem = iv_neg(r.rem);
  return r;
}

template <class S>
TMExpr<S> operator*(std::type_identity_t<S> s, const TMExpr<S>& a) {
  TMExpr<S> r = a;
  r.c *= s;
  for (int j = 0; j < r.nz(); ++j) {
    r.az[j] *= s;
    r.bz[j] *= s;
  }
  r.at *= s;
  r.rem = iv_scale(s, a.rem);
  return r;
}

template <class S>
TMExpr<S> operator*(const TMExpr<S>& a, std::type_identity_t<S> s) {
  return s * a;
}

template <class S>
TMExpr<S> operator+(const TMExpr<S>& a, std::type_identity_t<S> s) {
  TMExpr<S> r = a;
  r.c += s;
  return r;
}
template <class S>
TMExpr<S> operator+(std::type_identity_t<S> s, const TMExpr<S>& a) {
  return a + s;
}
template <class S>
TMExpr<S> operator-(const TMExpr<S>& a, std::type_identity_t<S> s) {
  TMExpr<S> r = a;
  r.c -= s;
  return r;
}
template <class S>
TMExpr<S> operator-(std::type_identity_t<S> s, const TMExpr<S>& a) {
  return (-a) + s;
}

// Product. Keeps c*c, c*z, c*tau, c*tauz, tau*z cross terms; everything of
// higher degree is interval-bounded over the domain and folded into rem.
template <class S>
TMExpr<S> operator*(const TMExpr<S>& u, const TMExpr<S>& v) {
  using std::abs;
  TMExpr<S> r(S(0.0), u.nz(), u.h);
  const S h(u.h);
  r.c = u.c * v.c;
  for (int j = 0; j < r.nz(); ++j) {
    r.az[j] = u.c * v.az[j] + v.c * u.az[j];
    r.bz[j] = u.c * v.bz[j] + v.c * u.bz[j] + u.at * v.az[j] + v.at * u.az[j];
  }
  r.at = u.c * v.at + v.c * u.at;

  // Excess polynomial terms, bounded over z in [-1,1]^nz, tau in [0,h]:
  S au = u.abs_z(), av = v.abs_z();
  S bu = u.abs_b(), bv = v.abs_b();
  S atu = abs(u.at), atv = abs(v.at);
  // (az.z)(az.z)
  S sym = au * av;
  // (az.z)(b tau z) + (b tau z)(az.z)
  sym += (au * bv + av * bu) * h;
  // (b tau z)(b tau z)
  sym += bu * bv * h * h;
  // (at tau)(b tau z) both ways  -> tau^2 z
  sym += (atu * bv + atv * bu) * h * h;
  r.rem = iv_add(r.rem, Interval<S>{-sym, sym});
  // (at tau)(at tau) -> tau^2, one-signed
  S tt = u.at * v.at;
  r.rem = iv_add(r.rem, iv_mul(Interval<S>{S(0.0), h * h}, Interval<S>{tt, tt}));

  // Remainder interactions: pu*Iv + pv*Iu + Iu*Iv
  Interval<S> pu = u.poly_range(), pv = v.poly_range();
  r.rem = iv_add(r.rem, iv_mul(pu, v.rem));
  r.rem = iv_add(r.rem, iv_mul(pv, u.rem));
  r.rem = iv_add(r.rem, iv_mul(u.rem, v.rem));
  return r;
}

// Reciprocal via linearization about the centre with an exact convexity-based
// error bound; range must exclude zero.
template <class S>
TMExpr<S> tme_inv(const TMExpr<S>& v) {
  Interval<S> range = v.total_range();
  if (value(range.lo) <= 0.0 && value(range.hi) >= 0.0)
    throw std::domain_error("tme_inv: range contains zero");
  S m = v.c;
  // e(x) = 1/x - (2/m - x/m^2); extrema on a zero-free interval containing m
  // are at the endpoints or at x = m where e = 0.
  auto err = [&](S x) { return S(1.0) / x - (S(2.0) / m - x / (m * m)); };
  using std::min;
  using std::max;
  S e_lo = err(range.lo), e_hi = err(range.hi);
  Interval<S> e{min(min(e_lo, e_hi), S(0.0)), max(max(e_lo, e_hi), S(0.0))};
  TMExpr<S> r = (S(-1.0) / (m * m)) * v + (S(2.0) / m);
  r.rem = iv_add(r.rem, e);
  return r;
}

template <class S>
TMExpr<S> operator/(const TMExpr<S>& u, const TMExpr<S>& v) {
  return u * tme_inv(v);
}
template <class S>
TMExpr<S> operator/(const TMExpr<S>& u, std::type_identity_t<S> s) {
  return (S(1.0) / s) * u;
}
template <class S>
TMExpr<S> operator/(std::type_identity_t<S> s, const TMExpr<S>& v) {
  return s * tme_inv(v);
}

// sin/cos by linearization about the centre with a second-order Lagrange
// remainder (|f''| <= 1) over the evaluated range.
template <class S>
TMExpr<S> sin(const TMExpr<S>& u) {
  using std::sin;
  using std::cos;
  using std::abs;
  using std::max;
  S m = u.c;
  Interval<S> range = u.total_range();
  S rad = max(abs(range.lo - m), abs(range.hi - m));
  S err = rad * rad * S(0.5);
  TMExpr<S> r = cos(m) * (u - m) + sin(m);
  r.rem = iv_add(r.rem, Interval<S>{-err, err});
  return r;
}

template <class S>
TMExpr<S> cos(const TMExpr<S>& u) {
  using std::sin;
  using std::cos;
  using std::abs;
  using std::max;
  S m = u.c;
  Interval<S> range = u.total_range();
  S rad = max(abs(range.lo - m), abs(range.hi - m));
  S err = rad * rad * S(0.5);
  TMExpr<S> r = (-sin(m)) * (u - m) + cos(m);
  r.rem = iv_add(r.rem, Interval<S>{-err, err});
  return r;
}

// Integral over [0, tau]: raises the tau degree by one; tau^2 terms are
// interval-bounded and folded into the remainder.
template <class S>
TMExpr<S> tme_integrate(const TMExpr<S>& u) {
  using std::abs;
  TMExpr<S> r(S(0.0), u.nz(), u.h);
  const S h(u.h);
  r.at = u.c;
  for (int j = 0; j < r.nz(); ++j) r.bz[j] = u.az[j];
  // at*tau -> at*tau^2/2, one-signed over [0,h]
  S half_at = u.at * S(0.5);
  r.rem = iv_add(r.rem, iv_mul(Interval<S>{S(0.0), h * h}, Interval<S>{half_at, half_at}));
  // bz*tau*z -> bz*tau^2 z / 2, symmetric
  S bb = u.abs_b() * h * h * S(0.5);
  r.rem = iv_add(r.rem, Interval<S>{-bb, bb});
  // integral of the remainder: rem * [0, h]
  r.rem = iv_add(r.rem, iv_mul(u.rem, Interval<S>{S(0.0), h}));
  return r;
}

// Rows of a quasi-quad TM as TMExpr values (and back).
template <class S>
std::vector<TMExpr<S>> tm_rows(const QuasiQuadTM<S>& tm) {
  std::vector<TMExpr<S>> rows;
  rows.reserve(static_cast<size_t>(tm.n()));
  for (int i = 0; i < tm.n(); ++i) {
    TMExpr<S> e(tm.c[static_cast<size_t>(i)], tm.nz(), tm.time_horizon);
    for (int j = 0; j < tm.nz(); ++j) {
      e.az[static_cast<size_t>(j)] = tm.A(i, j);
      e.bz[static_cast<size_t>(j)] = tm.B(i, j);
    }
    e.at = tm.A(i, tm.nz());
    e.rem = tm.remainder[i];
    rows.push_back(std::move(e));
  }
  return rows;
}

template <class S>
QuasiQuadTM<S> tm_from_rows(const std::vector<TMExpr<S>>& rows) {
  int n = static_cast<int>(rows.size());
  int nz = rows[0].nz();
  QuasiQuadTM<S> tm;
  tm.c = Vec<S>(static_cast<size_t>(n));
  tm.A = Mat<S>(n, nz + 1);
  tm.B = Mat<S>(n, nz);
  tm.remainder = IntervalBox<S>(n);
  tm.time_horizon = rows[0].h;
  for (int i = 0; i < n; ++i) {
    const auto& e = rows[static_cast<size_t>(i)];
    tm.c[static_cast<size_t>(i)] = e.c;
    for (int j = 0; j < nz; ++j) {
      tm.A(i, j) = e.az[static_cast<size_t>(j)];
      tm.B(i, j) = e.bz[static_cast<size_t>(j)];
    }
    tm.A(i, nz) = e.at;
    tm.remainder[i] = e.rem;
  }
  return tm;
}

}  // namespace reach
