#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reach/interval.hpp"
#include "reach/linalg.hpp"
#include "reach/rng.hpp"
#include "reach/taylor_model.hpp"

// Feed-forward networks, sound parallel-slope activation relaxations, CROWN
// backward bound propagation with a shared slope, and the TM-input interface
// that keeps network outputs inside the linear-TM representation.

namespace reach {

enum class Act { Relu, Tanh, Identity };

inline std::string act_name(Act a) {
  switch (a) {
    case Act::Relu: return "relu";
    case Act::Tanh: return "tanh";
    default: return "identity";
  }
}

inline Act act_from_name(const std::string& s) {
  if (s == "relu") return Act::Relu;
  if (s == "tanh") return Act::Tanh;
  if (s == "identity") return Act::Identity;
  throw std::invalid_argument("unknown activation: " + s);
}

template <class S>
struct Layer {
  Mat<S> w;  // out x in
  Vec<S> b;
  Act act = Act::Identity;
};

template <class S>
struct MLPNet {
  std::vector<Layer<S>> layers;

  int input_dim() const { return layers.front().w.cols; }
  int output_dim() const { return layers.back().w.rows; }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("MLPNet: empty");
    for (size_t l = 0; l + 1 < layers.size(); ++l)
      if (layers[l + 1].w.cols != layers[l].w.rows)
        throw std::invalid_argument("MLPNet: layer shapes do not chain");
    if (layers.back().act != Act::Identity)
      throw std::invalid_argument("MLPNet: final activation must be identity");
  }

  Vec<S> forward(const Vec<S>& x) const {
    Vec<S> h = x;
    for (const auto& layer : layers) {
      h = vadd(matvec(layer.w, h), layer.b);
      switch (layer.act) {
        case Act::Relu:
          for (auto& v : h) h_relu(v);
          break;
        case Act::Tanh: {
          using std::tanh;
          for (auto& v : h) v = tanh(v);
          break;
        }
        case Act::Identity:
          break;
      }
    }
    return h;
  }

  int param_count() const {
    int n = 0;
    for (const auto& l : layers) n += l.w.rows * l.w.cols + static_cast<int>(l.b.size());
    return n;
  }

 private:
  static void h_relu(S& v) {
    if (value(v) < 0.0) v = S(0.0);
  }
};

template <class S>
MLPNet<S> affine_net(const Mat<S>& m, const Vec<S>& d) {
  MLPNet<S> net;
  net.layers.push_back({m, d, Act::Identity});
  return net;
}

inline MLPNet<double> random_mlp(Rng& rng, int in_dim, const std::vector<int>& hidden, int out_dim,
                                 Act act = Act::Relu, double scale = 1.0) {
  MLPNet<double> net;
  std::vector<int> dims;
  dims.push_back(in_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(out_dim);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer<double> layer;
    layer.w = Mat<double>(dims[l + 1], dims[l]);
    layer.b = Vec<double>(static_cast<size_t>(dims[l + 1]), 0.0);
    double std = scale / std::sqrt(static_cast<double>(dims[l]));
    for (auto& w : layer.w.a) w = rng.normal() * std;
    for (auto& b : layer.b) b = rng.normal() * 0.05 * scale;
    layer.act = (l + 2 == dims.size()) ? Act::Identity : act;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <class ST>
MLPNet<ST> net_cast(const MLPNet<double>& net) {
  MLPNet<ST> out;
  for (const auto& l : net.layers) {
    Layer<ST> nl;
    nl.w = Mat<ST>(l.w.rows, l.w.cols);
    for (size_t i = 0; i < l.w.a.size(); ++i) nl.w.a[i] = ST(l.w.a[i]);
    nl.b = to_scalar<ST>(l.b);
    nl.act = l.act;
    out.layers.push_back(std::move(nl));
  }
  return out;
}

// Flatten / unflatten parameters (row-major weights then bias, per layer).
template <class S>
Vec<S> net_params(const MLPNet<S>& net) {
  Vec<S> p;
  for (const auto& l : net.layers) {
    p.insert(p.end(), l.w.a.begin(), l.w.a.end());
    p.insert(p.end(), l.b.begin(), l.b.end());
  }
  return p;
}

template <class S, class P>
MLPNet<S> net_with_params(const MLPNet<double>& shape, const Vec<P>& params) {
  MLPNet<S> out = net_cast<S>(shape);
  size_t k = 0;
  for (auto& l : out.layers) {
    for (auto& w : l.w.a) w = S(params[k++]);
    for (auto& b : l.b) b = S(params[k++]);
  }
  if (k != params.size()) throw std::invalid_argument("net_with_params: size mismatch");
  return out;
}

// --------------------------------------------------------------------------
// Activation relaxations: parallel lower/upper lines with identical slope,
// sound on the given preactivation interval.

template <class S>
struct ActRelaxation {
  S slope = S(0.0);
  S lower_intercept = S(0.0);
  S upper_intercept = S(0.0);
  Interval<S> preact;
};

template <class S>
ActRelaxation<S> relax_activation(Act tag, const Interval<S>& preact) {
  using std::tanh;
  using std::min;
  using std::max;
  if (!preact.finite()) throw std::invalid_argument("relax_activation: non-finite preactivation");
  ActRelaxation<S> r;
  r.preact = preact;
  const S l = preact.lo, u = preact.hi;
  switch (tag) {
    case Act::Identity:
      r.slope = S(1.0);
      break;
    case Act::Relu: {
      if (value(l) == 0.0 || value(u) == 0.0) note_branch_boundary();
      if (value(l) >= 0.0) {
        r.slope = S(1.0);
      } else if (value(u) <= 0.0) {
        r.slope = S(0.0);
      } else {
        S s = u / (u - l);
        r.slope = s;
        r.upper_intercept = -s * l;  // through (l,0) and (u,u)
        // min over {l, 0, u} of relu(x) - s x; equals 0 for s in [0,1]
        S cand = min(S(0.0), min(-s * l, u - s * u));
        r.lower_intercept = cand;
      }
      break;
    }
    case Act::Tanh: {
      auto dtanh = [](S x) {
        S t = tanh(x);
        return S(1.0) - t * t;
      };
      S s = min(dtanh(l), dtanh(u));
      r.slope = s;
      // extrema of tanh(x) - s x on [l,u]: endpoints plus interior critical
      // points x* with tanh'(x*) = s, i.e. x* = +- atanh(sqrt(1 - s)).
      S lo_int = tanh(l) - s * l;
      S hi_int = lo_int;
      auto consider = [&](S x) {
        S g = tanh(x) - s * x;
        lo_int = min(lo_int, g);
        hi_int = max(hi_int, g);
      };
      consider(u);
      if (value(s) < 1.0 && value(s) > 0.0) {
        using std::sqrt;
        using std::atanh;
        double xs = std::atanh(std::sqrt(1.0 - value(s)));
        if (preact.contains(S(xs))) consider(S(xs));
        if (preact.contains(S(-xs))) consider(S(-xs));
      }
      // one-ulp style safety margin against rounding in the extrema search
      S margin = (hi_int - lo_int) * S(1e-12) + S(1e-15);
      r.lower_intercept = lo_int - margin;
      r.upper_intercept = hi_int + margin;
      break;
    }
  }
  return r;
}

template <class S>
Interval<S> act_interval(Act tag, const Interval<S>& pre) {
  using std::tanh;
  using std::max;
  switch (tag) {
    case Act::Relu:
      return {max(pre.lo, S(0.0)), max(pre.hi, S(0.0))};
    case Act::Tanh:
      return {tanh(pre.lo), tanh(pre.hi)};
    default:
      return pre;
  }
}

// Layerwise interval forward pass; returns preactivation boxes per layer.
template <class S>
std::vector<IntervalBox<S>> preactivation_bounds(const MLPNet<S>& net, const IntervalBox<S>& domain) {
  std::vector<IntervalBox<S>> pre;
  IntervalBox<S> h = domain;
  for (const auto& layer : net.layers) {
    IntervalBox<S> p = box_affine_image(layer.w, h);
    for (int i = 0; i < p.size(); ++i) p[i] = iv_add(p[i], Interval<S>{layer.b[static_cast<size_t>(i)], layer.b[static_cast<size_t>(i)]});
    pre.push_back(p);
    IntervalBox<S> post(p.size());
    for (int i = 0; i < p.size(); ++i) post[i] = act_interval(layer.act, p[i]);
    h = post;
  }
  return pre;
}

// Pure interval forward propagation (used by the naive baseline).
template <class S>
IntervalBox<S> interval_forward(const MLPNet<S>& net, const IntervalBox<S>& domain) {
  IntervalBox<S> h = domain;
  for (const auto& layer : net.layers) {
    IntervalBox<S> p = box_affine_image(layer.w, h);
    IntervalBox<S> post(p.size());
    for (int i = 0; i < p.size(); ++i)
      post[i] = act_interval(layer.act, iv_add(p[i], Interval<S>{layer.b[static_cast<size_t>(i)], layer.b[static_cast<size_t>(i)]}));
    h = post;
  }
  h.check_divergence();
  return h;
}

// --------------------------------------------------------------------------
// CROWN backward propagation. Because both relaxation lines share one slope,
// the propagated linear coefficient is identical for the lower and upper
// bound: a single A_shared with two offsets.

template <class S>
struct LinearBounds {
  Mat<S> a_shared;  // n_o x n_in
  Vec<S> b_lower;
  Vec<S> b_upper;
  IntervalBox<S> domain;

  // width of the bound gap at any evaluation point
  Vec<S> gap() const { return vsub(b_upper, b_lower); }
};

template <class S>
LinearBounds<S> crown_backward(const MLPNet<S>& net, const IntervalBox<S>& domain) {
  net.validate();
  if (domain.size() != net.input_dim())
    throw std::invalid_argument("crown_backward: domain dimension mismatch");
  auto pre = preactivation_bounds(net, domain);

  int n_o = net.output_dim();
  Mat<S> a = Mat<S>::identity(n_o);
  Vec<S> b_lo(static_cast<size_t>(n_o), S(0.0));
  Vec<S> b_up(static_cast<size_t>(n_o), S(0.0));

  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = net.layers[static_cast<size_t>(l)];
    int width = layer.w.rows;
    // substitute the activation: y = s*p + [li, ui] per neuron
    if (layer.act != Act::Identity) {
      for (int j = 0; j < width; ++j) {
        auto rel = relax_activation(layer.act, pre[static_cast<size_t>(l)][j]);
        for (int i = 0; i < n_o; ++i) {
          S aij = a(i, j);
          if (value(aij) >= 0.0) {
            b_lo[static_cast<size_t>(i)] += aij * rel.lower_intercept;
            b_up[static_cast<size_t>(i)] += aij * rel.upper_intercept;
          } else {
            b_lo[static_cast<size_t>(i)] += aij * rel.upper_intercept;
            b_up[static_cast<size_t>(i)] += aij * rel.lower_intercept;
          }
          a(i, j) = aij * rel.slope;
        }
      }
    }
    // substitute the affine part: p = W x + b
    Vec<S> shift = matvec(a, layer.b);
    b_lo = vadd(b_lo, shift);
    b_up = vadd(b_up, shift);
    a = matmul(a, layer.w);
  }

  LinearBounds<S> out;
  out.a_shared = std::move(a);
  out.b_lower = std::move(b_lo);
  out.b_upper = std::move(b_up);
  out.domain = domain;
  return out;
}

// --------------------------------------------------------------------------
// TM-input certification: reparameterize x = c_g + A_g z + r with z in the
// unit box and r in the remainder box, certify the equivalent network, then
// fold the r-block contribution back into the interval remainder.

template <class S>
LinearTM<S> certify_tm_input(const MLPNet<S>& net, const LinearTM<S>& input_tm) {
  if (net.input_dim() != input_tm.n())
    throw std::invalid_argument("certify_tm_input: dimension mismatch");
  const int n_i = input_tm.n();
  const int nz = input_tm.nz();

  // Fold the time column over [0, horizon] into the effective remainder.
  IntervalBox<S> ig = input_tm.remainder;
  if (input_tm.time_horizon > 0.0) {
    for (int i = 0; i < n_i; ++i) {
      Interval<S> t = iv_mul(Interval<S>{S(0.0), S(input_tm.time_horizon)},
                             Interval<S>{input_tm.A(i, nz), input_tm.A(i, nz)});
      ig[i] = iv_add(ig[i], t);
    }
  }

  // Equivalent network: prepend x = [A_g | I] (z; r) + c_g.
  MLPNet<S> wide = net;
  Layer<S> first;
  first.w = Mat<S>(n_i, nz + n_i);
  for (int i = 0; i < n_i; ++i) {
    for (int j = 0; j < nz; ++j) first.w(i, j) = input_tm.A(i, j);
    first.w(i, nz + i) = S(1.0);
  }
  first.b = input_tm.c;
  first.act = Act::Identity;
  wide.layers.insert(wide.layers.begin(), std::move(first));

  IntervalBox<S> dom(nz + n_i);
  for (int j = 0; j < nz; ++j) dom[j] = {S(-1.0), S(1.0)};
  for (int i = 0; i < n_i; ++i) dom[nz + i] = ig[i];

  LinearBounds<S> lb = crown_backward(wide, dom);

  const int n_o = net.output_dim();
  LinearTM<S> out;
  out.c = Vec<S>(static_cast<size_t>(n_o));
  out.A = Mat<S>(n_o, nz + 1);
  out.remainder = IntervalBox<S>(n_o);
  out.time_horizon = 0.0;
  for (int i = 0; i < n_o; ++i) {
    S mid = (lb.b_lower[static_cast<size_t>(i)] + lb.b_upper[static_cast<size_t>(i)]) * S(0.5);
    out.c[static_cast<size_t>(i)] = mid;
    for (int j = 0; j < nz; ++j) out.A(i, j) = lb.a_shared(i, j);
    Interval<S> rem{lb.b_lower[static_cast<size_t>(i)] - mid, lb.b_upper[static_cast<size_t>(i)] - mid};
    for (int j = 0; j < n_i; ++j)
      rem = iv_add(rem, iv_scale(lb.a_shared(i, nz + j), ig[j]));
    out.remainder[i] = rem;
  }
  out.remainder.check_divergence();
  return out;
}

// Folds a constant exogenous input block into the first-layer bias: the
// network over (x, e) with e fixed becomes a network over x alone.
template <class S>
MLPNet<S> freeze_trailing_inputs(const MLPNet<S>& net, int n_keep, const Vec<S>& frozen) {
  const auto& l0 = net.layers.front();
  int total = l0.w.cols;
  if (n_keep + static_cast<int>(frozen.size()) != total)
    throw std::invalid_argument("freeze_trailing_inputs: dimension mismatch");
  MLPNet<S> out = net;
  Layer<S>& f = out.layers.front();
  f.w = Mat<S>(l0.w.rows, n_keep);
  f.b = l0.b;
  for (int i = 0; i < l0.w.rows; ++i) {
    for (int j = 0; j < n_keep; ++j) f.w(i, j) = l0.w(i, j);
    for (size_t j = 0; j < frozen.size(); ++j) f.b[static_cast<size_t>(i)] += l0.w(i, n_keep + static_cast<int>(j)) * frozen[j];
  }
  return out;
}

// Controller certification: reference folded into the first-layer bias, then
// TM-input CROWN on the state TM. The control TM shares the state TM's
// normalized variables, preserving cross-dependencies.
template <class S>
LinearTM<S> ctl_crown(const LinearTM<S>& state_tm, const MLPNet<S>& controller, const Vec<S>& ref_input) {
  MLPNet<S> frozen = ref_input.empty()
                         ? controller
                         : freeze_trailing_inputs(controller, state_tm.n(), ref_input);
  return certify_tm_input(frozen, state_tm);
}

}  // namespace reach
