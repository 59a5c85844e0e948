#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reach/interval.hpp"
#include "reach/neural.hpp"
#include "reach/rng.hpp"

// Shared test oracles, written against the public headers only.

namespace testutil {

using namespace reach;

// Near-exact output range of a ReLU (or identity) network over a box, by
// recursively splitting the box until every activation is sign-stable, at
// which point the network is affine on the cell and its range is exact.
// Cells still unstable at the depth cap contribute corner/center samples,
// so the result is an under-approximation of the true range that converges
// with depth — suitable for "bounds must contain the exact range" checks.
class ExactRangeOracle {
 public:
  ExactRangeOracle(const MLPNet<double>& net, int max_depth = 18)
      : net_(net), max_depth_(max_depth) {}

  std::vector<Iv> range(const Box& box) {
    int n_o = net_.output_dim();
    out_.assign(static_cast<size_t>(n_o),
                Iv{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    recurse(box, 0);
    return out_;
  }

 private:
  void absorb(const Vec<double>& y) {
    for (size_t i = 0; i < y.size(); ++i) {
      out_[i].lo = std::min(out_[i].lo, y[i]);
      out_[i].hi = std::max(out_[i].hi, y[i]);
    }
  }

  void recurse(const Box& box, int depth) {
    // Try to certify stability of every ReLU neuron on this cell.
    Box h = box;
    bool stable = true;
    std::vector<std::vector<int>> pattern;  // 1 active, 0 inactive per relu layer
    for (const auto& layer : net_.layers) {
      Box p = box_affine_image(layer.w, h);
      for (int i = 0; i < p.size(); ++i)
        p[i] = iv_add(p[i], Iv{layer.b[static_cast<size_t>(i)], layer.b[static_cast<size_t>(i)]});
      std::vector<int> pat(static_cast<size_t>(p.size()), 1);
      if (layer.act == Act::Relu) {
        for (int i = 0; i < p.size(); ++i) {
          if (p[i].lo >= 0.0) pat[static_cast<size_t>(i)] = 1;
          else if (p[i].hi <= 0.0) pat[static_cast<size_t>(i)] = 0;
          else { stable = false; }
        }
      }
      pattern.push_back(pat);
      if (!stable) break;
      Box post(p.size());
      for (int i = 0; i < p.size(); ++i) post[i] = act_interval(layer.act, p[i]);
      h = post;
    }

    if (stable) {
      // affine on this cell: propagate (center, coefficient) exactly
      Vec<double> c = box_center(box);
      Mat<double> a = Mat<double>::diagonal(box_radius(box));
      for (size_t l = 0; l < net_.layers.size(); ++l) {
        const auto& layer = net_.layers[l];
        c = vadd(matvec(layer.w, c), layer.b);
        a = matmul(layer.w, a);
        if (layer.act == Act::Relu) {
          for (int i = 0; i < layer.w.rows; ++i) {
            if (pattern[l][static_cast<size_t>(i)] == 0) {
              c[static_cast<size_t>(i)] = 0.0;
              for (int j = 0; j < a.cols; ++j) a(i, j) = 0.0;
            }
          }
        }
      }
      for (int i = 0; i < net_.output_dim(); ++i) {
        double r = row_abs_sum(a, i);
        out_[static_cast<size_t>(i)].lo = std::min(out_[static_cast<size_t>(i)].lo, c[static_cast<size_t>(i)] - r);
        out_[static_cast<size_t>(i)].hi = std::max(out_[static_cast<size_t>(i)].hi, c[static_cast<size_t>(i)] + r);
      }
      return;
    }

    if (depth >= max_depth_) {
      // sample corners + center of the unresolved cell
      int n = box.size();
      int corners = 1 << std::min(n, 12);
      for (int mask = 0; mask < corners; ++mask) {
        Vec<double> x(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) x[static_cast<size_t>(j)] = (mask >> j) & 1 ? box[j].hi : box[j].lo;
        absorb(net_.forward(x));
      }
      absorb(net_.forward(box_center(box)));
      return;
    }

    // split along the widest dimension
    int wj = 0;
    for (int j = 1; j < box.size(); ++j)
      if (box[j].width() > box[wj].width()) wj = j;
    double m = box[wj].mid();
    Box lo = box, hi = box;
    lo[wj].hi = m;
    hi[wj].lo = m;
    recurse(lo, depth + 1);
    recurse(hi, depth + 1);
  }

  const MLPNet<double>& net_;
  int max_depth_;
  std::vector<Iv> out_;
};

inline Box random_box(Rng& rng, int n, double cmax, double rmax) {
  Vec<double> c(static_cast<size_t>(n)), r(static_cast<size_t>(n));
  for (auto& v : c) v = rng.uniform(-cmax, cmax);
  for (auto& v : r) v = rng.uniform(0.01, rmax);
  return box_from_center(c, r);
}

inline Vec<double> sample_in_box(Rng& rng, const Box& box) {
  Vec<double> x(static_cast<size_t>(box.size()));
  for (int j = 0; j < box.size(); ++j) x[static_cast<size_t>(j)] = rng.uniform(box[j].lo, box[j].hi);
  return x;
}

}  // namespace testutil
