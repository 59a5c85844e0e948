#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "reach/training.hpp"

using namespace reach;

namespace {

// rollout data straight from an MLP one-step map
std::vector<Episode> episodes_from_net(const MLPNet<double>& net, int n, int m, int count,
                                       int length, Rng& rng) {
  auto step = [&](const Vec<double>& x, const Vec<double>& u) {
    Vec<double> in = x;
    in.insert(in.end(), u.begin(), u.end());
    return net.forward(in);
  };
  return make_dt_dataset(step, n, m, count, length, 0.5, 0.5, rng);
}

}  // namespace

TEST_CASE("curriculum schedules honor their anchors and monotonicity") {
  for (int iters : {2, 5, 17, 100}) {
    for (int tmax : {1, 3, 8, 20}) {
      CHECK(horizon_schedule(0, iters, tmax) == 1);
      CHECK(horizon_schedule(iters - 1, iters, tmax) == tmax);
      int prev = 0;
      for (int s = 0; s < iters; ++s) {
        int t = horizon_schedule(s, iters, tmax);
        CHECK(t >= 1);
        CHECK(t <= tmax);
        CHECK(t >= prev);
        prev = t;
      }
    }
    double e0 = 0.3, ef = 0.02;
    CHECK(eps_schedule(0, iters, e0, ef) == e0);
    CHECK(eps_schedule(iters - 1, iters, e0, ef) == ef);
    double prev = e0 + 1.0;
    for (int s = 0; s < iters; ++s) {
      double e = eps_schedule(s, iters, e0, ef);
      CHECK(e <= prev);
      prev = e;
    }
  }
  // midpoint of an odd-length schedule is the arithmetic mean
  CHECK(eps_schedule(2, 5, 0.4, 0.1) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("prediction loss closed forms and batch invariance") {
  Rng rng(1122);
  const int n = 2, m = 1;
  auto truth = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.6);
  auto data = episodes_from_net(truth, n, m, 6, 4, rng);

  SUBCASE("perfect model has exactly zero loss") {
    CHECK(pred_loss(truth, data, 3, horizon_weights(3)) == 0.0);
  }
  SUBCASE("constant-zero model, T_h = 1, unit weights") {
    auto zero = affine_net(Mat<double>(n, n + m), Vec<double>(n, 0.0));
    double expect = 0.0;
    for (const auto& ep : data)
      for (double v : ep.states[1]) expect += v * v;
    expect /= static_cast<double>(data.size());
    CHECK(pred_loss(zero, data, 1, Vec<double>{1.0}) == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("batch loss is the mean of per-episode losses") {
    auto model = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.5);
    auto w = horizon_weights(3);
    double batch = pred_loss(model, data, 3, w);
    double mean = 0.0;
    for (const auto& ep : data) mean += pred_loss(model, std::vector<Episode>{ep}, 3, w);
    mean /= static_cast<double>(data.size());
    CHECK(batch == doctest::Approx(mean).epsilon(1e-13));
  }
}

TEST_CASE("reachability loss closed forms") {
  Rng rng(2233);
  const int n = 2, m = 1;
  Mat<double> a(n, n + m);
  a(0, 0) = 0.8;
  a(0, 1) = 0.1;
  a(0, 2) = 0.3;
  a(1, 1) = 0.9;
  auto affine = affine_net(a, Vec<double>{0.05, -0.05});
  auto data = episodes_from_net(affine, n, m, 4, 4, rng);

  SUBCASE("eps = 0 with an affine model gives zero loss") {
    CHECK(std::abs(reach_loss(affine, data, 0.0, 3, 20.0)) <= 1e-12);
  }
  SUBCASE("identity model: log(1 + 2 n eps T_h)") {
    Mat<double> id(n, n + m);
    id(0, 0) = id(1, 1) = 1.0;
    auto ident = affine_net(id, Vec<double>(n, 0.0));
    const double eps = 0.07;
    const int t_h = 3;
    double expect = std::log(1.0 + 2.0 * n * eps * t_h);
    CHECK(reach_loss(ident, data, eps, t_h, 20.0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("reachability loss gradient matches finite differences") {
  Rng rng(3344);
  const int n = 2, m = 1;
  auto truth = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.5);
  auto data = episodes_from_net(truth, n, m, 2, 3, rng);
  auto shape = random_mlp(rng, n + m, {6}, n, Act::Tanh, 0.5);
  auto objective = [&](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::value_type;
    return reach_loss(net_with_params<S>(shape, p), data, 0.05, 2, 20.0);
  };
  Vec<double> params = net_params(shape);
  auto gf = grad_forward(objective, params);
  auto gd = grad_fd(objective, params);
  double scale = 1e-8;
  for (double v : gf.g) scale = std::max(scale, std::abs(v));
  for (size_t j = 0; j < params.size(); ++j)
    CHECK(std::abs(gf.g[j] - gd.g[j]) / scale <= 1e-4);
}

TEST_CASE("tracking loss basics") {
  auto plant = [](const auto& x, const auto& u, auto& dx) {
    dx.resize(x.size());
    dx[0] = u[0];  // single integrator
  };

  SUBCASE("controller that generated the data has zero loss") {
    Mat<double> k(1, 1);
    k(0, 0) = -0.5;
    auto ctl = affine_net(k, Vec<double>(1, 0.0));
    Episode ep;
    Vec<double> x{0.8};
    ep.states.push_back(x);
    const double delta = 0.1;
    const int substeps = 4;
    for (int t = 0; t < 5; ++t) {
      Vec<double> u = ctl.forward(x);
      std::function<void(const Vec<double>&, Vec<double>&)> rhs =
          [&](const Vec<double>& s, Vec<double>& ds) { plant(s, u, ds); };
      for (int ss = 0; ss < substeps; ++ss) x = rk4_step<double>(rhs, x, delta / substeps);
      ep.actions.push_back(u);
      ep.states.push_back(x);
    }
    double l = track_loss(ctl, plant, std::vector<Episode>{ep}, 5, horizon_weights(5), 0.5,
                          delta, substeps);
    CHECK(l == 0.0);
  }

  SUBCASE("gamma = 0 reduces to pure action imitation") {
    Mat<double> k(1, 1);
    k(0, 0) = -0.3;
    auto ctl = affine_net(k, Vec<double>(1, 0.0));
    Episode ep;
    ep.states = {{1.0}, {0.9}, {0.7}};
    ep.actions = {{0.2}, {-0.4}};  // not what the controller would do
    // manual imitation loss starting from the proxy rollout states
    double delta = 0.1;
    Vec<double> xhat{1.0};
    double expect = 0.0;
    auto w = horizon_weights(2);
    for (int t = 0; t < 2; ++t) {
      Vec<double> u = ctl.forward(xhat);
      double d = u[0] - ep.actions[static_cast<size_t>(t)][0];
      expect += w[static_cast<size_t>(t)] * d * d;
      std::function<void(const Vec<double>&, Vec<double>&)> rhs =
          [&](const Vec<double>& s, Vec<double>& ds) { ds = {u[0]}; };
      for (int ss = 0; ss < 4; ++ss) xhat = rk4_step<double>(rhs, xhat, delta / 4);
    }
    expect /= 2.0;
    double l = track_loss(ctl, plant, std::vector<Episode>{ep}, 2, w, 0.0, delta, 4);
    CHECK(l == doctest::Approx(expect).epsilon(1e-14));
  }

  SUBCASE("gradient vs finite differences on a double integrator") {
    auto dint = [](const auto& x, const auto& u, auto& dx) {
      dx.resize(2);
      dx[0] = x[1];
      dx[1] = u[0];
    };
    Rng rng(4455);
    auto shape = random_mlp(rng, 2, {4}, 1, Act::Tanh, 0.8);
    Episode ep;
    Vec<double> x{0.5, -0.2};
    ep.states.push_back(x);
    for (int t = 0; t < 3; ++t) {
      Vec<double> u{rng.uniform(-0.5, 0.5)};
      x = {x[0] + 0.1 * x[1], x[1] + 0.1 * u[0]};
      ep.actions.push_back(u);
      ep.states.push_back(x);
    }
    auto objective = [&](const auto& p) {
      using S = typename std::decay_t<decltype(p)>::value_type;
      return track_loss(net_with_params<S>(shape, p), dint, std::vector<Episode>{ep}, 3,
                        horizon_weights(3), 0.2, 0.1, 4);
    };
    Vec<double> params = net_params(shape);
    auto gf = grad_forward(objective, params);
    auto gd = grad_fd(objective, params);
    double scale = 1e-8;
    for (double v : gf.g) scale = std::max(scale, std::abs(v));
    for (size_t j = 0; j < params.size(); ++j)
      CHECK(std::abs(gf.g[j] - gd.g[j]) / scale <= 1e-4);
  }
}

TEST_CASE("plain multi-step regression recovers a linear system") {
  Rng rng(5566);
  const int n = 2, m = 1;
  Mat<double> truth(n, n + m);
  truth(0, 0) = 0.85;
  truth(0, 1) = 0.20;
  truth(0, 2) = 0.10;
  truth(1, 0) = -0.15;
  truth(1, 1) = 0.80;
  truth(1, 2) = 0.25;
  auto gen = affine_net(truth, Vec<double>(n, 0.0));
  auto data = episodes_from_net(gen, n, m, 32, 4, rng);

  auto init = random_mlp(rng, n + m, {}, n, Act::Identity, 0.2);
  TrainConfig cfg;
  cfg.horizon_max = 3;
  cfg.iters = 1500;
  cfg.batch = 8;
  cfg.lr = 0.01;
  cfg.lambda = 0.0;
  cfg.seed = 99;
  auto res = train_dt_dyn(init, cfg, data);

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j)
      CHECK(std::abs(res.net.layers[0].w(i, j) - truth(i, j)) <= 1e-2);
  // loss decomposition invariant on the log
  for (const auto& r : res.log.rows) CHECK(r.l_total == r.l_pred + cfg.lambda * r.l_reach);
  // training made progress
  CHECK(res.log.rows.back().l_pred < 0.05 * res.log.rows.front().l_pred);
}

TEST_CASE("certified training shrinks the evaluation tube") {
  Rng rng(6677);
  const int n = 2, m = 1;
  auto truth = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.5);
  for (auto& w : truth.layers.back().w.a) w *= 0.8;
  auto data = episodes_from_net(truth, n, m, 16, 4, rng);
  auto init = random_mlp(rng, n + m, {16}, n, Act::Tanh, 0.4);

  TrainConfig cfg;
  cfg.horizon_max = 3;
  cfg.iters = 60;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.eps0 = 0.1;
  cfg.eps_final = 0.05;
  cfg.seed = 7;

  TrainConfig plain = cfg;
  plain.lambda = 0.0;
  TrainConfig cert = cfg;
  cert.lambda = 0.01;
  auto r_plain = train_dt_dyn(init, plain, data);
  auto r_cert = train_dt_dyn(init, cert, data);

  // evaluation: predicted tube volume at eps_final from held-out starts
  auto eval_volume = [&](const MLPNet<double>& net) {
    DTSystem<double> sys;
    sys.step = net;
    sys.n = n;
    sys.m = m;
    Rng eval_rng(42);
    double vol = 0.0;
    for (int c = 0; c < 5; ++c) {
      Vec<double> x0{eval_rng.uniform(-0.5, 0.5), eval_rng.uniform(-0.5, 0.5)};
      std::vector<Vec<double>> acts(3, Vec<double>{0.0});
      auto tube = dt_reach(sys, box_from_center(x0, cfg.eps_final), acts);
      vol += value(predicted_volume(tube));
    }
    return vol;
  };
  double v_plain = eval_volume(r_plain.net);
  double v_cert = eval_volume(r_cert.net);
  CHECK(v_cert < v_plain);
  // the certified run must stay a competitive predictor on held-out rollouts
  auto holdout = episodes_from_net(truth, n, m, 16, 4, rng);
  CHECK(pred_loss(r_cert.net, holdout, 3, horizon_weights(3)) <= 1e-4);
  // loss decomposition invariant with lambda > 0
  for (const auto& r : r_cert.log.rows)
    CHECK(r.l_total == r.l_pred + cert.lambda * r.l_reach);
}

TEST_CASE("fixed seed reproduces the training log byte for byte") {
  Rng rng(8899);
  const int n = 2, m = 1;
  auto truth = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.5);
  auto data = episodes_from_net(truth, n, m, 8, 4, rng);
  auto init = random_mlp(rng, n + m, {8}, n, Act::Tanh, 0.4);
  TrainConfig cfg;
  cfg.horizon_max = 3;
  cfg.iters = 10;
  cfg.batch = 2;
  cfg.lambda = 0.05;
  cfg.seed = 1234;
  auto a = train_dt_dyn(init, cfg, data);
  auto b = train_dt_dyn(init, cfg, data);
  CHECK(a.log.to_csv() == b.log.to_csv());
  auto pa = net_params(a.net), pb = net_params(b.net);
  for (size_t j = 0; j < pa.size(); ++j) CHECK(pa[j] == pb[j]);
}

TEST_CASE("controller training imitates a realizable feedback law") {
  auto plant = [](const auto& x, const auto& u, auto& dx) {
    dx.resize(1);
    dx[0] = u[0];
  };
  // expert: u = -x, exactly representable by a 1x1 linear controller
  Mat<double> ke(1, 1);
  ke(0, 0) = -1.0;
  auto expert = affine_net(ke, Vec<double>(1, 0.0));
  const double delta = 0.1;
  Rng rng(7755);
  std::vector<Episode> data;
  for (int e = 0; e < 8; ++e) {
    Episode ep;
    Vec<double> x{rng.uniform(-1.0, 1.0)};
    ep.states.push_back(x);
    for (int t = 0; t < 4; ++t) {
      Vec<double> u = expert.forward(x);
      std::function<void(const Vec<double>&, Vec<double>&)> rhs =
          [&](const Vec<double>& s, Vec<double>& ds) { plant(s, u, ds); };
      for (int ss = 0; ss < 4; ++ss) x = rk4_step<double>(rhs, x, delta / 4);
      ep.actions.push_back(u);
      ep.states.push_back(x);
    }
    data.push_back(std::move(ep));
  }

  auto init = random_mlp(rng, 1, {}, 1, Act::Identity, 0.2);
  TrainConfig cfg;
  cfg.horizon_max = 3;
  cfg.iters = 600;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.lambda = 0.0;
  cfg.seed = 3;
  auto res = train_ct_ctl(init, cfg, data, plant, 1, 1, delta);
  CHECK(res.log.rows.back().l_pred <= 1e-4);  // tracking loss column
  CHECK(res.net.layers[0].w(0, 0) == doctest::Approx(-1.0).epsilon(1e-2));

  // gradient of the full certified controller loss agrees with FD
  auto shape = random_mlp(rng, 1, {3}, 1, Act::Tanh, 0.5);
  auto objective = [&](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::value_type;
    MLPNet<S> model = net_with_params<S>(shape, p);
    S l = track_loss(model, plant, data, 2, horizon_weights(2), 0.2, delta, 4);
    l += S(0.05) * ctl_reach_loss(model, plant, data, 0.05, 2, 1, 1, delta, 1, 20.0);
    return l;
  };
  Vec<double> params = net_params(shape);
  auto gf = grad_forward(objective, params);
  auto gd = grad_fd(objective, params);
  double scale = 1e-8;
  for (double v : gf.g) scale = std::max(scale, std::abs(v));
  for (size_t j = 0; j < params.size(); ++j)
    CHECK(std::abs(gf.g[j] - gd.g[j]) / scale <= 1e-4);
}
