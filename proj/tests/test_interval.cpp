#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reach/interval.hpp"
#include "reach/rng.hpp"

using namespace reach;

TEST_CASE("interval addition") {
  Iv r = iv_add(Iv{1, 2}, Iv{3, 4});
  CHECK(r.lo == 4.0);
  CHECK(r.hi == 6.0);

  Iv id = iv_add(Iv{0, 0}, Iv{-3.5, 7.25});
  CHECK(id.lo == -3.5);
  CHECK(id.hi == 7.25);

  Iv sym = iv_add(Iv{-1, 1}, Iv{-1, 1});
  CHECK(sym.lo == -2.0);
  CHECK(sym.hi == 2.0);
}

TEST_CASE("interval multiplication") {
  Iv r = iv_mul(Iv{-1, 2}, Iv{3, 4});
  CHECK(r.lo == -4.0);
  CHECK(r.hi == 8.0);

  Iv z = iv_mul(Iv{0, 0}, Iv{-5, 9});
  CHECK(z.lo == 0.0);
  CHECK(z.hi == 0.0);

  Iv nn = iv_mul(Iv{-2, -1}, Iv{-3, -2});
  CHECK(nn.lo == 2.0);
  CHECK(nn.hi == 6.0);
}

TEST_CASE("box_from_center") {
  Box b = box_from_center<double>({0.0, 0.0}, 0.05);
  CHECK(b[0].lo == -0.05);
  CHECK(b[0].hi == 0.05);
  CHECK(b[1].lo == -0.05);
  CHECK(b[1].hi == 0.05);

  Box pt = box_from_center<double>({1.0, -2.0}, 0.0);
  CHECK(pt[0].lo == 1.0);
  CHECK(pt[0].hi == 1.0);
  CHECK(pt[1].width() == 0.0);

  Box pv = box_from_center<double>({1.0, 2.0}, Vec<double>{0.1, 0.3});
  CHECK(pv[0].lo == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(pv[0].hi == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(pv[1].lo == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(pv[1].hi == doctest::Approx(2.3).epsilon(1e-15));

  CHECK_THROWS_AS(box_from_center<double>({0.0}, -1.0), std::invalid_argument);
}

TEST_CASE("box_contains") {
  Box b1 = box_from_center<double>({0.0}, 1.0);
  CHECK(box_contains(b1, Vec<double>{0.0}));
  CHECK(box_contains(b1, Vec<double>{1.0}));  // closed box boundary
  Box b2(2);
  b2[0] = {0, 1};
  b2[1] = {0, 1};
  CHECK_FALSE(box_contains(b2, Vec<double>{0.5, 1.5}));
  CHECK_THROWS_AS(box_contains(b2, Vec<double>{0.5}), std::invalid_argument);
}

TEST_CASE("box_volume_proxy is the width sum") {
  Box b(2);
  b[0] = {-1, 1};
  b[1] = {-2, 2};
  CHECK(box_volume_proxy(b) == 6.0);

  Box pt = box_from_center<double>({3.0, 4.0}, 0.0);
  CHECK(box_volume_proxy(pt) == 0.0);

  Box c(3);
  c[0] = {0, 0.1};
  c[1] = {0, 0.2};
  c[2] = {0, 0.3};
  CHECK(box_volume_proxy(c) == doctest::Approx(0.6).epsilon(1e-15));

  Box d(1);
  d[0] = {0, 1};
  d.diverged = true;
  CHECK(std::isinf(box_volume_proxy(d)));
}

static Iv random_iv(Rng& rng) {
  double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
  return a < b ? Iv{a, b} : Iv{b, a};
}

// Random subinterval of x.
static Iv shrink(Rng& rng, const Iv& x) {
  double a = rng.uniform(x.lo, x.hi), b = rng.uniform(x.lo, x.hi);
  return a < b ? Iv{a, b} : Iv{b, a};
}

TEST_CASE("inclusion monotonicity of add and mul") {
  Rng rng(20240811);
  for (int trial = 0; trial < 500; ++trial) {
    Iv a = random_iv(rng), b = random_iv(rng);
    Iv as = shrink(rng, a), bs = shrink(rng, b);
    CHECK(iv_add(as, bs).subset_of(iv_add(a, b)));
    CHECK(iv_mul(as, bs).subset_of(iv_mul(a, b)));
  }
}

TEST_CASE("pointwise soundness over sampled operands") {
  Rng rng(77001);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Iv a = random_iv(rng), b = random_iv(rng);
    Iv sum = iv_add(a, b), prod = iv_mul(a, b);
    for (int s = 0; s < 100; ++s) {
      double x = rng.uniform(a.lo, a.hi), y = rng.uniform(b.lo, b.hi);
      if (!sum.contains(x + y)) ++violations;
      if (!prod.contains(x * y)) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("sin/cos enclosures are sound and within [-1,1]") {
  Rng rng(3344);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    double a = rng.uniform(-10, 10);
    double w = rng.uniform(0, 8);
    Iv x{a, a + w};
    Iv s = iv_sin(x), c = iv_cos(x);
    CHECK(s.lo >= -1.0 - 1e-12);
    CHECK(s.hi <= 1.0 + 1e-12);
    for (int k = 0; k <= 64; ++k) {
      double t = x.lo + (x.hi - x.lo) * k / 64.0;
      if (!s.contains(std::sin(t))) ++violations;
      if (!c.contains(std::cos(t))) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("outward rounding contains the nearest-rounding result") {
  Rng rng(90210);
  for (int trial = 0; trial < 200; ++trial) {
    Iv a = random_iv(rng), b = random_iv(rng);
    Iv sum_n = iv_add(a, b), prod_n = iv_mul(a, b);
    ScopedOutwardRounding guard(true);
    Iv sum_o = iv_add(a, b), prod_o = iv_mul(a, b);
    CHECK(sum_n.subset_of(sum_o));
    CHECK(prod_n.subset_of(prod_o));
    CHECK(sum_o.lo < sum_n.lo);
    CHECK(sum_o.hi > sum_n.hi);
  }
}

TEST_CASE("divergence propagates through boxes") {
  Box b(2);
  b[0] = {0, std::numeric_limits<double>::infinity()};
  b[1] = {0, 1};
  b.check_divergence();
  CHECK(b.diverged);
  Box h = box_hull(b, box_from_center<double>({0.0, 0.0}, 1.0));
  CHECK(h.diverged);
  CHECK(std::isinf(box_volume_proxy(h)));
}
