#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lnf/poly.hpp"
#include "lnf/resonance.hpp"

using namespace lnf;

namespace {

SpectrumTable torus(int d, double k) {
  return SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(d)), k);
}

ExtId ext(const SpectrumTable& t, std::initializer_list<int> p, int s) {
  return make_ext(t.index_of(make_point(p)), s);
}

// Central finite difference in each coordinate; polynomial so h^2 error only.
StateVector fd_gradient(const Poly& f, const StateVector& u, double h = 1e-4) {
  StateVector g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    StateVector p = u, m = u;
    p[i] += h;
    m[i] -= h;
    g[i] = (evaluate(f, p) - evaluate(f, m)) / (2.0 * h);
  }
  return g;
}

double rel_diff(cplx a, cplx b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

StateVector rk4_step(const Poly& g, const StateVector& u, double h) {
  auto axpy = [](const StateVector& x, double a, const StateVector& y) {
    StateVector z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + a * y[i];
    return z;
  };
  const auto k1 = vector_field(g, u);
  const auto k2 = vector_field(g, axpy(u, h / 2, k1));
  const auto k3 = vector_field(g, axpy(u, h / 2, k2));
  const auto k4 = vector_field(g, axpy(u, h, k3));
  StateVector out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + h / 6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

}  // namespace

TEST_CASE("key canonicalization and multiplicity") {
  const Key k{5, 1, 3, 1};
  CHECK(k.degree() == 4);
  CHECK(k == Key{1, 1, 3, 5});
  CHECK(multiplicity(k) == 12.0);
  CHECK(multiplicity(Key{2, 2, 2}) == 1.0);
  CHECK(k.conj() == Key{0, 0, 2, 4});
}

TEST_CASE("mu_S examples") {
  const auto t = torus(2, 4.0);
  std::vector<ExtId> a{ext(t, {3, 0}, 1), ext(t, {2, 1}, 1), ext(t, {1, 0}, 1)};
  auto m = mu_S(a, t);
  CHECK(m.mu == 1.0);
  CHECK(m.s == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-14));
  std::vector<ExtId> b{a[2], a[0], a[1]};
  CHECK(mu_S(b, t).s == m.s);
  std::vector<ExtId> eq(3, ext(t, {2, 1}, -1));
  m = mu_S(eq, t);
  CHECK(m.mu == doctest::Approx(std::sqrt(5.0)));
  CHECK(m.s == m.mu);
  std::vector<ExtId> z{ext(t, {3, 0}, 1), ext(t, {2, 0}, 1), ext(t, {0, 0}, 1)};
  CHECK_THROWS(mu_S(z, t));
  CHECK(mu_S(z, t, ZeroModePolicy::ShiftByOne).mu == 1.0);
  CHECK(mu_S(z, t, ZeroModePolicy::ShiftByOne).s == 2.0);
  // Degree below three repeats the smallest index.
  std::vector<ExtId> two{ext(t, {3, 0}, 1), ext(t, {1, 0}, -1)};
  CHECK(mu_S(two, t).mu == 1.0);
  CHECK(mu_S(two, t).s == 3.0);
}

TEST_CASE("localized norm examples") {
  const auto t = torus(1, 6.0);
  Poly f;
  const ExtId a = ext(t, {3}, 1);
  f.add(Key{a, a, a}, 1.0);
  for (double nu : {0.0, 0.5, 2.0}) {
    CHECK(localized_norm(f, nu, 4.0, t) == doctest::Approx(std::pow(3.0, -nu)).epsilon(1e-14));
  }
  CHECK(localized_norm(Poly{}, 0.0, 4.0, t) == 0.0);
  std::mt19937_64 rng(1);
  const auto g = random_form(t, 3, 10, rng);
  const double n1 = localized_norm(g, 0.5, 4.0, t, ZeroModePolicy::ShiftByOne);
  CHECK(localized_norm(g * 2.0, 0.5, 4.0, t, ZeroModePolicy::ShiftByOne) == doctest::Approx(2 * n1));
  CHECK(localized_norm(f, 0.0, 4.0, t, ZeroModePolicy::Reject, 2.0) == doctest::Approx(8.0));
}

TEST_CASE("evaluation examples") {
  const auto t = torus(1, 3.0);
  const ExtId ap = ext(t, {1}, 1), am = ext(t, {1}, -1);
  Poly f;
  f.add_monomial(Key{ap, am}, 1.0);
  StateVector u = zero_state(t);
  u[ap] = 2.0;
  u[am] = 3.0;
  CHECK(evaluate(f, u) == cplx(6.0));
  CHECK(evaluate(f, zero_state(t)) == cplx(0.0));

  std::mt19937_64 rng(5);
  u = random_state(t, rng, 0.0, true);
  const auto x = vector_field(h0_poly(t), u);
  for (std::size_t e = 0; e < t.size(); ++e) {
    CHECK(std::abs(x[make_ext(e, 1)] - cplx(0, -t[e].omega) * u[make_ext(e, 1)]) < 1e-13);
    CHECK(std::abs(x[make_ext(e, -1)] - cplx(0, t[e].omega) * u[make_ext(e, -1)]) < 1e-13);
  }
}

TEST_CASE("sparse evaluation equals dense symmetrization") {
  // |Lambda| = 5 on T^1 with K = 2, so 10 extended ids; random dense symmetric tensors for r <= 3.
  const auto t = torus(1, 2.0);
  const std::size_t m = 2 * t.size();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int r = 1; r <= 3; ++r) {
    Poly sparse;
    std::vector<std::size_t> idx(static_cast<std::size_t>(r), 0);
    // Assign coefficients per multiset, then expand densely over all ordered tuples.
    std::map<std::vector<ExtId>, cplx> coef;
    while (true) {
      std::vector<ExtId> ids(idx.begin(), idx.end());
      const cplx c{g(rng), g(rng)};
      coef[ids] = c;
      sparse.add(Key(ids), c);
      int j = r - 1;
      while (j >= 0 && idx[static_cast<std::size_t>(j)] == m - 1) --j;
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
      for (int k = j + 1; k < r; ++k) idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(j)];
    }
    const auto u = random_state(t, rng, 0.0);
    cplx dense{};
    std::vector<std::size_t> tup(static_cast<std::size_t>(r), 0);
    while (true) {
      std::vector<ExtId> s(tup.begin(), tup.end());
      std::sort(s.begin(), s.end());
      cplx p = coef.at(s);
      for (std::size_t i : tup) p *= u[i];
      dense += p;
      int j = r - 1;
      while (j >= 0 && tup[static_cast<std::size_t>(j)] == m - 1) tup[static_cast<std::size_t>(j--)] = 0;
      if (j < 0) break;
      ++tup[static_cast<std::size_t>(j)];
    }
    CHECK(rel_diff(dense, evaluate(sparse, u)) < 1e-12);
    CHECK(rel_diff(dense, FlatPoly(sparse).evaluate(u)) < 1e-12);
  }
}

TEST_CASE("gradient matches finite differences and FlatPoly") {
  const auto t = torus(2, 2.0);
  std::mt19937_64 rng(2);
  const auto f = random_form(t, 3, 30, rng) + random_form(t, 4, 30, rng);
  const auto u = random_state(t, rng, 0.0);
  const auto g = gradient(f, u);
  const auto fd = fd_gradient(f, u);
  StateVector fg;
  FlatPoly(f).gradient(u, fg);
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(rel_diff(g[i], fd[i]) < 1e-7);
    CHECK(rel_diff(g[i], fg[i]) < 1e-13);
  }
}

TEST_CASE("bracket against an independent finite-difference contraction") {
  const auto t = torus(1, 3.0);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_form(t, 2 + trial % 3, 12, rng);
    const auto g = random_form(t, 2 + (trial + 1) % 3, 12, rng);
    const auto u = random_state(t, rng, 0.0);
    const auto gf = fd_gradient(f, u);
    const auto gg = fd_gradient(g, u);
    cplx expect{};
    for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
      expect += gf[i] * cplx(0, -1) * gg[i + 1] + gf[i + 1] * cplx(0, 1) * gg[i];
    }
    CHECK(rel_diff(evaluate(poisson_bracket(f, g), u), expect) < 1e-7);
  }
}

TEST_CASE("H0 eigen-relation, antisymmetry and superaction commutation") {
  const auto t = torus(1, 6.0);
  const Poly h0 = h0_poly(t);
  const Key mono{ext(t, {3}, 1), ext(t, {2}, -1), ext(t, {2}, -1), ext(t, {1}, 1)};
  Poly m;
  m.add_monomial(mono, 1.0);
  const auto b = poisson_bracket(h0, m);
  // Sum sigma_j omega_j = 9 - 4 - 4 + 1 = 2.
  CHECK(std::abs(b.monomial_coeff(mono) - cplx(0, 2)) < 1e-14);
  CHECK(b.size() == 1);
  CHECK(std::abs(h0_bracket(m, t).monomial_coeff(mono) - cplx(0, 2)) < 1e-14);

  std::mt19937_64 rng(8);
  const auto f = random_form(t, 3, 20, rng) + random_form(t, 4, 20, rng);
  CHECK(poisson_bracket(f, f).max_abs() < 1e-12);
  const auto fg = poisson_bracket(f, h0);
  const auto gf = poisson_bracket(h0, f);
  CHECK((fg + gf).max_abs() < 1e-12);
  CHECK((gf - h0_bracket(f, t)).max_abs() < 1e-12);

  const auto s = make_setting(t);
  for (std::size_t n = 0; n < s.bands.size(); ++n) {
    std::vector<std::size_t> ents;
    for (std::size_t e = 0; e < t.size(); ++e) if (s.band_id[e] == n) ents.push_back(e);
    CHECK(poisson_bracket(h0, quadratic_mass(t, ents)).empty());
  }
}

TEST_CASE("Jacobi identity on random sparse forms") {
  const auto t = torus(2, 2.0);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    const auto f = random_form(t, 2 + trial % 3, 15, rng);
    const auto g = random_form(t, 3, 15, rng);
    const auto h = random_form(t, 2 + (trial + 1) % 3, 15, rng);
    const auto j1 = poisson_bracket(f, poisson_bracket(g, h));
    const auto j2 = poisson_bracket(g, poisson_bracket(h, f));
    const auto j3 = poisson_bracket(h, poisson_bracket(f, g));
    const double scale = std::max({j1.max_abs(), j2.max_abs(), j3.max_abs()});
    CHECK((j1 + j2 + j3).max_abs() <= 1e-10 * scale);
  }
}

TEST_CASE("bilinearity") {
  const auto t = torus(1, 3.0);
  std::mt19937_64 rng(13);
  const auto f = random_form(t, 3, 10, rng), g = random_form(t, 3, 10, rng), h = random_form(t, 2, 10, rng);
  const cplx a{0.3, -1.1};
  const auto lhs = poisson_bracket(f * a + g, h);
  const auto rhs = poisson_bracket(f, h) * a + poisson_bracket(g, h);
  CHECK((lhs - rhs).max_abs() < 1e-12);
}

TEST_CASE("flow derivative equals the bracket") {
  const auto t = torus(1, 3.0);
  std::mt19937_64 rng(21);
  const auto f = random_form(t, 3, 15, rng, true);
  const auto g = random_form(t, 4, 15, rng, true) + h0_poly(t);
  const auto u = random_state(t, rng, 0.0, true);
  const double h = 1e-5;
  const cplx d = (evaluate(f, rk4_step(g, u, h)) - evaluate(f, rk4_step(g, u, -h))) / (2 * h);
  CHECK(rel_diff(d, evaluate(poisson_bracket(f, g), u)) < 1e-6);
}

TEST_CASE("vector-field seminorm bound") {
  const auto t = torus(2, 3.0);
  std::mt19937_64 rng(31);
  for (int r = 2; r <= 5; ++r) {
    const auto f = random_form(t, r, 25, rng);
    const double xf = vector_field_seminorm(f, 0.5, 6.0, t, ZeroModePolicy::ShiftByOne);
    const double nf = localized_norm(f, 0.5, 6.0, t, ZeroModePolicy::ShiftByOne);
    CHECK(xf <= r * nf * (1 + 1e-12));
    CHECK(xf > 0.0);
  }
}

TEST_CASE("reality closure") {
  const auto t = torus(1, 4.0);
  std::mt19937_64 rng(41);
  const auto f = random_form(t, 3, 10, rng, true);
  const auto g = random_form(t, 4, 10, rng, true);
  CHECK(is_real(f));
  CHECK(is_real(poisson_bracket(f, g)));
  CHECK_FALSE(is_real(random_form(t, 3, 10, rng)));
  const auto u = random_state(t, rng, 0.0, true);
  CHECK(std::abs(evaluate(f, u).imag()) < 1e-12);
}

TEST_CASE("split and high-order decomposition") {
  const auto t = torus(1, 6.0);
  std::mt19937_64 rng(51);
  const auto u = random_state(t, rng, 0.0);
  const auto s = split(u, 3.0, t);
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(s.low[i] + s.high[i] == u[i]);
    CHECK(s.low[i] * s.high[i] == cplx(0.0));
  }
  const auto s2 = split(s.low, 3.0, t);
  CHECK(s2.low == s.low);

  const Key k{ext(t, {5}, 1), ext(t, {-4}, -1), ext(t, {1}, 1), ext(t, {2}, -1)};
  CHECK(order_in_high(k, 3.0, t) == 2);
  Poly one;
  one.add(k, 1.0);
  CHECK(order_in_high(one, 3.0, t) == 2);
  const auto f = random_form(t, 4, 60, rng);
  const auto parts = decompose_by_high_order(f, 3.0, t);
  CHECK((parts[0] + parts[1] + parts[2] + parts[3] - f).max_abs() == 0.0);
  CHECK(order_in_high(f, 3.0, t) == -1);
  // F(u_low + lambda u_high) = lambda^k F(u) for a part homogeneous of order k.
  for (int k2 = 0; k2 < 3; ++k2) {
    if (parts[k2].empty()) continue;
    StateVector v = s.low;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.7 * s.high[i];
    CHECK(rel_diff(evaluate(parts[k2], v), std::pow(0.7, k2) * evaluate(parts[k2], u)) < 1e-12);
  }
}

TEST_CASE("sobolev norm examples") {
  const auto t = torus(1, 3.0);
  StateVector u = zero_state(t);
  u[ext(t, {1}, 1)] = 1.0;
  CHECK(sobolev_norm(u, 1.0, t) == doctest::Approx(2.0));
  CHECK(sobolev_norm(zero_state(t), 1.0, t) == 0.0);
  std::mt19937_64 rng(61);
  u = random_state(t, rng, 0.0);
  double l2 = 0.0;
  for (auto c : u) l2 += std::norm(c);
  CHECK(sobolev_norm(u, 0.0, t) == doctest::Approx(std::sqrt(l2)));
  CHECK(sobolev_norm(u, 1.0, t, SobolevWeight::Floor) == doctest::Approx(sobolev_norm(u, 1.0, t)));
}

TEST_CASE("multilinear field") {
  const auto t = torus(1, 3.0);
  std::mt19937_64 rng(71);
  const auto f = random_form(t, 4, 20, rng);
  // Diagonal agrees with the vector field.
  const auto u = random_state(t, rng, 0.0);
  const auto x = vector_field(f, u);
  const auto xm = multilinear_field(f, {u, u, u});
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(rel_diff(x[i], xm[i]) < 1e-12);
  // Symmetric in its arguments and linear in each.
  const auto v = random_state(t, rng, 0.0), w = random_state(t, rng, 0.0);
  const auto p1 = multilinear_field(f, {u, v, w});
  const auto p2 = multilinear_field(f, {w, u, v});
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(rel_diff(p1[i], p2[i]) < 1e-12);
  StateVector u2 = u;
  for (auto& c : u2) c *= 3.0;
  const auto p3 = multilinear_field(f, {u2, v, w});
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(rel_diff(p3[i], 3.0 * p1[i]) < 1e-12);
}

TEST_CASE("tame verification") {
  const auto t = torus(1, 8.0);
  std::mt19937_64 rng(81);
  TameParams p{0.0, 5.0, 2.0, 1.75};
  CHECK(verify_tame(Poly{}, p, 10, t, rng) == 0.0);
  CHECK_THROWS(verify_tame(Poly{}, TameParams{0.0, 5.0, 1.0, 0.9}, 10, t, rng));
  CHECK_THROWS(verify_tame(Poly{}, TameParams{0.0, 2.5, 2.0, 1.75}, 10, t, rng));

  // Quadratic single coefficient on one-mode inputs: closed form.
  const ExtId a = ext(t, {3}, 1), b = ext(t, {-1}, 1);
  Poly q;
  q.add(Key{a, b}, 0.5);
  StateVector e = zero_state(t);
  e[b] = 1.0;
  const auto xv = multilinear_field(q, {e});
  CHECK(std::abs(xv[ext_conj(a)] - cplx(0, 1.0)) < 1e-15);
  const double lhs = std::pow(4.0, 2.0);
  const double rhs = vector_field_seminorm(q, 0.0, 5.0, t, ZeroModePolicy::ShiftByOne) * std::pow(2.0, 2.0);
  // mu = 1 + 1 (shifted), S = 2 + 4.
  CHECK(vector_field_seminorm(q, 0.0, 5.0, t, ZeroModePolicy::ShiftByOne) == doctest::Approx(2 * 0.5 * std::pow(3.0, 5.0)));
  CHECK(lhs / rhs < 1.0);

  const auto f = random_form(t, 3, 40, rng);
  const double c = verify_tame(f, p, 60, t, rng);
  CHECK(c > 0.0);
  CHECK(std::isfinite(c));
}

TEST_CASE("bilinear eigenfunction estimate") {
  const auto t = torus(1, 8.0);
  std::map<LatticePoint, cplx> one{{make_point({0}), 1.0}};
  const auto i3 = t.index_of(make_point({3})), i2 = t.index_of(make_point({2})), im3 = t.index_of(make_point({-3}));
  CHECK(verify_bilinear_eigen(one, 2, 0.0, 4.0, t, {{i3, i2}}).worst_ratio == 0.0);
  const auto r = verify_bilinear_eigen(one, 2, 0.0, 4.0, t, {{i3, im3}});
  // mu = 1 + 3, S = 4 + 6; integral = 2 pi.
  CHECK(r.worst_ratio == doctest::Approx(2 * M_PI * std::pow(10.0, 4) / std::pow(4.0, 4)));

  std::map<LatticePoint, cplx> decay;
  for (int m = -30; m <= 30; ++m) decay[make_point({m})] = std::exp(-std::abs(m));
  std::vector<std::vector<std::size_t>> small, large;
  for (std::size_t x = 0; x < t.size(); ++x)
    for (std::size_t y = 0; y < t.size(); ++y)
      for (std::size_t z = 0; z < t.size(); ++z) {
        if (t[x].abs <= 4 && t[y].abs <= 4 && t[z].abs <= 4) small.push_back({x, y, z});
        large.push_back({x, y, z});
      }
  const auto rs = verify_bilinear_eigen(decay, 3, 0.0, 3.0, t, small);
  const auto rl = verify_bilinear_eigen(decay, 3, 0.0, 3.0, t, large);
  CHECK(std::isfinite(rl.worst_ratio));
  CHECK(rl.worst_ratio >= rs.worst_ratio);
  CHECK(rl.checked == large.size());
  const auto kt = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1, {0.5, 0, 0})), 3.0);
  CHECK_THROWS(verify_bilinear_eigen(one, 2, 0.0, 4.0, kt, {}));
}

TEST_CASE("multiply by mass") {
  const auto t = torus(1, 3.0);
  Poly p;
  const ExtId a = ext(t, {2}, 1);
  p.add(Key{a}, 1.0);
  const auto q = multiply_by_mass(p, t);
  CHECK(q.min_degree() == 3);
  CHECK(q.max_degree() == 3);
  CHECK(q.size() == t.size());
  std::mt19937_64 rng(91);
  const auto f = random_form(t, 3, 10, rng);
  const auto fq = multiply_by_mass(f, t);
  const auto u = random_state(t, rng, 0.0);
  cplx mass{};
  for (std::size_t e = 0; e < t.size(); ++e) mass += u[make_ext(e, 1)] * u[make_ext(e, -1)];
  CHECK(rel_diff(evaluate(fq, u), evaluate(f, u) * mass) < 1e-12);
  const double ratio = localized_norm(fq, 1.0, 3.0, t, ZeroModePolicy::ShiftByOne) /
                       localized_norm(f, 0.0, 4.0, t, ZeroModePolicy::ShiftByOne);
  CHECK(std::isfinite(ratio));
}

TEST_CASE("high-order smallness decays with the cutoff") {
  // Quartic cubic-NLS form restricted to order >= 3 in u^perp; sup over the Sobolev ball of radius R.
  const auto t = torus(1, 24.0);
  Poly f;
  for (std::size_t a = 0; a < t.size(); ++a)
    for (std::size_t b = 0; b < t.size(); ++b)
      for (std::size_t c = 0; c < t.size(); ++c) {
        const int pd = t[a].point.n[0] + t[b].point.n[0] - t[c].point.n[0];
        auto d = t.find(make_point({pd}));
        if (!d) continue;
        f.add_monomial(Key{make_ext(a, 1), make_ext(b, 1), make_ext(c, -1), make_ext(*d, -1)}, 0.5);
      }
  const double s = 2.0, s0 = 1.75, radius = 1.0;
  std::mt19937_64 rng(101);
  std::vector<StateVector> probes;
  for (int i = 0; i < 20; ++i) probes.push_back(random_state(t, rng, 0.5 + 0.25 * i, true));
  std::vector<double> lk, ls;
  for (double k : {3.5, 6.5, 12.5}) {
    const auto hi = decompose_by_high_order(f, k, t)[3];
    FlatPoly flat(hi);
    std::vector<StateVector> family = probes;
    for (double spread : {1.0, 2.0, 4.0}) {
      StateVector v = zero_state(t);
      for (std::size_t e = 0; e < t.size(); ++e) {
        if (t[e].abs > k && t[e].abs <= spread * k + 1) v[make_ext(e, 1)] = std::pow(1 + t[e].abs, -s);
      }
      make_real(v);
      family.push_back(v);
    }
    double sup = 0.0;
    StateVector x;
    for (auto v : family) {
      const double n = sobolev_norm(v, s, t);
      if (n == 0.0) continue;
      for (auto& c : v) c *= radius / n;
      flat.vector_field(v, x);
      sup = std::max(sup, sobolev_norm(x, s, t));
    }
    REQUIRE(sup > 0.0);
    lk.push_back(std::log(k));
    ls.push_back(std::log(sup));
  }
  const double mx = (lk[0] + lk[1] + lk[2]) / 3, my = (ls[0] + ls[1] + ls[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lk[i] - mx) * (ls[i] - my);
    sxx += (lk[i] - mx) * (lk[i] - mx);
  }
  const double slope = sxy / sxx;
  MESSAGE("fitted slope " << slope);
  CHECK(slope <= -(s - s0) / 2.0);
}

TEST_CASE("serialization round trips") {
  const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(2, {0.25, 0, 0})), 2.0);
  std::mt19937_64 rng(111);
  const auto f = random_form(t, 3, 20, rng);
  std::stringstream ss;
  write_poly_jsonl(f, t, ss);
  const auto g = read_poly_jsonl(ss, t);
  CHECK((f - g).max_abs() == 0.0);
  CHECK(g.size() == f.size());

  const auto u = random_state(t, rng, 0.0);
  std::stringstream cs;
  write_state_csv(u, t, cs);
  CHECK(cs.str().rfind("ax1,ax2,sign,re,im\n", 0) == 0);
  CHECK(read_state_csv(cs, t) == u);

  std::stringstream bad("{\"indexes\": [[[0.3, 0], 1]], \"re\": 1, \"im\": 0}\n");
  CHECK_THROWS(read_poly_jsonl(bad, t));
}

TEST_CASE("cutoff inequality computed from definitions") {
  const auto t = torus(1, 20.0);
  const double k = 8.5, delta = 0.5;
  // mu small relative to the separation: holds.
  Poly ok;
  ok.add(Key{ext(t, {12}, 1), ext(t, {-11}, -1), ext(t, {1}, 1)}, 1.0);
  auto r = check_cutoff_inequality(ok, 0.0, 4.0, 6.0, k, delta, t);
  CHECK(r.holds);
  // mu comparable to the separation: the inequality fails although |a1 - a2| > K^delta.
  Poly bad;
  bad.add(Key{ext(t, {20}, 1), ext(t, {16}, -1), ext(t, {8}, 1)}, 1.0);
  r = check_cutoff_inequality(bad, 0.0, 4.0, 6.0, k, delta, t);
  CHECK_FALSE(r.holds);
  CHECK(r.worst == bad.terms().begin()->first);
}
