#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lnf/dynamics.hpp"
#include "lnf/normal_form.hpp"

using namespace lnf;

namespace {

Setting torus(double k) { return make_setting(FrequencyModel::torus_laplacian(Lattice(1)), k); }

Setting multiplier(double k, std::uint64_t seed = 5) {
  const Lattice lat(1);
  const auto t0 = SpectrumTable::build(FrequencyModel::torus_laplacian(lat), k);
  MultiplierEnsemble ens{2.0, seed};
  return make_setting(
      FrequencyModel::spectral_multiplier(FrequencyModel::torus_laplacian(lat), ens.sample(t0)), k);
}

double max_diff(const Modes& a, const Modes& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Modes run(GalerkinSystem& sys, Modes u, double dt, double t_end, bool rk4 = false) {
  const auto steps = static_cast<int>(std::llround(std::abs(t_end / dt)));
  for (int i = 0; i < steps; ++i) {
    if (rk4) sys.rk4_step(u, dt);
    else sys.strang_step(u, dt);
  }
  return u;
}

}  // namespace

TEST_CASE("smooth FFT sizes") {
  CHECK(smooth_size(33) == 36);
  CHECK(smooth_size(7) == 8);
  CHECK(smooth_size(1) == 1);
  CHECK(smooth_size(11) == 12);
  CHECK(smooth_size(61) == 64);
}

TEST_CASE("grid nonlinearity equals the Galerkin polynomial field") {
  for (int d : {1, 2}) {
    const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(d)), d == 1 ? 5.0 : 2.5);
    GalerkinSystem sys(t, Nonlinearity::nls({1.0, -0.3}));
    const Poly p = nls_potential(t, {1.0, -0.3}, 6);
    const Modes u = initial_data(t, 0.5, 1.0, 0.5, 3);
    Modes g;
    sys.nonlinear_field(u, g);
    const auto x = plus_part(vector_field(p, to_state(u)));
    CHECK(max_diff(g, x) <= 1e-13);
    const double h = evaluate(h0_poly(t) + p, to_state(u)).real();
    CHECK(sys.hamiltonian(u) == doctest::Approx(h).epsilon(1e-13));
  }
}

TEST_CASE("linear flow is a phase") {
  const auto s = multiplier(8.0);
  SimulationConfig cfg;
  cfg.eps = 0.5;
  cfg.t_end = 50.0;
  cfg.stride = 1000;
  Modes first, last;
  integrate(s, cfg, std::nullopt, [&](double t, const Modes& u) {
    if (t == 0.0) first = u;
    last = u;
  });
  for (std::size_t e = 0; e < first.size(); ++e) CHECK(std::abs(std::abs(last[e]) - std::abs(first[e])) <= 1e-12);
}

TEST_CASE("mass conservation and time reversibility of the splitting") {
  const auto s = multiplier(8.0);
  GalerkinSystem sys(s.table, Nonlinearity::nls({1.0}));
  const Modes u0 = initial_data(s.table, 0.3, 1.0, 1.0, 7);
  const double dt = 0.1 / sys.max_omega();
  const double t_end = 5.0;
  const Modes u1 = run(sys, u0, dt, t_end);
  CHECK(std::abs(mode_norm(u1, 0, s.table) - mode_norm(u0, 0, s.table)) <= 1e-10 * t_end);
  const Modes back = run(sys, u1, -dt, t_end);
  CHECK(max_diff(back, u0) <= 1e-8);
}

TEST_CASE("Strang global error has Richardson slope 2 against the RK4 reference") {
  const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1)), 1.0);
  REQUIRE(t.size() == 3);
  GalerkinSystem sys(t, Nonlinearity::nls({1.0}));
  const Modes u0{cplx(1.0, 0.2), cplx(0.5, -0.3), cplx(-0.4, 0.6)};
  const Modes ref = run(sys, u0, 1e-3, 10.0, true);
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025, 0.0125}) err.push_back(max_diff(run(sys, u0, dt, 10.0), ref));
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double slope = std::log2(err[i] / err[i + 1]);
    CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
  }
  const Modes ref2 = run(sys, u0, 5e-4, 10.0, true);
  CHECK(max_diff(ref, ref2) < 1e-3 * err.back());
}

TEST_CASE("Strang energy error scales as dt^2") {
  const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1)), 2.0);
  GalerkinSystem sys(t, Nonlinearity::nls({1.0}));
  const Modes u0 = initial_data(t, 0.8, 0.0, 1.0, 2);
  const double h0 = sys.hamiltonian(u0);
  std::vector<double> drift;
  for (double dt : {0.04, 0.02, 0.01}) {
    Modes u = u0;
    double worst = 0.0;
    for (int i = 0; i < static_cast<int>(std::llround(5.0 / dt)); ++i) {
      sys.strang_step(u, dt);
      worst = std::max(worst, std::abs(sys.hamiltonian(u) - h0));
    }
    drift.push_back(worst);
  }
  for (std::size_t i = 0; i + 1 < drift.size(); ++i) {
    CHECK(std::log2(drift[i] / drift[i + 1]) == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("beam: frequencies, linear flow, variables and energy") {
  const Lattice lat(1);
  const auto t = SpectrumTable::build(FrequencyModel::beam(FrequencyModel::torus_laplacian(lat), 1.0), 4.0);
  CHECK(t[t.index_of(make_point({1}))].omega == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  const Setting s = make_setting(t);
  const Modes u0 = initial_data(t, 0.2, 1.0, 1.0, 11);
  CHECK(max_diff(beam_modes(beam_fields(u0, t), t), u0) <= 1e-15);
  const auto f = beam_fields(u0, t);
  for (std::size_t e = 0; e < t.size(); ++e) {
    const std::size_t m = t.index_of(negate(t[e].point));
    CHECK(std::abs(f.psi[e] - std::conj(f.psi[m])) <= 1e-15);
  }

  SimulationConfig cfg;
  cfg.nonlinearity = Nonlinearity::beam({});
  cfg.eps = 0.2;
  cfg.t_end = 20.0;
  cfg.stride = 50;
  Modes first, last;
  const auto rec = integrate_beam(s, cfg, u0, [&](double tt, const Modes& u) {
    if (tt == 0.0) first = u;
    last = u;
  });
  for (std::size_t e = 0; e < t.size(); ++e) CHECK(std::abs(std::abs(last[e]) - std::abs(first[e])) <= 1e-12);
  CHECK(rec.beam_energy_norm.size() == rec.size());

  GalerkinSystem sys(t, Nonlinearity::beam({0.5}));
  const double h0 = sys.hamiltonian(u0);
  std::vector<double> drift;
  for (double dt : {0.02, 0.01, 0.005}) {
    Modes u = u0;
    double worst = 0.0;
    for (int i = 0; i < static_cast<int>(std::llround(2.0 / dt)); ++i) {
      sys.strang_step(u, dt);
      worst = std::max(worst, std::abs(sys.hamiltonian(u) - h0));
    }
    drift.push_back(worst);
  }
  for (std::size_t i = 0; i + 1 < drift.size(); ++i) {
    CHECK(std::log2(drift[i] / drift[i + 1]) == doctest::Approx(2.0).epsilon(0.1));
  }
  CHECK_THROWS(GalerkinSystem(SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1, {0.5, 0, 0})), 3.0),
                              Nonlinearity::beam({1.0})));
}

TEST_CASE("ground-state chart and Bogoliubov map") {
  const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1)), 6.0);
  const std::size_t z = t.index_of(make_point({0}));
  Modes psi(t.size());
  psi[z] = std::sqrt(2.0);
  auto c = ground_state_reduce(psi, t);
  CHECK(c.theta == 0.0);
  CHECK(c.p == doctest::Approx(2.0));
  for (const auto& v : c.phi) CHECK(v == cplx{});

  psi = initial_data(t, 0.3, 1.0, 1.0, 4);
  psi[z] = std::polar(1.3, 0.7);
  c = ground_state_reduce(psi, t);
  CHECK(max_diff(ground_state_reconstruct(c, t), psi) <= 1e-12);
  c.p = 0.0;
  CHECK_THROWS_AS(ground_state_reconstruct(c, t), std::domain_error);

  Modes phi = initial_data(t, 0.3, 1.0, 1.0, 5);
  phi[z] = 0.0;
  const auto id = bogoliubov(phi, t, 0.0);
  CHECK(max_diff(id.w, phi) == 0.0);
  for (std::size_t e = 0; e < t.size(); ++e) {
    if (e != z) CHECK(id.omega[e] == doctest::Approx(t[e].omega));
  }
  const double f = 0.8;
  const auto b = bogoliubov(phi, t, f);
  CHECK(b.off_diagonal_residual <= 1e-12);
  double diag = 0.0;
  for (std::size_t e = 0; e < t.size(); ++e) diag += b.omega[e] * std::norm(b.w[e]);
  CHECK(diag == doctest::Approx(bogoliubov_quadratic(phi, t, f)).epsilon(1e-12));
  const auto a1 = t.index_of(make_point({1}));
  CHECK(b.omega[a1] == doctest::Approx(std::sqrt(1.0 + 2.0 * f)));
  CHECK_THROWS_AS(bogoliubov(phi, t, -0.6), std::domain_error);
}

TEST_CASE("superactions and orbital distance") {
  const auto s = torus(5.0);
  const auto& t = s.table;
  Modes u(t.size());
  u[t.index_of(make_point({2}))] = cplx(0.3, 0.4);
  u[t.index_of(make_point({-2}))] = 0.5;
  const auto j = superactions(u, s);
  const std::size_t b = s.band_id[t.index_of(make_point({2}))];
  for (std::size_t n = 0; n < j.bands.size(); ++n) CHECK(j.bands[n] == doctest::Approx(n == b ? 0.5 : 0.0));

  const Modes v = initial_data(t, 0.4, 1.0, 1.0, 8);
  const auto jv = superactions(v, s);
  double sum = 0.0;
  for (double x : jv.bands) sum += x;
  CHECK(sum == doctest::Approx(std::pow(mode_norm(v, 0, t), 2)).epsilon(1e-14));

  const std::size_t z = t.index_of(make_point({0}));
  Modes g(t.size());
  g[z] = std::polar(std::sqrt(1.5), -0.9);
  CHECK(orbital_distance(g, 1.5, 2.0, t) <= 1e-9);
  Modes w = v;
  w[z] += 1.0;
  const double d0 = orbital_distance(w, 1.0, 2.0, t);
  for (double beta : {0.3, 2.0, -4.0}) {
    Modes r = w;
    for (auto& x : r) x *= std::polar(1.0, beta);
    CHECK(orbital_distance(r, 1.0, 2.0, t) == doctest::Approx(d0).epsilon(1e-10));
  }
}

TEST_CASE("configuration errors") {
  const auto s = multiplier(8.0);
  SimulationConfig cfg;
  cfg.nonlinearity = Nonlinearity::nls({1.0});
  cfg.dt = 1.0;
  CHECK_THROWS_AS(integrate(s, cfg), std::invalid_argument);
  cfg.dt = 0.0;
  cfg.eps = 1.5;
  CHECK_THROWS_AS(integrate(s, cfg), std::invalid_argument);
  cfg.eps = 0.1;
  cfg.nonlinearity = Nonlinearity::beam({1.0});
  CHECK_THROWS(integrate_nls(s, cfg));
}

TEST_CASE("trajectory csv and stability report on the linear flow") {
  const auto s = multiplier(6.0);
  SimulationConfig cfg;
  cfg.eps = 0.1;
  cfg.t_end = 2.0;
  cfg.stride = 10;
  cfg.block_cutoff = 2.5;
  TrajectoryRecord rec;
  const auto rep = stability_experiment(s, cfg, nullptr, &rec);
  for (double r : rep.band_drift_rate) CHECK(r <= 1e-14);
  for (double r : rep.block_drift_rate) CHECK(r <= 1e-14);
  CHECK(rep.max_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(rep.exit_time.has_value());
  for (std::size_t i = 1; i < rec.size(); ++i) CHECK(rec.t[i] > rec.t[i - 1]);
  std::ostringstream os;
  rec.write_csv(os);
  CHECK(os.str().rfind("t,norm_s,norm_0,energy,J_band_0", 0) == 0);
}

TEST_CASE("truncated normal form conserves superactions to integrator accuracy") {
  const auto s = multiplier(8.0);
  const auto& t = s.table;
  const Poly p = nls_potential(t, {1.0}, 4);
  std::map<int, ResonanceCertificate> certs;
  for (int d = 3; d <= 4; ++d) {
    const double tau = default_tau(1, d);
    const auto probe = certify_nonresonance(d, t, s.band_id, 0.0, tau);
    certs[d] = certify_nonresonance(d, t, s.band_id, 0.9 * probe.min_weighted, tau);
  }
  NormalFormConfig cfg;
  const auto nf = iterate(p, s, cfg, certs);
  const auto blocks = high_mode_blocks(s.clusters, t, nf.k);
  const StateVector u0 = to_state(initial_data(t, 0.3, 0.0, 1.0, 21));
  const auto trunc = integrate_poly(nf.z0 + nf.zb, s, u0, 0.05, 50.0, 20, &blocks);
  CHECK(trunc.energy_drift() > 0.0);
  CHECK(trunc.band_drift() <= 10.0 * trunc.energy_drift());
  CHECK(trunc.block_drift() <= 10.0 * trunc.energy_drift());
  const auto full = integrate_poly(nf.normal_form(), s, u0, 0.05, 50.0, 20, &blocks);
  CHECK(full.block_drift() > trunc.block_drift());
}
