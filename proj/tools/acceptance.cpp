// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "lnf/dynamics.hpp"
#include "lnf/normal_form.hpp"

using namespace lnf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

SpectrumTable torus_table(int d, double k) {
  return SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(d)), k);
}

Setting multiplier_setting(double k, std::uint64_t seed) {
  const Lattice lat(1);
  const auto torus = FrequencyModel::torus_laplacian(lat);
  MultiplierEnsemble ens{2.0, seed};
  return make_setting(FrequencyModel::spectral_multiplier(torus, ens.sample(SpectrumTable::build(torus, k))), k);
}

std::map<int, ResonanceCertificate> certificates(const Setting& s, int lo, int hi) {
  std::map<int, ResonanceCertificate> out;
  for (int d = lo; d <= hi; ++d) {
    const double tau = default_tau(s.table.dim(), d);
    const auto probe = certify_nonresonance(d, s.table, s.band_id, 0.0, tau);
    out[d] = certify_nonresonance(d, s.table, s.band_id, 0.9 * probe.min_weighted, tau);
  }
  return out;
}

std::string multi_index(const std::vector<ExtId>& a, const SpectrumTable& t) {
  std::ostringstream os;
  os << '(';
  const auto c = canonical_multi_index(a, t).entries;
  for (std::size_t j = 0; j < c.size(); ++j) {
    os << (j ? "," : "") << t.lattice().coord(t[ext_entry(c[j])].point)[0] << (ext_sign(c[j]) > 0 ? '+' : '-');
  }
  return os.str() + ')';
}

// 1. Bands on the circle, checked against the raw interval data.
Outcome bands() {
  const auto t = torus_table(1, 50.0);
  const auto bp = band_partition(t);
  bool ok = bp.valid() && t.size() == 101;
  double worst_len = 0.0, worst_gap = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < bp.size(); ++n) {
    worst_len = std::max(worst_len, bp.intervals[n].length());
    if (n >= 1 && n + 1 < bp.size()) {
      const double gap = bp.intervals[n + 1].lo - bp.intervals[n].hi;
      worst_gap = std::min(worst_gap, gap / (2.0 / std::sqrt(static_cast<double>(n))));
      ok = ok && gap >= bp.gap_floor(n);
    }
  }
  // Each distinct a^2 must be covered by exactly one band.
  for (std::size_t i = 0; i < t.size(); ++i) {
    int hits = 0;
    for (const auto& iv : bp.intervals) hits += (t[i].omega >= iv.lo && t[i].omega <= iv.hi);
    ok = ok && hits == 1;
  }
  ok = ok && worst_len <= 2.0 && worst_gap >= 1.0 && bp.size() == 51;
  return {ok, std::to_string(bp.size()) + " bands, max length " + fmt(worst_len) + ", min gap / (2 n^-1/2) " +
                  fmt(worst_gap)};
}

using BlockSets = std::set<std::set<LatticePoint>>;

BlockSets closure(const SpectrumTable& t, double delta, double c) {
  const std::size_t n = t.size();
  std::vector<int> comp(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (comp[j] >= 0) continue;
        const double lhs = t.lattice().distance(t[i].point, t[j].point) + std::abs(t[i].omega - t[j].omega);
        if (lhs < c * (std::pow(t[i].abs, delta) + std::pow(t[j].abs, delta))) {
          comp[j] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  std::vector<std::set<LatticePoint>> blocks(static_cast<std::size_t>(next));
  for (std::size_t i = 0; i < n; ++i) blocks[static_cast<std::size_t>(comp[i])].insert(t[i].point);
  return {blocks.begin(), blocks.end()};
}

// 2. Union-find partition against brute-force closure.
Outcome clusters() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> delta(0.2, 0.9), c(0.3, 4.0);
  bool ok = true;
  std::ostringstream os;
  for (int i = 0; i < 5; ++i) {
    const auto t = i % 2 ? torus_table(2, 24.0) : torus_table(1, 999.0);
    const double dl = delta(rng), cd = c(rng);
    const auto uf = build_clusters(t, dl, cd);
    BlockSets got;
    for (const auto& b : uf.blocks) {
      std::set<LatticePoint> s;
      for (std::size_t e : b) s.insert(t[e].point);
      got.insert(s);
    }
    const bool same = t.size() <= 2000 && got == closure(t, dl, cd);
    ok = ok && same;
    os << (i ? "; " : "") << "T" << t.dim() << " n=" << t.size() << " blocks=" << got.size() << (same ? "" : " MISMATCH");
  }
  return {ok, os.str()};
}

// 3. Exhaustive integer scans on the bare circle.
Outcome resonance() {
  const auto s = make_setting(FrequencyModel::torus_laplacian(Lattice(1)), 10.0);
  const auto& t = s.table;
  // Integer oracle over multisets of three extended indices; r = 3 is odd so W is empty.
  const std::size_t m = 2 * t.size();
  std::int64_t mn = std::numeric_limits<std::int64_t>::max(), mnz = mn;
  std::vector<ExtId> arg;
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = x; y < m; ++y)
      for (std::size_t z = y; z < m; ++z) {
        std::int64_t v = 0;
        for (std::size_t id : {x, y, z}) {
          const auto a = static_cast<std::int64_t>(std::llround(t.lattice().coord(t[id / 2].point)[0]));
          v += ext_sign(static_cast<ExtId>(id)) * a * a;
        }
        v = std::abs(v);
        if (v < mn) {
          mn = v;
          arg = {static_cast<ExtId>(x), static_cast<ExtId>(y), static_cast<ExtId>(z)};
        }
        if (v > 0) mnz = std::min(mnz, v);
      }
  const auto c3 = certify_nonresonance(3, t, s.band_id, 1.0, 0.0);
  const bool agree = c3.min_divisor == static_cast<double>(mn) && c3.min_nonzero_divisor == static_cast<double>(mnz);
  const bool part_a = agree && mn == 1;

  const auto c4 = certify_nonresonance(4, t, s.band_id, 0.5, default_tau(1, 4));
  const std::vector<ExtId> pyth{make_ext(t.index_of(make_point({5})), 1), make_ext(t.index_of(make_point({4})), -1),
                                make_ext(t.index_of(make_point({3})), -1), make_ext(t.index_of(make_point({0})), 1)};
  const bool part_b = !c4.pass && c4.min_divisor == 0.0 &&
                      canonical_multi_index(c4.witness, t).entries == canonical_multi_index(pyth, t).entries;
  return {part_a && part_b, "r=3 min divisor off W " + std::to_string(mn) + " at " + multi_index(arg, t) +
                                " (required 1; min nonzero " + std::to_string(mnz) + ", scan " +
                                (agree ? "agrees" : "DISAGREES") + "); r=4 " + (part_b ? "fails with" : "missing") +
                                " witness " + multi_index(c4.witness, t)};
}

// 4. Monte Carlo resonant measure against 2 gamma K^n + 3 sigma.
Outcome measure() {
  const auto base = FrequencyModel::torus_laplacian(Lattice(1));
  const auto pts = enumerate_lattice(base.lattice(), 4.0);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::uniform_int_distribution<int> len(2, 4), coef(0, 3);
  int fails = 0, n = 0;
  double worst = 0.0;
  for (int v = 0; v < 10; ++v) {
    // Rejection sampling onto sum_a k_a lambda_a = 0, where the bound is tight.
    ModeVector k;
    for (double lin = 1.0; lin != 0.0;) {
      k.clear();
      std::set<std::size_t> used;
      const int l = len(rng);
      while (static_cast<int>(used.size()) < l) {
        const auto i = pick(rng);
        if (!used.insert(i).second) continue;
        const int cv = coef(rng);
        k.emplace_back(pts[i], cv < 2 ? cv - 2 : cv - 1);
      }
      lin = 0.0;
      for (const auto& [p, c] : k) lin += c * base.frequency(p);
    }
    for (double g : {0.1, 0.01}) {
      const auto e = estimate_resonant_measure(k, g, base, 2.0, 10000, 100 * v + (g < 0.05));
      ++n;
      fails += !e.pass;
      worst = std::max(worst, e.fraction / (e.bound + 3.0 * e.stderr_));
    }
  }
  return {fails == 0, std::to_string(n) + " estimates, max fraction / bound " + fmt(worst)};
}

// 5. Homological equation on random real forms of degree 3 to 5.
Outcome homological() {
  const auto s = multiplier_setting(8.0, 5);
  const auto certs = certificates(s, 3, 5);
  double tau = 0.0;
  for (const auto& [d, c] : certs) tau = std::max(tau, c.tau);
  const double k = choose_cutoff(1e-2, tau, s.bands);
  std::mt19937_64 rng(5);
  double residual = 0.0, g_ratio = 0.0, z_ratio = 0.0, g_sup_ratio = 0.0;
  int g_fail = 0;
  const auto norm = [&](const Poly& p) { return localized_norm(p, 0.0, 4.0, s.table, ZeroModePolicy::ShiftByOne); };
  for (int i = 0; i < 100; ++i) {
    const int d = 3 + i % 3;
    const Poly f = random_form(s.table, d, 8, rng, true);
    const auto& c = certs.at(d);
    const auto sol = solve_homological(f, k, s, c.gamma, c.tau);
    // Coefficientwise residual recomputed from the H0 eigenrelation.
    Poly res = h0_bracket(sol.g, s.table) + f - sol.z;
    residual = std::max({residual, res.max_abs(), sol.residual});
    const double scale = std::pow(k, c.tau) / c.gamma;
    const double fr = norm(f);
    const double gr = norm(sol.g) / (scale * fr);
    g_ratio = std::max(g_ratio, gr);
    g_fail += gr > 1.0;
    z_ratio = std::max(z_ratio, norm(sol.z) / fr);
    g_sup_ratio = std::max(g_sup_ratio, sol.g.max_abs() / (scale * f.max_abs()));
  }
  const bool ok = residual <= 1e-12 && g_ratio <= 1.0 && z_ratio <= 1.0;
  return {ok, "K=" + fmt(k) + " residual " + fmt(residual) + ", max ||G||/((K^tau/gamma)||F||) " + fmt(g_ratio) +
                  " (" + std::to_string(g_fail) + " forms above 1; coefficient sup ratio " + fmt(g_sup_ratio) +
                  "), max ||Z||/||F|| " + fmt(z_ratio)};
}

StateVector flow(const Poly& g, StateVector u, double t, int steps) {
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const auto k1 = vector_field(g, u);
    StateVector w(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) w[j] = u[j] + 0.5 * h * k1[j];
    const auto k2 = vector_field(g, w);
    for (std::size_t j = 0; j < u.size(); ++j) w[j] = u[j] + 0.5 * h * k2[j];
    const auto k3 = vector_field(g, w);
    for (std::size_t j = 0; j < u.size(); ++j) w[j] = u[j] + h * k3[j];
    const auto k4 = vector_field(g, w);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  }
  return u;
}

// 6. Jacobi identity and the bracket as a flow derivative.
Outcome brackets() {
  std::mt19937_64 rng(6);
  double jacobi = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    const auto t = trial % 2 ? torus_table(2, 2.0) : torus_table(1, 4.0);
    const auto f = random_form(t, 2 + trial % 3, 12, rng);
    const auto g = random_form(t, 2 + (trial + 1) % 3, 12, rng);
    const auto h = random_form(t, 2 + (trial + 2) % 3, 12, rng);
    const auto j1 = poisson_bracket(f, poisson_bracket(g, h));
    const auto j2 = poisson_bracket(g, poisson_bracket(h, f));
    const auto j3 = poisson_bracket(h, poisson_bracket(f, g));
    const double scale = std::max({j1.max_abs(), j2.max_abs(), j3.max_abs()});
    if (scale > 0.0) jacobi = std::max(jacobi, (j1 + j2 + j3).max_abs() / scale);
  }
  double fd = 0.0;
  const auto t = torus_table(1, 3.0);
  for (int trial = 0; trial < 6; ++trial) {
    const auto f = random_form(t, 2 + trial % 3, 12, rng, true);
    const auto g = random_form(t, 2 + (trial + 1) % 3, 12, rng, true) + h0_poly(t);
    const auto u = random_state(t, rng, 0.0, true);
    // Central differences at h and h/2 combined by one Richardson step.
    auto central = [&](double h) {
      return (evaluate(f, flow(g, u, h, 4)) - evaluate(f, flow(g, u, -h, 4))) / (2.0 * h);
    };
    const double h = 1e-3;
    const cplx d = (4.0 * central(h / 2) - central(h)) / 3.0;
    const cplx b = evaluate(poisson_bracket(f, g), u);
    fd = std::max(fd, std::abs(d - b) / std::max(std::abs(b), 1e-300));
  }
  return {jacobi <= 1e-10 && fd <= 1e-6, "Jacobi relative residual " + fmt(jacobi) + ", finite-difference relative error " + fmt(fd)};
}

// 7. Superactions under the truncated normal form over T = 1e4.
Outcome superactions_drift() {
  const auto s = multiplier_setting(8.0, 5);
  const Poly p = nls_potential(s.table, {1.0}, 4);
  NormalFormConfig cfg;
  const auto nf = iterate(p, s, cfg, certificates(s, 3, 4));
  const auto blocks = high_mode_blocks(s.clusters, s.table, nf.k);
  const StateVector u0 = to_state(initial_data(s.table, 0.3, 0.0, 1.0, 21));
  const auto trunc = integrate_poly(nf.z0 + nf.zb, s, u0, 0.05, 1e4, 200, &blocks);
  const auto full = integrate_poly(nf.normal_form(), s, u0, 0.05, 1e4, 200, &blocks);
  const double e = trunc.energy_drift();
  const bool ok = trunc.band_drift() <= 10.0 * e && trunc.block_drift() <= 10.0 * e &&
                  std::max(full.band_drift(), full.block_drift()) > std::max(trunc.band_drift(), trunc.block_drift());
  return {ok, "K=" + fmt(nf.k) + " truncated: energy drift " + fmt(e) + ", J_n drift " + fmt(trunc.band_drift()) +
                  ", J_alpha drift " + fmt(trunc.block_drift()) + "; with Z2+Zge3: J_n " + fmt(full.band_drift()) +
                  ", J_alpha " + fmt(full.block_drift())};
}

// 8. Stability sweep and the V = 0 contrast.
Outcome stability() {
  const auto s = multiplier_setting(8.0, 5);
  const auto certs = certificates(s, 3, 4);
  bool certified = true;
  for (const auto& [d, c] : certs) certified = certified && c.pass && c.gamma > 0.0;
  std::ostringstream os;
  bool sweep_ok = certified;
  for (double eps : {1e-1, 1e-2}) {
    SimulationConfig cfg;
    cfg.nonlinearity = Nonlinearity::nls({1.0});
    cfg.eps = eps;
    cfg.s = 4.0;
    cfg.t_end = 1.0 / (eps * eps);
    cfg.stride = 500;
    cfg.seed = 8;
    const auto rep = stability_experiment(s, cfg);
    sweep_ok = sweep_ok && rep.max_ratio <= 2.0;
    os << "eps=" << eps << " max ratio " << fmt(rep.max_ratio) << "; ";
  }
  const auto bare = make_setting(FrequencyModel::torus_laplacian(Lattice(1)), 8.0);
  bool contrast_failed = false;
  for (double eps : {0.5, 0.9}) {
    SimulationConfig cfg;
    cfg.nonlinearity = Nonlinearity::nls({1.0});
    cfg.eps = eps;
    cfg.s = 4.0;
    cfg.t_end = 1.0 / (eps * eps);
    cfg.stride = 100;
    cfg.seed = 8;
    const auto rep = stability_experiment(bare, cfg);
    contrast_failed = contrast_failed || rep.exit_time.has_value();
    os << "V=0 eps=" << eps << " max ratio " << fmt(rep.max_ratio) << "; ";
  }
  os << (sweep_ok ? "sweep within 2 eps" : "sweep LEFT 2 eps") << ", contrast "
     << (contrast_failed ? "left 2 eps" : "did not leave 2 eps");
  return {sweep_ok && contrast_failed, os.str()};
}

// 9. Strang against RK4 on three modes over T = 10.
Outcome order() {
  const auto t = torus_table(1, 1.0);
  GalerkinSystem sys(t, Nonlinearity::nls({1.0}));
  const Modes u0{cplx(1.0, 0.2), cplx(0.5, -0.3), cplx(-0.4, 0.6)};
  auto run = [&](double dt, bool rk4) {
    Modes u = u0;
    for (long i = 0; i < std::lround(10.0 / dt); ++i) {
      if (rk4) sys.rk4_step(u, dt);
      else sys.strang_step(u, dt);
    }
    return u;
  };
  const Modes ref = run(1e-3, true);
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025, 0.0125}) {
    const Modes u = run(dt, false);
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) e = std::max(e, std::abs(u[i] - ref[i]));
    err.push_back(e);
  }
  bool ok = t.size() == 3;
  std::ostringstream os;
  os << "slopes";
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double slope = std::log2(err[i] / err[i + 1]);
    ok = ok && std::abs(slope - 2.0) <= 0.2;
    os << ' ' << fmt(slope);
  }
  return {ok, os.str()};
}

// 10. Tame constants across radii and the cutoff inequality from definitions.
Outcome tame() {
  const TameParams prm{0.0, 5.0, 2.0, 1.75};
  std::vector<double> constants;
  std::ostringstream os;
  // The same forms, drawn on the smallest truncation, embedded into each larger one.
  const auto t8 = torus_table(1, 8.0);
  std::vector<Poly> forms;
  {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 50; ++i) forms.push_back(random_form(t8, 3 + i % 2, 20, rng));
  }
  for (double radius : {8.0, 16.0, 32.0}) {
    const auto t = torus_table(1, radius);
    std::mt19937_64 rng(11);
    double c = 0.0;
    for (const auto& f8 : forms) {
      Poly f;
      for (const auto& [key, v] : f8.terms()) {
        std::vector<ExtId> ids;
        for (ExtId id : key.ids()) ids.push_back(make_ext(t.index_of(t8[ext_entry(id)].point), ext_sign(id)));
        f.add(Key(ids), v);
      }
      c = std::max(c, verify_tame(f, prm, 60, t, rng));
    }
    constants.push_back(c);
    os << "C(" << radius << ")=" << fmt(c) << ' ';
  }
  const double spread = *std::max_element(constants.begin(), constants.end()) /
                        *std::min_element(constants.begin(), constants.end());
  const bool tame_ok = spread <= 3.0;

  // Forms restricted to |a_1 - a_2| > K^delta for the two largest modes.
  const auto t = torus_table(1, 32.0);
  const double k = 8.5, delta = 0.5;
  std::mt19937_64 rng(1020);
  int holds = 0, total = 0;
  std::string worst;
  double worst_ratio = 0.0;
  for (int i = 0; i < 50; ++i) {
    Poly f;
    const Poly drawn = random_form(t, 3 + i % 2, 20, rng);
    for (const auto& [key, c] : drawn.terms()) {
      const std::vector<ExtId> ids(key.ids().begin(), key.ids().end());
      const auto e = canonical_multi_index(ids, t).entries;
      if (t.lattice().distance(t[ext_entry(e[0])].point, t[ext_entry(e[1])].point) > std::pow(k, delta)) f.add(key, c);
    }
    if (f.empty()) continue;
    ++total;
    const auto r = check_cutoff_inequality(f, 0.0, 4.0, 6.0, k, delta, t);
    holds += r.holds;
    if (r.worst_ratio > worst_ratio) {
      worst_ratio = r.worst_ratio;
      worst = multi_index(std::vector<ExtId>(r.worst.ids().begin(), r.worst.ids().end()), t);
    }
  }
  os << "spread " << fmt(spread) << "; cutoff inequality holds on " << holds << "/" << total
     << " forms, worst term ratio " << fmt(worst_ratio) << " at " << worst;
  return {tame_ok && holds == total, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, expect_fail;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--expect-fail", expect_fail,
                 "Criteria known to fail; exit 0 when exactly these fail")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"band partition on T1, |a| <= 50", bands},
      {"cluster oracle equivalence", clusters},
      {"resonance exactness r=3 / r=4", resonance},
      {"resonant measure bound", measure},
      {"homological residual and bounds", homological},
      {"bracket identities", brackets},
      {"superaction conservation", superactions_drift},
      {"stability sweep", stability},
      {"Strang order", order},
      {"tame constants and cutoff inequality", tame},
  };
  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) failed.insert(id);
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << criteria[i].first << " ["
              << std::fixed << std::setprecision(2) << secs << " s]  " << std::defaultfloat << o.detail << std::endl;
  }
  std::set<int> expected;
  for (int id : expect_fail) {
    if (only.empty() || std::find(only.begin(), only.end(), id) != only.end()) expected.insert(id);
  }
  std::cout << failed.size() << " criteria failed" << std::endl;
  if (!expect_fail.empty()) return failed == expected ? 0 : 1;
  return failed.empty() ? 0 : 1;
}
