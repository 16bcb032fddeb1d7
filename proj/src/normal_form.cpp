#include "lnf/normal_form.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace lnf {

const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::Z0: return "Z0";
    case Bucket::ZB: return "ZB";
    case Bucket::Z2: return "Z2";
    case Bucket::Zge3: return "Zge3";
    case Bucket::Nonresonant: return "nonresonant";
  }
  return "?";
}

namespace {

// Same case split as is_block_nonresonant, without revalidating K per call.
Bucket classify_unchecked(std::span<const ExtId> a, double k, const Setting& setting) {
  const auto& table = setting.table;
  ExtId large[2] = {0, 0};
  int n_large = 0;
  for (ExtId id : a) {
    if (table[ext_entry(id)].floor >= k) {
      if (n_large < 2) large[n_large] = id;
      ++n_large;
    }
  }
  if (n_large == 0) {
    const std::vector<ExtId> v(a.begin(), a.end());
    return is_resonant_W(v, setting.band_id) ? Bucket::Z0 : Bucket::Nonresonant;
  }
  if (n_large == 1) return Bucket::Nonresonant;
  if (n_large >= 3) return Bucket::Zge3;
  const std::size_t e1 = ext_entry(large[0]);
  const std::size_t e2 = ext_entry(large[1]);
  if (setting.clusters.block_of[e1] == setting.clusters.block_of[e2]) {
    return ext_sign(large[0]) * ext_sign(large[1]) == 1 ? Bucket::Nonresonant : Bucket::ZB;
  }
  const double dist = table.lattice().distance(table[e1].point, table[e2].point);
  return dist <= std::pow(k, setting.clusters.delta) ? Bucket::Nonresonant : Bucket::Z2;
}

double bracket_abs(std::span<const ExtId> a, const SpectrumTable& table) {
  double m = 0.0;
  for (ExtId id : a) m = std::max(m, table[ext_entry(id)].abs);
  return std::max(1.0, m);
}

Poly filtered(const Poly& p, const std::function<bool(const Key&)>& keep) {
  Poly out;
  for (const auto& [k, c] : p.terms()) {
    if (keep(k)) out.add(k, c);
  }
  return out;
}

}  // namespace

Bucket classify_term(std::span<const ExtId> a, double k, const Setting& setting) {
  validate_cutoff(setting.bands, k);
  return classify_unchecked(a, k, setting);
}

double choose_cutoff(double radius, double tau, const BandPartition& bands) {
  if (!(radius > 0.0 && radius < 1.0)) throw std::invalid_argument("choose_cutoff: need 0 < R < 1");
  if (!(tau > 0.0)) throw std::invalid_argument("choose_cutoff: need tau > 0");
  const double target = std::pow(radius, -1.0 / (2.0 * tau));
  const double inv_beta = 1.0 / bands.beta;
  double best = -1.0;
  double best_dist = std::numeric_limits<double>::infinity();
  // The gap after the initial segment would put K below the lowest band.
  for (std::size_t n = 1; n + 1 < bands.intervals.size(); ++n) {
    const double lo = std::pow(bands.intervals[n].hi, inv_beta);
    const double hi = std::pow(bands.intervals[n + 1].lo, inv_beta);
    const double mid = 0.5 * (lo + hi);
    const double dist = std::abs(mid - target);
    const double tie = 1e-9 * std::max(1.0, target);
    if (dist < best_dist - tie) {
      best = mid;
      best_dist = dist;
    }
  }
  if (best < 0.0) throw std::invalid_argument("choose_cutoff: no gap between two bands");
  if (best <= 1.0) throw std::invalid_argument("choose_cutoff: K* <= 1");
  if (best > 2.0 * target || best < 0.5 * target) {
    std::ostringstream os;
    os << "choose_cutoff: no inter-band gap within a factor 2 of R^{-1/(2tau)} = " << target;
    throw std::invalid_argument(os.str());
  }
  return best;
}

HomologicalSolution solve_homological(const Poly& f, double k, const Setting& setting,
                                      double gamma, double tau) {
  validate_cutoff(setting.bands, k);
  const auto& table = setting.table;
  HomologicalSolution out;
  for (const auto& [key, c] : f.terms()) {
    const auto ids = key.ids();
    if (classify_unchecked(ids, k, setting) != Bucket::Nonresonant) {
      out.z.add(key, c);
      continue;
    }
    const std::vector<ExtId> v(ids.begin(), ids.end());
    const double omega = signed_divisor(v, table);
    const double weighted = std::abs(omega) * std::pow(bracket_abs(ids, table), tau);
    if (!(weighted >= gamma)) {
      std::ostringstream os;
      os << "homological: divisor " << std::abs(omega) << " below gamma / <a>^tau at "
         << format_multi_index(table, v);
      throw CertificateBreach(os.str(), v, std::abs(omega));
    }
    out.g.add(key, cplx(0.0, 1.0) * c / omega);
  }
  Poly res = h0_bracket(out.g, table);
  res += f;
  res -= out.z;
  out.residual = res.max_abs();
  return out;
}

int lie_order(int r_bar, int r1, int g_degree) {
  const int r2 = g_degree - 2;
  if (r2 <= 0) throw std::invalid_argument("lie_order: generator degree must exceed 2");
  const int num = r_bar + 3 - r1;
  if (num <= 0) return 0;
  return (num + r2 - 1) / r2;
}

LieResult lie_transform(const Poly& g, const Poly& p, int n, int max_degree) {
  LieResult out;
  out.value = p.degree_range(0, max_degree);
  out.dropped = p.degree_range(max_degree + 1, kMaxDegree);
  if (g.empty()) return out;
  const int lift = std::max(0, g.max_degree() - 2);
  Poly term = out.value;
  for (int j = 1; j <= n && !term.empty(); ++j) {
    Poly b = poisson_bracket(term, g, std::min(kMaxDegree, max_degree + lift));
    b *= 1.0 / j;
    term = b.degree_range(0, max_degree);
    out.value += term;
    out.dropped += b.degree_range(max_degree + 1, kMaxDegree);
  }
  return out;
}

NormalFormResult iterate(const Poly& p, const Setting& setting, const NormalFormConfig& cfg,
                         const std::map<int, ResonanceCertificate>& certificates) {
  const auto& table = setting.table;
  const int top = cfg.r_bar + 2;
  if (cfg.r < 1 || cfg.r_bar < 1) throw std::invalid_argument("normal form: need r, r_bar >= 1");
  if (top > kMaxDegree) throw std::invalid_argument("normal form: r_bar + 2 exceeds the degree cap");
  if (!p.empty() && p.min_degree() < 3) {
    throw std::invalid_argument("normal form: perturbation must start at degree 3");
  }
  if (!is_real(p)) throw std::invalid_argument("normal form: perturbation is not real");

  NormalFormResult out;
  out.tau = 0.0;
  out.gamma = std::numeric_limits<double>::infinity();
  for (int d = 3; d <= top; ++d) {
    const auto it = certificates.find(d);
    if (it == certificates.end()) {
      throw std::invalid_argument("normal form: missing non-resonance certificate for degree " +
                                  std::to_string(d));
    }
    const auto& cert = it->second;
    if (!cert.pass) {
      throw CertificateBreach("normal form: certificate for degree " + std::to_string(d) +
                                  " did not pass",
                              cert.witness, cert.min_divisor);
    }
    out.tau = std::max(out.tau, cert.tau);
    out.gamma = std::min(out.gamma, cert.gamma);
  }

  if (cfg.k > 0.0) {
    validate_cutoff(setting.bands, cfg.k);
    out.k = cfg.k;
  } else {
    out.k = choose_cutoff(cfg.radius, out.tau, setting.bands);
  }
  const double k = out.k;
  const auto policy = ZeroModePolicy::ShiftByOne;
  auto norm = [&](const Poly& q) {
    return localized_norm(q, cfg.nu, cfg.n_loc, table, policy, cfg.radius);
  };

  out.h0 = h0_poly(table);
  out.p0_norm = norm(p);
  out.mu = out.p0_norm / (cfg.radius * cfg.radius) * std::pow(k, out.tau);
  if (out.mu > cfg.mu_max) {
    std::ostringstream os;
    os << "normal form: smallness violated, mu = " << out.mu << " > " << cfg.mu_max;
    throw SmallnessError(os.str(), out.mu);
  }

  Poly h = out.h0 + p.degree_range(0, top);
  out.ledger = p.degree_range(top + 1, kMaxDegree);

  for (int d = 3; d <= top; ++d) {
    const auto& cert = certificates.at(d);
    StepReport rep;
    rep.degree = d;
    rep.gamma = cert.gamma;
    rep.tau = cert.tau;
    const Poly f = h.degree_part(d);
    rep.f_terms = f.size();
    rep.f_norm = norm(f);
    auto sol = solve_homological(f, k, setting, cert.gamma, cert.tau);
    rep.g_terms = sol.g.size();
    rep.g_norm = norm(sol.g);
    rep.z_norm = norm(sol.z);
    rep.residual = sol.residual;
    const double f1 = localized_norm(f, cfg.nu, cfg.n_loc, table, policy);
    if (f1 > 0.0) {
      rep.g_bound_ratio = localized_norm(sol.g, cfg.nu, cfg.n_loc, table, policy) /
                          (std::pow(k, cert.tau) / cert.gamma * f1);
    }
    if (!sol.g.empty()) {
      if (rep.g_norm / (cfg.radius * cfg.radius) > cfg.mu_max) {
        std::ostringstream os;
        os << "normal form: generator of degree " << d << " too large on the ball, ||G||_R/R^2 = "
           << rep.g_norm / (cfg.radius * cfg.radius);
        throw SmallnessError(os.str(), rep.g_norm / (cfg.radius * cfg.radius));
      }
      const int n = cfg.lie_terms > 0 ? cfg.lie_terms : lie_order(cfg.r_bar, 2, d);
      auto lr = lie_transform(sol.g, h, n, top);
      rep.ledger_norm = norm(lr.dropped);
      out.ledger += lr.dropped;
      // The killed coefficients vanish in exact arithmetic; only rounding is left.
      double killed = 0.0;
      h = filtered(lr.value, [&](const Key& key) {
        if (key.degree() == d && classify_unchecked(key.ids(), k, setting) == Bucket::Nonresonant) {
          killed = std::max(killed, std::abs(lr.value.coeff(key)));
          return false;
        }
        return true;
      });
      rep.killed_residual = killed;
      out.generators.push_back(std::move(sol.g));
    }
    rep.p_norm = norm(h.degree_range(d + 1, top));
    out.steps.push_back(rep);
  }

  for (const auto& [key, c] : h.terms()) {
    if (key.degree() <= 2) continue;
    switch (classify_unchecked(key.ids(), k, setting)) {
      case Bucket::Z0: out.z0.add(key, c); break;
      case Bucket::ZB: out.zb.add(key, c); break;
      case Bucket::Z2: out.z2.add(key, c); break;
      case Bucket::Zge3: out.zge3.add(key, c); break;
      case Bucket::Nonresonant:
        throw std::logic_error("normal form: non-resonant term survived normalization");
    }
  }
  return out;
}

namespace {

void flow(const FlatPoly& g, StateVector& u, double t_end, double tol, double ball, double s,
          const SpectrumTable& table) {
  if (g.empty() || t_end == 0.0) return;
  const std::size_t n = u.size();
  StateVector k1(n), k2(n), k3(n), k4(n), tmp(n);
  auto rk4 = [&](const StateVector& y, double h, StateVector& out) {
    g.vector_field(y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    g.vector_field(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    g.vector_field(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    g.vector_field(tmp, k4);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  };
  const double dir = t_end > 0 ? 1.0 : -1.0;
  const double total = std::abs(t_end);
  double t = 0.0;
  double h = std::min(0.1, total);
  StateVector full, half, two;
  int steps = 0;
  while (t < total) {
    h = std::min(h, total - t);
    rk4(u, dir * h, full);
    rk4(u, dir * h / 2, half);
    rk4(half, dir * h / 2, two);
    double err = 0.0;
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      err = std::max(err, std::abs(two[i] - full[i]) / 15.0);
      scale = std::max(scale, std::abs(two[i]));
    }
    const double allowed = tol * scale;
    if (err <= allowed) {
      for (std::size_t i = 0; i < n; ++i) u[i] = two[i] + (two[i] - full[i]) / 15.0;
      t += h;
      if (ball > 0.0 && sobolev_norm(u, s, table) > ball) {
        std::ostringstream os;
        os << "transform_state: trajectory left the ball at t = " << dir * t;
        throw SmallnessError(os.str(), sobolev_norm(u, s, table));
      }
    }
    const double fac = err > 0.0 ? 0.9 * std::pow(allowed / err, 0.2) : 2.0;
    h *= std::clamp(fac, 0.1, 2.0);
    if (h < 1e-12 || ++steps > 1000000) throw std::runtime_error("transform_state: step size collapsed");
  }
}

}  // namespace

StateVector transform_state(const std::vector<Poly>& generators, const StateVector& u,
                            Direction dir, const SpectrumTable& table, double tol, double ball,
                            double s) {
  if (u.size() != 2 * table.size()) throw std::invalid_argument("transform_state: state size mismatch");
  StateVector v = u;
  const std::size_t m = generators.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (dir == Direction::Forward) {
      flow(FlatPoly(generators[m - 1 - j]), v, 1.0, tol, ball, s, table);
    } else {
      flow(FlatPoly(generators[j]), v, -1.0, tol, ball, s, table);
    }
  }
  return v;
}

CommutationReport check_superaction_commutation(const Poly& z0, const Poly& zb, const Poly& z2,
                                                const Setting& setting, double k) {
  validate_cutoff(setting.bands, k);
  const auto& table = setting.table;
  CommutationReport rep;
  std::map<std::size_t, std::vector<std::size_t>> bands;
  for (std::size_t i = 0; i < table.size(); ++i) bands[setting.band_id[i]].push_back(i);
  for (const auto& [id, entries] : bands) {
    rep.band_max = std::max(rep.band_max, poisson_bracket(z0, quadratic_mass(table, entries), kMaxDegree, 0.0).max_abs());
  }
  rep.bands = bands.size();
  const auto high = high_mode_blocks(setting.clusters, table, k);
  for (const auto& block : high.blocks) {
    const Poly j = quadratic_mass(table, block);
    rep.block_max = std::max(rep.block_max, poisson_bracket(zb, j, kMaxDegree, 0.0).max_abs());
    rep.z2_block_max = std::max(rep.z2_block_max, poisson_bracket(z2, j, kMaxDegree, 0.0).max_abs());
  }
  rep.blocks = high.blocks.size();
  return rep;
}

Poly nls_potential(const SpectrumTable& table, const std::vector<double>& f_coeffs,
                   int max_degree) {
  Poly out;
  const int d = table.dim();
  const std::size_t n = table.size();
  for (std::size_t j = 0; j < f_coeffs.size(); ++j) {
    const double c = f_coeffs[j];
    const int m = static_cast<int>(j) + 2;  // F(y) = c y^m / m
    if (c == 0.0 || 2 * m > max_degree) continue;
    if (2 * m > kMaxDegree) throw std::invalid_argument("nls_potential: degree cap exceeded");
    const cplx coef = c / m * std::pow(2.0 * M_PI, (1 - m) * d);
    // Ordered tuples a_1..a_m (plus) and b_1..b_{m-1} (minus); b_m closes the momentum.
    std::vector<std::size_t> idx(static_cast<std::size_t>(2 * m - 1), 0);
    std::vector<ExtId> ids(static_cast<std::size_t>(2 * m));
    while (true) {
      LatticePoint last{};
      for (int q = 0; q < m; ++q) {
        const auto& pa = table[idx[static_cast<std::size_t>(q)]].point;
        for (int x = 0; x < 3; ++x) last.n[static_cast<std::size_t>(x)] += pa.n[static_cast<std::size_t>(x)];
      }
      for (int q = m; q < 2 * m - 1; ++q) {
        const auto& pb = table[idx[static_cast<std::size_t>(q)]].point;
        for (int x = 0; x < 3; ++x) last.n[static_cast<std::size_t>(x)] -= pb.n[static_cast<std::size_t>(x)];
      }
      if (const auto e = table.find(last)) {
        for (int q = 0; q < m; ++q) ids[static_cast<std::size_t>(q)] = make_ext(idx[static_cast<std::size_t>(q)], 1);
        for (int q = m; q < 2 * m - 1; ++q) ids[static_cast<std::size_t>(q)] = make_ext(idx[static_cast<std::size_t>(q)], -1);
        ids.back() = make_ext(*e, -1);
        out.add_monomial(Key(ids), coef);
      }
      std::size_t pos = 0;
      while (pos < idx.size() && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == idx.size()) break;
    }
  }
  return out;
}

double sampled_field_sup(const Poly& f, const SpectrumTable& table, double radius, double s,
                         int samples, std::mt19937_64& rng) {
  const FlatPoly flat(f);
  StateVector x(2 * table.size());
  std::uniform_real_distribution<double> decay(s + 0.5, s + 3.0);
  double best = 0.0;
  for (int t = 0; t < samples; ++t) {
    StateVector u = random_state(table, rng, decay(rng), true);
    const double nu = sobolev_norm(u, s, table);
    if (nu == 0.0) continue;
    for (auto& v : u) v *= radius / nu;
    flat.vector_field(u, x);
    best = std::max(best, sobolev_norm(x, s, table));
  }
  return best;
}

}  // namespace lnf
