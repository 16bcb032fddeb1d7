#include "lnf/dynamics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lnf/normal_form.hpp"

namespace lnf {

StateVector to_state(const Modes& u) {
  StateVector s(2 * u.size());
  for (std::size_t e = 0; e < u.size(); ++e) {
    s[make_ext(e, 1)] = u[e];
    s[make_ext(e, -1)] = std::conj(u[e]);
  }
  return s;
}

Modes plus_part(const StateVector& u) {
  Modes m(u.size() / 2);
  for (std::size_t e = 0; e < m.size(); ++e) m[e] = u[make_ext(e, 1)];
  return m;
}

int Nonlinearity::field_degree() const {
  const int p = static_cast<int>(coeffs.size());
  switch (kind) {
    case Kind::None: return 1;
    case Kind::Nls: return 2 * p + 1;
    case Kind::Beam: return p + 1;
  }
  return 1;
}

int smooth_size(int n) {
  for (int m = std::max(1, n);; ++m) {
    int x = m;
    for (int p : {2, 3, 5}) while (x % p == 0) x /= p;
    if (x == 1) return m;
  }
}

namespace {

// Plan creation in FFTW is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr double kTwoPi = 2.0 * M_PI;

}  // namespace

struct GalerkinSystem::Fft {
  fftw_complex* buf = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::size_t n = 0;

  Fft(int dim, int m) {
    std::vector<int> dims(static_cast<std::size_t>(dim), m);
    n = 1;
    for (int v : dims) n *= static_cast<std::size_t>(v);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    buf = fftw_alloc_complex(n);
    forward = fftw_plan_dft(dim, dims.data(), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft(dim, dims.data(), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(buf);
  }
  cplx* data() { return reinterpret_cast<cplx*>(buf); }
};

GalerkinSystem::GalerkinSystem(const SpectrumTable& table, Nonlinearity nl)
    : table_(table), nl_(std::move(nl)) {
  if (table.empty()) throw std::invalid_argument("galerkin: empty spectrum table");
  const int d = table.dim();
  int kmax = 0;
  for (const auto& e : table.entries()) {
    for (int x = 0; x < d; ++x) kmax = std::max(kmax, std::abs(e.point.n[static_cast<std::size_t>(x)]));
  }
  m_ = smooth_size((nl_.field_degree() + 1) * kmax + 1);
  fft_ = std::make_unique<Fft>(d, m_);
  grid_points_ = fft_->n;
  slot_.resize(table.size());
  omega_.resize(table.size());
  for (std::size_t e = 0; e < table.size(); ++e) {
    std::size_t slot = 0;
    for (int x = 0; x < d; ++x) {
      const int v = table[e].point.n[static_cast<std::size_t>(x)];
      slot = slot * static_cast<std::size_t>(m_) + static_cast<std::size_t>(((v % m_) + m_) % m_);
    }
    slot_[e] = slot;
    omega_[e] = table[e].omega;
    max_omega_ = std::max(max_omega_, std::abs(omega_[e]));
  }
  if (nl_.kind == Nonlinearity::Kind::Beam) {
    const auto& k = table.lattice().kappa();
    if (k[0] != 0.0 || k[1] != 0.0 || k[2] != 0.0) throw std::invalid_argument("beam: needs kappa = 0");
    mirror_.resize(table.size());
    for (std::size_t e = 0; e < table.size(); ++e) {
      mirror_[e] = table.index_of(negate(table[e].point));
      if (!(omega_[e] > 0.0)) throw std::invalid_argument("beam: frequencies must be positive");
      if (omega_[e] != omega_[mirror_[e]]) throw std::invalid_argument("beam: omega must be even in a");
    }
  }
  const std::size_t n = table.size();
  scratch_a_.resize(n);
  scratch_b_.resize(n);
  k1_.resize(n);
  k2_.resize(n);
  k3_.resize(n);
  k4_.resize(n);
  tmp_.resize(n);
}

GalerkinSystem::~GalerkinSystem() = default;

void GalerkinSystem::to_grid(const Modes& u, std::vector<cplx>& grid) {
  cplx* b = fft_->data();
  std::fill(b, b + grid_points_, cplx{});
  if (nl_.kind == Nonlinearity::Kind::Beam) {
    for (std::size_t e = 0; e < u.size(); ++e) {
      b[slot_[e]] = (u[e] + std::conj(u[mirror_[e]])) / std::sqrt(2.0 * omega_[e]);
    }
  } else {
    for (std::size_t e = 0; e < u.size(); ++e) b[slot_[e]] = u[e];
  }
  fftw_execute(fft_->backward);
  const double scale = std::pow(kTwoPi, -0.5 * table_.dim());
  grid.resize(grid_points_);
  for (std::size_t j = 0; j < grid_points_; ++j) grid[j] = b[j] * scale;
}

void GalerkinSystem::nonlinear_field(const Modes& u, Modes& out) {
  out.assign(u.size(), cplx{});
  if (nl_.kind == Nonlinearity::Kind::None || nl_.coeffs.empty()) return;
  std::vector<cplx>& grid = grid_;
  to_grid(u, grid);
  cplx* b = fft_->data();
  if (nl_.kind == Nonlinearity::Kind::Nls) {
    for (std::size_t j = 0; j < grid_points_; ++j) {
      const double y = std::norm(grid[j]);
      double f = 0.0;
      for (std::size_t q = nl_.coeffs.size(); q-- > 0;) f = (f + nl_.coeffs[q]) * y;
      b[j] = f * grid[j];
    }
  } else {
    for (std::size_t j = 0; j < grid_points_; ++j) {
      const double x = grid[j].real();
      // F'(x) = sum_q (q+3) c_q x^{q+2}
      double g = 0.0;
      for (std::size_t q = nl_.coeffs.size(); q-- > 0;) g = g * x + (static_cast<double>(q) + 3.0) * nl_.coeffs[q];
      b[j] = g * x * x;
    }
  }
  fftw_execute(fft_->forward);
  const double scale = std::pow(kTwoPi, 0.5 * table_.dim()) / static_cast<double>(grid_points_);
  const cplx mi(0.0, -1.0);
  if (nl_.kind == Nonlinearity::Kind::Nls) {
    for (std::size_t e = 0; e < u.size(); ++e) out[e] = mi * b[slot_[e]] * scale;
  } else {
    for (std::size_t e = 0; e < u.size(); ++e) out[e] = mi * b[slot_[e]] * scale / std::sqrt(2.0 * omega_[e]);
  }
}

void GalerkinSystem::field(const Modes& u, Modes& out) {
  nonlinear_field(u, out);
  const cplx mi(0.0, -1.0);
  for (std::size_t e = 0; e < u.size(); ++e) out[e] += mi * omega_[e] * u[e];
}

double GalerkinSystem::hamiltonian(const Modes& u) {
  double h = 0.0;
  for (std::size_t e = 0; e < u.size(); ++e) h += omega_[e] * std::norm(u[e]);
  if (nl_.kind == Nonlinearity::Kind::None || nl_.coeffs.empty()) return h;
  std::vector<cplx>& grid = grid_;
  to_grid(u, grid);
  double integral = 0.0;
  for (std::size_t j = 0; j < grid_points_; ++j) {
    double v = 0.0;
    if (nl_.kind == Nonlinearity::Kind::Nls) {
      const double y = std::norm(grid[j]);
      // F(y) = sum_q c_q y^{q+2} / (q+2)
      for (std::size_t q = nl_.coeffs.size(); q-- > 0;) v = v * y + nl_.coeffs[q] / (static_cast<double>(q) + 2.0);
      v *= y * y;
    } else {
      const double x = grid[j].real();
      for (std::size_t q = nl_.coeffs.size(); q-- > 0;) v = v * x + nl_.coeffs[q];
      v *= x * x * x;
    }
    integral += v;
  }
  return h + integral * std::pow(kTwoPi / m_, table_.dim());
}

void GalerkinSystem::linear_phase(Modes& u, double dt) const {
  for (std::size_t e = 0; e < u.size(); ++e) u[e] *= std::polar(1.0, -omega_[e] * dt);
}

int GalerkinSystem::nonlinear_step(Modes& u, double dt, double tol, int max_iter) {
  if (nl_.kind == Nonlinearity::Kind::None || nl_.coeffs.empty()) return 0;
  const std::size_t n = u.size();
  double scale = 0.0;
  for (const auto& v : u) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0;
  Modes& u1 = scratch_a_;
  Modes& mid = scratch_b_;
  nonlinear_field(u, k1_);
  for (std::size_t e = 0; e < n; ++e) u1[e] = u[e] + dt * k1_[e];
  double prev = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 1; it <= max_iter; ++it) {
    for (std::size_t e = 0; e < n; ++e) mid[e] = 0.5 * (u[e] + u1[e]);
    nonlinear_field(mid, k1_);
    double diff = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      const cplx next = u[e] + dt * k1_[e];
      diff = std::max(diff, std::abs(next - u1[e]));
      u1[e] = next;
    }
    if (!std::isfinite(diff)) throw std::runtime_error("integrator: non-finite state (blow-up)");
    if (diff <= tol * scale) {
      u.swap(u1);
      return it;
    }
    // Rounding floor reached: further sweeps cannot reduce the update.
    stalled = diff >= prev ? stalled + 1 : 0;
    if (stalled >= 3 && diff <= 1e3 * tol * scale) {
      u.swap(u1);
      return it;
    }
    prev = diff;
  }
  throw std::runtime_error("integrator: implicit midpoint did not converge; reduce dt");
}

void GalerkinSystem::strang_step(Modes& u, double dt, double tol) {
  linear_phase(u, 0.5 * dt);
  nonlinear_step(u, dt, tol);
  linear_phase(u, 0.5 * dt);
}

void GalerkinSystem::rk4_step(Modes& u, double dt) {
  const std::size_t n = u.size();
  field(u, k1_);
  for (std::size_t e = 0; e < n; ++e) tmp_[e] = u[e] + 0.5 * dt * k1_[e];
  field(tmp_, k2_);
  for (std::size_t e = 0; e < n; ++e) tmp_[e] = u[e] + 0.5 * dt * k2_[e];
  field(tmp_, k3_);
  for (std::size_t e = 0; e < n; ++e) tmp_[e] = u[e] + dt * k3_[e];
  field(tmp_, k4_);
  for (std::size_t e = 0; e < n; ++e) u[e] += dt / 6.0 * (k1_[e] + 2.0 * k2_[e] + 2.0 * k3_[e] + k4_[e]);
}

double mode_norm(const Modes& u, double s, const SpectrumTable& table) {
  double sum = 0.0;
  for (std::size_t e = 0; e < u.size(); ++e) sum += std::pow(1.0 + table[e].abs, 2.0 * s) * std::norm(u[e]);
  return std::sqrt(sum);
}

Modes initial_data(const SpectrumTable& table, double eps, double s, double decay,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  Modes u(table.size());
  for (std::size_t e = 0; e < u.size(); ++e) {
    const double a = amp(rng);
    u[e] = std::polar(a * std::pow(1.0 + table[e].abs, -(s + decay)), phase(rng));
  }
  const double n = mode_norm(u, s, table);
  if (n == 0.0) throw std::runtime_error("initial_data: degenerate draw");
  for (auto& v : u) v *= eps / n;
  return u;
}

Superactions superactions(const Modes& u, const Setting& setting,
                          const ClusterPartition* high_blocks) {
  Superactions out;
  std::size_t nb = 0;
  for (std::size_t id : setting.band_id) nb = std::max(nb, id + 1);
  out.bands.assign(nb, 0.0);
  for (std::size_t e = 0; e < u.size(); ++e) out.bands[setting.band_id[e]] += std::norm(u[e]);
  if (high_blocks) {
    out.blocks.assign(high_blocks->blocks.size(), 0.0);
    for (std::size_t b = 0; b < high_blocks->blocks.size(); ++b) {
      for (std::size_t e : high_blocks->blocks[b]) out.blocks[b] += std::norm(u[e]);
    }
  }
  return out;
}

double resolve_dt(const SimulationConfig& cfg, double max_omega) {
  if (!(cfg.max_omega_dt > 0.0)) throw std::invalid_argument("simulate: max_omega_dt must be positive");
  if (cfg.dt > 0.0) {
    if (cfg.dt * max_omega > cfg.max_omega_dt * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "simulate: dt * max omega = " << cfg.dt * max_omega << " exceeds the bound "
         << cfg.max_omega_dt;
      throw std::invalid_argument(os.str());
    }
    return cfg.dt;
  }
  if (cfg.dt < 0.0) throw std::invalid_argument("simulate: dt must be positive");
  return max_omega > 0.0 ? cfg.max_omega_dt / max_omega : cfg.max_omega_dt;
}

BeamFields beam_fields(const Modes& u, const SpectrumTable& table) {
  BeamFields f;
  f.psi.resize(u.size());
  f.psi_t.resize(u.size());
  for (std::size_t e = 0; e < u.size(); ++e) {
    const std::size_t m = table.index_of(negate(table[e].point));
    const double w = table[e].omega;
    f.psi[e] = (u[e] + std::conj(u[m])) / std::sqrt(2.0 * w);
    f.psi_t[e] = cplx(0.0, -1.0) * std::sqrt(0.5 * w) * (u[e] - std::conj(u[m]));
  }
  return f;
}

Modes beam_modes(const BeamFields& f, const SpectrumTable& table) {
  Modes u(f.psi.size());
  for (std::size_t e = 0; e < u.size(); ++e) {
    const double w = table[e].omega;
    u[e] = (std::sqrt(w) * f.psi[e] + cplx(0.0, 1.0) * f.psi_t[e] / std::sqrt(w)) / std::sqrt(2.0);
  }
  return u;
}

double beam_energy_norm(const Modes& u, double s, const SpectrumTable& table) {
  const auto f = beam_fields(u, table);
  return mode_norm(f.psi, s + 2.0, table) + mode_norm(f.psi_t, s, table);
}

namespace {

std::size_t zero_entry(const SpectrumTable& table) {
  const auto z = table.find(LatticePoint{});
  if (!z) throw std::invalid_argument("ground state: the table has no zero mode");
  return *z;
}

}  // namespace

GroundChart ground_state_reduce(const Modes& psi, const SpectrumTable& table) {
  const std::size_t z = zero_entry(table);
  if (psi[z] == cplx{}) throw std::domain_error("ground state: psi has zero mean mode");
  GroundChart c;
  c.theta = -std::arg(psi[z]);
  const cplx rot = std::polar(1.0, c.theta);
  c.phi.assign(psi.size(), cplx{});
  for (std::size_t e = 0; e < psi.size(); ++e) {
    c.p += std::norm(psi[e]);
    if (e != z) c.phi[e] = rot * psi[e];
  }
  return c;
}

Modes ground_state_reconstruct(const GroundChart& chart, const SpectrumTable& table) {
  const std::size_t z = zero_entry(table);
  double phi2 = 0.0;
  for (std::size_t e = 0; e < chart.phi.size(); ++e) {
    if (e != z) phi2 += std::norm(chart.phi[e]);
  }
  if (!(phi2 < chart.p)) throw std::domain_error("ground state: ||phi||^2 >= p, outside the chart");
  const cplx rot = std::polar(1.0, -chart.theta);
  Modes psi(chart.phi.size());
  for (std::size_t e = 0; e < psi.size(); ++e) psi[e] = rot * chart.phi[e];
  psi[z] = rot * std::sqrt(chart.p - phi2);
  return psi;
}

BogoliubovResult bogoliubov(const Modes& phi, const SpectrumTable& base, double f) {
  BogoliubovResult r;
  r.w.assign(phi.size(), cplx{});
  r.omega.assign(phi.size(), 0.0);
  for (std::size_t e = 0; e < phi.size(); ++e) {
    const double lambda = base[e].omega;
    if (base[e].point == LatticePoint{}) continue;
    const double a = lambda + f;
    if (!(a > std::abs(f))) throw std::domain_error("bogoliubov: quadratic form is not positive");
    const double t = 0.5 * std::atanh(f / a);
    const double c = std::cosh(t);
    const double s = std::sinh(t);
    const std::size_t m = base.index_of(negate(base[e].point));
    r.w[e] = c * phi[e] + s * std::conj(phi[m]);
    r.omega[e] = std::sqrt(lambda * lambda + 2.0 * f * lambda);
    r.off_diagonal_residual = std::max(r.off_diagonal_residual, std::abs(f * std::cosh(2 * t) - a * std::sinh(2 * t)));
  }
  return r;
}

double bogoliubov_quadratic(const Modes& phi, const SpectrumTable& base, double f) {
  double h = 0.0;
  for (std::size_t e = 0; e < phi.size(); ++e) {
    if (base[e].point == LatticePoint{}) continue;
    const std::size_t m = base.index_of(negate(base[e].point));
    h += (base[e].omega + f) * std::norm(phi[e]) + f * (phi[e] * phi[m]).real();
  }
  return h;
}

double orbital_distance(const Modes& psi, double p0, double s, const SpectrumTable& table) {
  if (!(p0 > 0.0)) throw std::invalid_argument("orbital_distance: need p0 > 0");
  const std::size_t z = zero_entry(table);
  double rest = 0.0;
  for (std::size_t e = 0; e < psi.size(); ++e) {
    if (e != z) rest += std::pow(1.0 + table[e].abs, 2.0 * s) * std::norm(psi[e]);
  }
  const double amp = std::sqrt(p0);
  auto g = [&](double alpha) { return std::norm(psi[z] - std::polar(amp, -alpha)); };
  const int n = 64;
  double best = 0.0;
  double best_v = g(0.0);
  for (int i = 1; i < n; ++i) {
    const double a = kTwoPi * i / n;
    if (g(a) < best_v) {
      best_v = g(a);
      best = a;
    }
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = best - kTwoPi / n;
  double hi = best + kTwoPi / n;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = g(x1);
  double f2 = g(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = g(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = g(x2);
    }
  }
  return std::sqrt(rest + std::min({f1, f2, best_v}));
}

void TrajectoryRecord::write_csv(std::ostream& os) const {
  os << "t,norm_s,norm_0,energy";
  const std::size_t nb = j_band.empty() ? 0 : j_band.front().size();
  const std::size_t nk = j_block.empty() ? 0 : j_block.front().size();
  for (std::size_t b = 0; b < nb; ++b) os << ",J_band_" << b;
  for (std::size_t b = 0; b < nk; ++b) os << ",J_block_" << b;
  if (!orbital.empty()) os << ",orbital_distance";
  if (!beam_energy_norm.empty()) os << ",beam_energy_norm";
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << t[i] << ',' << norm_s[i] << ',' << norm_0[i] << ',' << energy[i];
    for (std::size_t b = 0; b < nb; ++b) os << ',' << j_band[i][b];
    for (std::size_t b = 0; b < nk; ++b) os << ',' << j_block[i][b];
    if (!orbital.empty()) os << ',' << orbital[i];
    if (!beam_energy_norm.empty()) os << ',' << beam_energy_norm[i];
    os << '\n';
  }
}

TrajectoryRecord integrate(const Setting& setting, const SimulationConfig& cfg,
                           std::optional<Modes> u0, const Observer& observer) {
  const auto& table = setting.table;
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw std::invalid_argument("simulate: need 0 < eps < 1");
  if (!(cfg.t_end >= 0.0)) throw std::invalid_argument("simulate: need T >= 0");
  if (cfg.stride < 1) throw std::invalid_argument("simulate: stride must be >= 1");
  GalerkinSystem sys(table, cfg.nonlinearity);
  const double dt0 = resolve_dt(cfg, sys.max_omega());
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.t_end / dt0 - 1e-9));
  const double dt = steps > 0 ? cfg.t_end / static_cast<double>(steps) : 0.0;

  Modes u = u0 ? *u0 : initial_data(table, cfg.eps, cfg.s, cfg.decay, cfg.seed);
  if (u.size() != table.size()) throw std::invalid_argument("simulate: initial state size mismatch");

  std::optional<ClusterPartition> blocks;
  if (cfg.block_cutoff > 0.0) blocks = high_mode_blocks(setting.clusters, table, cfg.block_cutoff);
  const bool beam = cfg.nonlinearity.kind == Nonlinearity::Kind::Beam;

  TrajectoryRecord rec;
  auto sample = [&](double t) {
    for (const auto& v : u) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        throw std::runtime_error("simulate: non-finite state at t = " + std::to_string(t));
      }
    }
    rec.t.push_back(t);
    rec.norm_s.push_back(mode_norm(u, cfg.s, table));
    rec.norm_0.push_back(mode_norm(u, 0.0, table));
    rec.energy.push_back(sys.hamiltonian(u));
    auto j = superactions(u, setting, blocks ? &*blocks : nullptr);
    rec.j_band.push_back(std::move(j.bands));
    rec.j_block.push_back(std::move(j.blocks));
    if (cfg.ground_state_p0) rec.orbital.push_back(orbital_distance(u, *cfg.ground_state_p0, cfg.s, table));
    if (beam) rec.beam_energy_norm.push_back(beam_energy_norm(u, cfg.s, table));
    if (observer) observer(t, u);
  };

  sample(0.0);
  for (std::size_t i = 1; i <= steps; ++i) {
    if (cfg.integrator == IntegratorKind::Strang) {
      sys.strang_step(u, dt, cfg.fixed_point_tol);
    } else {
      sys.rk4_step(u, dt);
    }
    if (i % static_cast<std::size_t>(cfg.stride) == 0 || i == steps) sample(static_cast<double>(i) * dt);
  }
  return rec;
}

TrajectoryRecord integrate_nls(const Setting& setting, const SimulationConfig& cfg,
                               std::optional<Modes> u0, const Observer& observer) {
  if (cfg.nonlinearity.kind == Nonlinearity::Kind::Beam) {
    throw std::invalid_argument("integrate_nls: beam nonlinearity given");
  }
  return integrate(setting, cfg, std::move(u0), observer);
}

TrajectoryRecord integrate_beam(const Setting& setting, const SimulationConfig& cfg,
                                std::optional<Modes> u0, const Observer& observer) {
  if (cfg.nonlinearity.kind == Nonlinearity::Kind::Nls) {
    throw std::invalid_argument("integrate_beam: NLS nonlinearity given");
  }
  SimulationConfig c = cfg;
  c.nonlinearity.kind = Nonlinearity::Kind::Beam;
  return integrate(setting, c, std::move(u0), observer);
}

double fitted_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = std::min(t.size(), y.size());
  if (n < 2) return 0.0;
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return den > 0.0 ? num / den : 0.0;
}

StabilityReport stability_experiment(const Setting& setting, const SimulationConfig& cfg,
                                     const std::vector<Poly>* generators,
                                     TrajectoryRecord* record) {
  const auto start = std::chrono::steady_clock::now();
  const auto& table = setting.table;
  StabilityReport rep;
  rep.eps = cfg.eps;
  rep.seed = cfg.seed;
  {
    GalerkinSystem probe(table, cfg.nonlinearity);
    rep.grid = probe.grid();
    rep.dt = resolve_dt(cfg, probe.max_omega());
  }
  std::vector<double> nf_t;
  std::vector<std::vector<double>> nf_j;
  Observer obs;
  if (generators && !generators->empty()) {
    obs = [&](double t, const Modes& u) {
      const auto z = transform_state(*generators, to_state(u), Direction::Inverse, table);
      nf_t.push_back(t);
      nf_j.push_back(superactions(plus_part(z), setting).bands);
    };
  }
  auto rec = integrate(setting, cfg, std::nullopt, obs);
  rep.steps = rec.t.size() > 1 ? static_cast<std::size_t>(std::llround(rec.t.back() / rep.dt)) : 0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double ratio = rec.norm_s[i] / cfg.eps;
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (!rep.exit_time && ratio > 2.0) rep.exit_time = rec.t[i];
    rep.mass_drift = std::max(rep.mass_drift, std::abs(rec.norm_0[i] - rec.norm_0[0]));
    rep.energy_drift = std::max(rep.energy_drift, std::abs(rec.energy[i] - rec.energy[0]));
  }
  auto column_slopes = [&](const std::vector<double>& t, const std::vector<std::vector<double>>& rows) {
    std::vector<double> out;
    if (rows.empty()) return out;
    for (std::size_t c = 0; c < rows.front().size(); ++c) {
      std::vector<double> y;
      for (const auto& r : rows) y.push_back(r[c]);
      out.push_back(std::abs(fitted_slope(t, y)));
    }
    return out;
  };
  rep.band_drift_rate = column_slopes(rec.t, rec.j_band);
  rep.block_drift_rate = column_slopes(rec.t, rec.j_block);
  std::vector<double> w;
  for (double v : rec.norm_s) w.push_back(v * v);
  rep.weighted_drift_rate = std::abs(fitted_slope(rec.t, w));
  rep.nf_band_drift = column_slopes(nf_t, nf_j);
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (record) *record = std::move(rec);
  return rep;
}

std::string stability_json(const StabilityReport& r) {
  nlohmann::json j;
  j["eps"] = r.eps;
  j["seed"] = r.seed;
  j["dt"] = r.dt;
  j["grid"] = r.grid;
  j["steps"] = r.steps;
  j["max_ratio"] = r.max_ratio;
  j["exit_time"] = r.exit_time ? nlohmann::json(*r.exit_time) : nlohmann::json(nullptr);
  j["band_drift_rate"] = r.band_drift_rate;
  j["block_drift_rate"] = r.block_drift_rate;
  j["weighted_drift_rate"] = r.weighted_drift_rate;
  j["mass_drift"] = r.mass_drift;
  j["energy_drift"] = r.energy_drift;
  j["nf_band_drift"] = r.nf_band_drift;
  return j.dump(2);
}

double PolyTrajectory::energy_drift() const {
  double d = 0.0;
  for (double e : energy) d = std::max(d, std::abs(e - energy.front()));
  return d;
}

namespace {

double column_drift(const std::vector<std::vector<double>>& rows) {
  double d = 0.0;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) d = std::max(d, std::abs(r[c] - rows.front()[c]));
  }
  return d;
}

}  // namespace

double PolyTrajectory::band_drift() const { return column_drift(j_band); }
double PolyTrajectory::block_drift() const { return column_drift(j_block); }

PolyTrajectory integrate_poly(const Poly& q, const Setting& setting, const StateVector& u0,
                              double dt, double t_end, int stride,
                              const ClusterPartition* high_blocks, double tol) {
  const auto& table = setting.table;
  if (u0.size() != 2 * table.size()) throw std::invalid_argument("integrate_poly: state size mismatch");
  if (!(dt > 0.0) || stride < 1) throw std::invalid_argument("integrate_poly: bad dt or stride");
  const FlatPoly flat(q);
  const Poly h = h0_poly(table) + q;
  const FlatPoly flat_h(h);
  const std::size_t n = u0.size();
  std::vector<cplx> half_phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = table[ext_entry(static_cast<ExtId>(i))].omega;
    half_phase[i] = std::polar(1.0, -ext_sign(static_cast<ExtId>(i)) * w * 0.5 * dt);
  }
  StateVector u = u0, u1(n), mid(n), k(n);
  PolyTrajectory out;
  auto sample = [&](double t) {
    out.t.push_back(t);
    out.energy.push_back(flat_h.evaluate(u).real());
    const Modes m = plus_part(u);
    auto j = superactions(m, setting, high_blocks);
    out.j_band.push_back(std::move(j.bands));
    out.j_block.push_back(std::move(j.blocks));
  };
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  sample(0.0);
  for (std::size_t s = 1; s <= steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) u[i] *= half_phase[i];
    if (!flat.empty()) {
      double scale = 0.0;
      for (const auto& v : u) scale = std::max(scale, std::abs(v));
      flat.vector_field(u, k);
      for (std::size_t i = 0; i < n; ++i) u1[i] = u[i] + dt * k[i];
      double prev = std::numeric_limits<double>::infinity();
      int stalled = 0;
      for (int it = 0;; ++it) {
        for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (u[i] + u1[i]);
        flat.vector_field(mid, k);
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const cplx next = u[i] + dt * k[i];
          diff = std::max(diff, std::abs(next - u1[i]));
          u1[i] = next;
        }
        if (!std::isfinite(diff)) throw std::runtime_error("integrate_poly: non-finite state");
        if (diff <= tol * scale) break;
        stalled = diff >= prev ? stalled + 1 : 0;
        if (stalled >= 3 && diff <= 1e3 * tol * scale) break;
        if (it > 200) throw std::runtime_error("integrate_poly: implicit midpoint did not converge");
        prev = diff;
      }
      u.swap(u1);
    }
    for (std::size_t i = 0; i < n; ++i) u[i] *= half_phase[i];
    if (s % static_cast<std::size_t>(stride) == 0 || s == steps) sample(static_cast<double>(s) * dt);
  }
  return out;
}

}  // namespace lnf
