#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lnf/poly.hpp"
#include "lnf/resonance.hpp"

namespace lnf {

// Mode coefficients u_a of the u_+ component, one per table entry; u_- is the conjugate.
using Modes = std::vector<cplx>;

StateVector to_state(const Modes& u);
Modes plus_part(const StateVector& u);

struct Nonlinearity {
  enum class Kind { None, Nls, Beam };
  Kind kind = Kind::None;
  // Nls: f(y) = sum_j c[j] y^{j+1}.  Beam: F(psi) = sum_j c[j] psi^{j+3}.
  std::vector<double> coeffs;

  static Nonlinearity none() { return {}; }
  static Nonlinearity nls(std::vector<double> c) { return {Kind::Nls, std::move(c)}; }
  static Nonlinearity beam(std::vector<double> c) { return {Kind::Beam, std::move(c)}; }
  // Highest power of psi (or |psi|) in the field term.
  int field_degree() const;
};

// 2^a 3^b 5^c not below n.
int smooth_size(int n);

// Galerkin truncation of the model on the table, with an FFT grid large enough that the
// projected nonlinearity is computed without aliasing.
class GalerkinSystem {
 public:
  GalerkinSystem(const SpectrumTable& table, Nonlinearity nl);
  ~GalerkinSystem();
  GalerkinSystem(const GalerkinSystem&) = delete;
  GalerkinSystem& operator=(const GalerkinSystem&) = delete;

  const SpectrumTable& table() const { return table_; }
  const Nonlinearity& nonlinearity() const { return nl_; }
  int grid() const { return m_; }
  double max_omega() const { return max_omega_; }

  // du/dt of the nonlinear part alone.
  void nonlinear_field(const Modes& u, Modes& out);
  // du/dt of the full system.
  void field(const Modes& u, Modes& out);
  double hamiltonian(const Modes& u);
  void linear_phase(Modes& u, double dt) const;

  // Implicit midpoint on the nonlinear part; returns fixed-point iterations used.
  int nonlinear_step(Modes& u, double dt, double tol = 1e-14, int max_iter = 200);
  void strang_step(Modes& u, double dt, double tol = 1e-14);
  void rk4_step(Modes& u, double dt);

  // Physical-space values of psi on the grid (integer coordinates, kappa phase omitted).
  void to_grid(const Modes& u, std::vector<cplx>& grid);

 private:
  struct Fft;
  const SpectrumTable& table_;
  Nonlinearity nl_;
  int m_ = 1;
  std::size_t grid_points_ = 1;
  std::vector<std::size_t> slot_;      // grid slot per table entry
  std::vector<std::size_t> mirror_;    // table entry of -a (beam only)
  std::vector<double> omega_;
  double max_omega_ = 0.0;
  std::unique_ptr<Fft> fft_;
  Modes scratch_a_, scratch_b_, k1_, k2_, k3_, k4_, tmp_;
  std::vector<cplx> grid_;
};

enum class IntegratorKind { Strang, Rk4Reference };

struct SimulationConfig {
  Nonlinearity nonlinearity;
  double eps = 1e-2;
  double s = 4.0;
  double dt = 0.0;  // 0 selects max_omega_dt / max omega
  double t_end = 1.0;
  IntegratorKind integrator = IntegratorKind::Strang;
  std::uint64_t seed = 0;
  int stride = 1;
  double max_omega_dt = 0.1;
  double block_cutoff = 0.0;  // K for the high-block superactions; 0 disables them
  double decay = 1.0;         // extra decay of the random initial profile beyond s
  double fixed_point_tol = 1e-14;
  std::optional<double> ground_state_p0;  // records orbital distance when set
};

struct TrajectoryRecord {
  std::vector<double> t;
  std::vector<double> norm_s;
  std::vector<double> norm_0;
  std::vector<double> energy;
  std::vector<std::vector<double>> j_band;   // [sample][band]
  std::vector<std::vector<double>> j_block;  // [sample][block]
  std::vector<double> orbital;
  std::vector<double> beam_energy_norm;  // ||psi||_{s+2} + ||psi_t||_s, beam only

  std::size_t size() const { return t.size(); }
  void write_csv(std::ostream& os) const;
};

struct Superactions {
  std::vector<double> bands;   // indexed by band id
  std::vector<double> blocks;  // indexed by high block
};

Superactions superactions(const Modes& u, const Setting& setting,
                          const ClusterPartition* high_blocks = nullptr);

// Sobolev norm of u_+ with weight (1 + |a|)^s.
double mode_norm(const Modes& u, double s, const SpectrumTable& table);

// Random initial data with ||u||_s = eps.
Modes initial_data(const SpectrumTable& table, double eps, double s, double decay,
                   std::uint64_t seed);

using Observer = std::function<void(double, const Modes&)>;

// Integrates from u0 (or seeded initial data) and records monitors every stride steps; the
// observer sees the state at every recorded sample, including the last.
TrajectoryRecord integrate(const Setting& setting, const SimulationConfig& cfg,
                           std::optional<Modes> u0 = std::nullopt, const Observer& observer = {});
TrajectoryRecord integrate_nls(const Setting& setting, const SimulationConfig& cfg,
                               std::optional<Modes> u0 = std::nullopt,
                               const Observer& observer = {});
TrajectoryRecord integrate_beam(const Setting& setting, const SimulationConfig& cfg,
                                std::optional<Modes> u0 = std::nullopt,
                                const Observer& observer = {});

double resolve_dt(const SimulationConfig& cfg, double max_omega);

// Beam variables: psi_a = (u_a + conj u_{-a}) / sqrt(2 omega_a), psi_t likewise.
struct BeamFields {
  Modes psi;
  Modes psi_t;
};
BeamFields beam_fields(const Modes& u, const SpectrumTable& table);
Modes beam_modes(const BeamFields& f, const SpectrumTable& table);
double beam_energy_norm(const Modes& u, double s, const SpectrumTable& table);

// psi = e^{-i theta} (sqrt(p - ||phi||^2) e_0 + phi) in mode coordinates, p the mass.
struct GroundChart {
  Modes phi;  // zero at the zero mode
  double p = 0.0;
  double theta = 0.0;
};
GroundChart ground_state_reduce(const Modes& psi, const SpectrumTable& table);
Modes ground_state_reconstruct(const GroundChart& chart, const SpectrumTable& table);

// w_a = cosh(t_a) phi_a + sinh(t_a) conj(phi_{-a}) with tanh(2 t_a) = f / (lambda_a + f),
// mapping sum (lambda+f)|phi_a|^2 + f/2 (phi_a phi_{-a} + c.c.) to sum omega_a |w_a|^2.
struct BogoliubovResult {
  Modes w;
  std::vector<double> omega;
  double off_diagonal_residual = 0.0;
};
BogoliubovResult bogoliubov(const Modes& phi, const SpectrumTable& base_table, double f);
// The quadratic form that bogoliubov diagonalizes, evaluated at phi.
double bogoliubov_quadratic(const Modes& phi, const SpectrumTable& base_table, double f);

// inf over alpha of ||psi - sqrt(p0) e^{-i alpha} e_0||_s, golden-section to 1e-10.
double orbital_distance(const Modes& psi, double p0, double s, const SpectrumTable& table);

struct StabilityReport {
  double eps = 0.0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  int grid = 0;
  std::size_t steps = 0;
  double max_ratio = 0.0;  // max_t ||u||_s / eps
  std::optional<double> exit_time;  // first t with ||u||_s > 2 eps
  std::vector<double> band_drift_rate;  // |slope| of the least-squares line of J_n(t)
  std::vector<double> block_drift_rate;
  double weighted_drift_rate = 0.0;  // slope of sum_n <n>^{2s} J_n
  double mass_drift = 0.0;
  double energy_drift = 0.0;
  double runtime_s = 0.0;  // wall clock, kept out of stability_json
  std::vector<double> nf_band_drift;  // in normal-form coordinates, when generators are given
};

StabilityReport stability_experiment(const Setting& setting, const SimulationConfig& cfg,
                                     const std::vector<Poly>* generators = nullptr,
                                     TrajectoryRecord* record = nullptr);

std::string stability_json(const StabilityReport& r);

// Least-squares slope of y against t.
double fitted_slope(const std::vector<double>& t, const std::vector<double>& y);

// Integrates u' = X_{H0 + Q}(u) on the full extended state: exact H0 phase, implicit midpoint
// on Q, Strang composition. Records energy H0 + Q and superactions.
struct PolyTrajectory {
  std::vector<double> t;
  std::vector<double> energy;
  std::vector<std::vector<double>> j_band;
  std::vector<std::vector<double>> j_block;
  double energy_drift() const;
  double band_drift() const;
  double block_drift() const;
};
PolyTrajectory integrate_poly(const Poly& q, const Setting& setting, const StateVector& u0,
                              double dt, double t_end, int stride,
                              const ClusterPartition* high_blocks = nullptr,
                              double tol = 1e-15);

}  // namespace lnf
