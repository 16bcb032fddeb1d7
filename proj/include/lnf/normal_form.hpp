#pragma once

#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnf/poly.hpp"
#include "lnf/resonance.hpp"

namespace lnf {

// A divisor on a Block-K-non-resonant index fell below the certified threshold.
class CertificateBreach : public std::runtime_error {
 public:
  CertificateBreach(const std::string& what, std::vector<ExtId> witness, double divisor)
      : std::runtime_error(what), witness(std::move(witness)), divisor(divisor) {}
  std::vector<ExtId> witness;
  double divisor;
};

// The perturbation is too large for the chosen radius and cutoff.
class SmallnessError : public std::runtime_error {
 public:
  SmallnessError(const std::string& what, double mu) : std::runtime_error(what), mu(mu) {}
  double mu;
};

enum class Bucket { Z0, ZB, Z2, Zge3, Nonresonant };
const char* bucket_name(Bucket b);

Bucket classify_term(std::span<const ExtId> a, double k, const Setting& setting);

// K nearest to R^{-1/(2 tau)} among inter-band midpoints in the floor scale; ties go low.
double choose_cutoff(double radius, double tau, const BandPartition& bands);

struct HomologicalSolution {
  Poly g;
  Poly z;
  double residual = 0.0;  // max coefficient of {H0,G} + F - Z
};

// {H0, G} + F = Z with Z the part of F off I^K; G = i F / Omega on I^K.
// Throws CertificateBreach when divisor * max(1, max|a_j|)^tau < gamma on an I^K index.
HomologicalSolution solve_homological(const Poly& f, double k, const Setting& setting,
                                      double gamma, double tau);

struct LieResult {
  Poly value;    // sum_{j<=n} Ad_G^j P / j!, degree <= max_degree
  Poly dropped;  // terms generated above max_degree
};

// Ad_G P = {P, G}, so P o Phi_G = sum_j Ad_G^j P / j!.
LieResult lie_transform(const Poly& g, const Poly& p, int n, int max_degree);

// n = ceil((r_bar + 3 - r1) / r2) with r2 = deg G - 2.
int lie_order(int r_bar, int r1, int g_degree);

struct NormalFormConfig {
  int r = 1;
  int r_bar = 2;
  double radius = 1e-2;
  double k = 0.0;  // 0 selects choose_cutoff
  double nu = 0.0;
  double n_loc = 4.0;
  int lie_terms = 0;  // 0 selects lie_order
  double mu_max = 0.5;
};

struct StepReport {
  int degree = 0;
  std::size_t f_terms = 0;
  std::size_t g_terms = 0;
  double f_norm = 0.0;  // localized norms scaled by R^degree
  double g_norm = 0.0;
  double z_norm = 0.0;
  double p_norm = 0.0;  // not yet normalized part after the step
  double residual = 0.0;
  double g_bound_ratio = 0.0;  // ||G|| / ((K^tau / gamma) ||F||)
  double killed_residual = 0.0;
  double ledger_norm = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
};

struct NormalFormResult {
  double k = 0.0;
  double mu = 0.0;
  double tau = 0.0;
  double gamma = 0.0;
  Poly h0;
  Poly z0, zb, z2, zge3;
  std::vector<Poly> generators;  // G_1 ... G_k in application order of the Lie series
  Poly ledger;
  std::vector<StepReport> steps;
  double p0_norm = 0.0;

  Poly normal_form() const { return z0 + zb + z2 + zge3; }
  Poly truncated_hamiltonian() const { return h0 + normal_form(); }
};

// Normalizes degrees 3 .. r_bar + 2 of H = H0 + P. Certificates are required for every degree.
NormalFormResult iterate(const Poly& p, const Setting& setting, const NormalFormConfig& cfg,
                         const std::map<int, ResonanceCertificate>& certificates);

enum class Direction { Forward, Inverse };

// T = Phi_{G_1} o ... o Phi_{G_k}; Forward returns T(u), Inverse T^{-1}(u).
// Adaptive step-doubled RK4 to tol; throws SmallnessError if ||u||_s exceeds ball mid-flow.
StateVector transform_state(const std::vector<Poly>& generators, const StateVector& u,
                            Direction dir, const SpectrumTable& table, double tol = 1e-10,
                            double ball = 0.0, double s = 0.0);

struct CommutationReport {
  double band_max = 0.0;   // max |coeff| of {Z0, J_n}
  double block_max = 0.0;  // max |coeff| of {ZB, J_alpha}
  double z2_block_max = 0.0;  // reported only
  std::size_t bands = 0;
  std::size_t blocks = 0;
  double max() const { return std::max(band_max, block_max); }
};

CommutationReport check_superaction_commutation(const Poly& z0, const Poly& zb, const Poly& z2,
                                                const Setting& setting, double k);

// Galerkin Hamiltonian of int F(|psi|^2) dx with F' = f, f(y) = sum_j c_j y^j (c[0] is the y^1
// coefficient), psi = (2 pi)^{-d/2} sum_a u_a e^{iax}. Degrees above max_degree are skipped.
Poly nls_potential(const SpectrumTable& table, const std::vector<double>& f_coeffs,
                   int max_degree);

// sup over sampled states in the R-ball of H^s of ||X_F(u)||_s.
double sampled_field_sup(const Poly& f, const SpectrumTable& table, double radius, double s,
                         int samples, std::mt19937_64& rng);

}  // namespace lnf
