#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lnf/index.hpp"
#include "lnf/lattice.hpp"

namespace lnf {

using cplx = std::complex<double>;

constexpr int kMaxDegree = 16;

// Sorted multiset of extended ids.
struct Key {
  std::array<ExtId, kMaxDegree> id{};
  std::uint8_t r = 0;

  Key() = default;
  explicit Key(std::span<const ExtId> ids);
  Key(std::initializer_list<ExtId> ids) : Key(std::span<const ExtId>(ids.begin(), ids.size())) {}

  int degree() const { return r; }
  std::span<const ExtId> ids() const { return {id.data(), r}; }
  ExtId operator[](int j) const { return id[static_cast<std::size_t>(j)]; }
  bool operator==(const Key& o) const;
  Key conj() const;  // all signs flipped
};

struct KeyHash {
  std::size_t operator()(const Key& k) const noexcept;
};

// r! / prod m_i! for the multiplicities m_i of the key.
double multiplicity(const Key& k);

// Sparse polynomial; each key stores the symmetric tensor entry c_K, so the polynomial is
// sum_K multiplicity(K) c_K prod_j u_{K_j}. Homogeneous polynomials are the symmetric forms.
class Poly {
 public:
  using Map = std::unordered_map<Key, cplx, KeyHash>;

  void add(const Key& k, cplx c);
  void add_monomial(const Key& k, cplx coef) { add(k, coef / multiplicity(k)); }
  cplx coeff(const Key& k) const;
  cplx monomial_coeff(const Key& k) const { return coeff(k) * multiplicity(k); }

  const Map& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  int min_degree() const;
  int max_degree() const;
  bool homogeneous() const { return empty() || min_degree() == max_degree(); }

  Poly degree_part(int r) const;
  Poly degree_range(int lo, int hi) const;
  void prune(double tol = 1e-14);
  double max_abs() const;

  Poly& operator+=(const Poly& o);
  Poly& operator-=(const Poly& o);
  Poly& operator*=(cplx s);
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, cplx s) { return a *= s; }

 private:
  Map terms_;
};

using SymmetricForm = Poly;
using PolyHamiltonian = Poly;

// Dense state indexed by ExtId; real states satisfy u_{(a,-)} = conj(u_{(a,+)}).
using StateVector = std::vector<cplx>;

StateVector zero_state(const SpectrumTable& table);
bool is_real_state(const StateVector& u, double tol = 0.0);
void make_real(StateVector& u);  // sets u_- from u_+
// Conjugation symmetry c_{conj K} = conj(c_K).
bool is_real(const Poly& p, double tol = 1e-13);

enum class ZeroModePolicy { Reject, ShiftByOne };

struct MuS {
  double mu = 0.0;
  double s = 0.0;
};

MuS mu_S(std::span<const ExtId> a, const SpectrumTable& table,
         ZeroModePolicy policy = ZeroModePolicy::Reject);

double localized_norm(const Poly& f, double nu, double n, const SpectrumTable& table,
                      ZeroModePolicy policy = ZeroModePolicy::Reject, double radius = 1.0);

cplx evaluate(const Poly& f, const StateVector& u);
// dF/du_A for every extended index.
StateVector gradient(const Poly& f, const StateVector& u);
// X_F = (-i dF/du_-, +i dF/du_+), so X_{H0}(a,+) = -i omega_a u_{(a,+)}.
StateVector vector_field(const Poly& f, const StateVector& u);

// Precompiled monomials for repeated gradient evaluation.
class FlatPoly {
 public:
  FlatPoly() = default;
  explicit FlatPoly(const Poly& p);
  bool empty() const { return coef_.empty(); }
  std::size_t size() const { return coef_.size(); }
  cplx evaluate(const StateVector& u) const;
  void gradient(const StateVector& u, StateVector& out) const;
  void vector_field(const StateVector& u, StateVector& out) const;

 private:
  std::vector<ExtId> ids_;
  std::vector<std::uint32_t> offset_;
  std::vector<cplx> coef_;  // monomial coefficients
};

// H0 = sum_a omega_a u_{(a,+)} u_{(a,-)}.
Poly h0_poly(const SpectrumTable& table);
// J_E = sum_{a in E} u_{(a,+)} u_{(a,-)}.
Poly quadratic_mass(const SpectrumTable& table, const std::vector<std::size_t>& entries);

// {F, G} = dF . X_G; terms above max_degree are skipped.
Poly poisson_bracket(const Poly& f, const Poly& g, int max_degree = kMaxDegree,
                     double drop_tol = 1e-14);
// {H0, G} = i (sum_j sigma_j omega_j) G coefficientwise.
Poly h0_bracket(const Poly& g, const SpectrumTable& table);

struct SplitState {
  StateVector low;
  StateVector high;
};
SplitState split(const StateVector& u, double k, const SpectrumTable& table);
int order_in_high(const Key& key, double k, const SpectrumTable& table);
// Homogeneous order in u^perp, or -1 when the support mixes orders.
int order_in_high(const Poly& f, double k, const SpectrumTable& table);
// Parts of order 0, 1, 2 and >= 3 in u^perp.
std::array<Poly, 4> decompose_by_high_order(const Poly& f, double k, const SpectrumTable& table);

enum class SobolevWeight { Abs, Floor };
double sobolev_norm(const StateVector& u, double s, const SpectrumTable& table,
                    SobolevWeight weight = SobolevWeight::Abs);

// Q = P * sum_a u_{(a,+)} u_{(a,-)}.
Poly multiply_by_mass(const Poly& p, const SpectrumTable& table);

// Localized seminorm of X_F computed from the vector-field coefficients themselves.
double vector_field_seminorm(const Poly& f, double nu, double n, const SpectrumTable& table,
                             ZeroModePolicy policy = ZeroModePolicy::Reject);

// Multilinear field X~(u_1..u_r) of a homogeneous F of degree r+1.
StateVector multilinear_field(const Poly& f, const std::vector<StateVector>& us);

struct TameParams {
  double nu = 0.0;
  double n = 4.0;
  double s = 2.0;
  double s0 = 1.75;
};

// Random test state with |u_A| ~ U(0,1) (1+|a|)^{-decay}; real if requested.
StateVector random_state(const SpectrumTable& table, std::mt19937_64& rng, double decay,
                         bool real = false);

// Sparse form of one degree with Gaussian coefficients on uniformly drawn keys; with real set,
// every key is paired with its conjugate.
Poly random_form(const SpectrumTable& table, int degree, int terms, std::mt19937_64& rng,
                 bool real = false);

// max LHS/RHS of the tame inequality over random inputs; throws on parameter breach.
double verify_tame(const Poly& f, const TameParams& p, int trials, const SpectrumTable& table,
                   std::mt19937_64& rng, ZeroModePolicy policy = ZeroModePolicy::ShiftByOne);

struct BilinearReport {
  double worst_ratio = 0.0;  // fitted C_N
  std::size_t checked = 0;
};

// Torus only: integral of g times exponentials equals ghat(-sum a_j).
BilinearReport verify_bilinear_eigen(const std::map<LatticePoint, cplx>& ghat, int k, double nu,
                                     double n, const SpectrumTable& table,
                                     const std::vector<std::vector<std::size_t>>& tuples);

// Cutoff comparison on one form: lhs = ||F||^{nu,N}, rhs = ||F||^{nu,N'} / K^{delta(N'-N)}.
struct CutoffInequality {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = true;
  Key worst;  // key maximizing lhs-term / rhs-term
  double worst_ratio = 0.0;
};
CutoffInequality check_cutoff_inequality(const Poly& f, double nu, double n, double n_prime,
                                         double k, double delta, const SpectrumTable& table,
                                         ZeroModePolicy policy = ZeroModePolicy::ShiftByOne);

void write_poly_jsonl(const Poly& p, const SpectrumTable& table, std::ostream& os);
Poly read_poly_jsonl(std::istream& is, const SpectrumTable& table);
void write_state_csv(const StateVector& u, const SpectrumTable& table, std::ostream& os);
StateVector read_state_csv(std::istream& is, const SpectrumTable& table);

}  // namespace lnf
