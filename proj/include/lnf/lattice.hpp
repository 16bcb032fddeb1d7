#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace lnf {

constexpr int kMaxDim = 3;

// Integer part of a lattice point; entries beyond the lattice dimension stay zero.
struct LatticePoint {
  std::array<std::int32_t, kMaxDim> n{};

  auto operator<=>(const LatticePoint&) const = default;
  bool operator==(const LatticePoint&) const = default;
};

LatticePoint make_point(std::initializer_list<int> values);
LatticePoint negate(const LatticePoint& p);
std::string to_string(const LatticePoint& p, int dim);

using Vec3 = std::array<double, kMaxDim>;

class Lattice {
 public:
  Lattice() = default;
  Lattice(int dim, Vec3 kappa = {});

  int dim() const { return dim_; }
  const Vec3& kappa() const { return kappa_; }
  bool integral() const;

  Vec3 coord(const LatticePoint& p) const;
  double norm(const LatticePoint& p) const;
  double distance(const LatticePoint& a, const LatticePoint& b) const;

 private:
  int dim_ = 1;
  Vec3 kappa_{};
};

// All points with |integer_part + kappa| <= k_enum, lexicographic on the integer part.
std::vector<LatticePoint> enumerate_lattice(const Lattice& lattice, double k_enum,
                                            std::size_t cap = 1'000'000);

class FrequencyModel {
 public:
  enum class Kind { TorusLaplacian, SpectralMultiplier, GroundState, Beam, Table };

  // Row-major d x d Gram matrix; empty means identity.
  static FrequencyModel torus_laplacian(const Lattice& lattice, std::vector<double> gram = {});
  static FrequencyModel spectral_multiplier(const FrequencyModel& base,
                                            std::map<LatticePoint, double> v);
  // omega = sqrt(lambda^2 + 2 f(p0) lambda), lambda from base.
  static FrequencyModel ground_state(const FrequencyModel& base, double p0, double f_p0);
  // omega = sqrt(lambda^2 + m), lambda from base.
  static FrequencyModel beam(const FrequencyModel& base, double mass);
  static FrequencyModel table(const Lattice& lattice, std::map<LatticePoint, double> values,
                              double beta);

  Kind kind() const { return kind_; }
  const Lattice& lattice() const { return lattice_; }
  double beta() const { return beta_; }

  double frequency(const LatticePoint& a) const;
  // Exact value on the integer torus path (integer Gram, kappa = 0), otherwise empty.
  std::optional<std::int64_t> exact_frequency(const LatticePoint& a) const;
  double floor_norm(const LatticePoint& a) const;

  const FrequencyModel* base() const { return base_.get(); }
  const std::map<LatticePoint, double>& multiplier() const { return values_; }
  double p0() const { return p0_; }
  double pairing() const { return f_p0_; }
  double mass() const { return mass_; }
  const std::vector<double>& gram() const { return gram_; }

 private:
  Kind kind_ = Kind::TorusLaplacian;
  Lattice lattice_;
  double beta_ = 2.0;
  std::vector<double> gram_;
  bool integer_gram_ = true;
  std::shared_ptr<const FrequencyModel> base_;
  std::map<LatticePoint, double> values_;
  double p0_ = 0.0;
  double f_p0_ = 0.0;
  double mass_ = 0.0;
};

double floor_norm(const FrequencyModel& model, const LatticePoint& a);

struct SpectrumEntry {
  LatticePoint point;
  double omega = 0.0;
  double floor = 0.0;  // omega^{1/beta}
  double abs = 0.0;    // Euclidean norm of the effective coordinate
  std::optional<std::int64_t> exact;
};

// Truncated spectrum sorted by (omega, point). Entry positions serve as mode ids.
class SpectrumTable {
 public:
  SpectrumTable() = default;
  static SpectrumTable build(const FrequencyModel& model, double k_enum,
                             std::size_t cap = 1'000'000);
  // Synthetic spectra used for band experiments; points are 1-d placeholders.
  static SpectrumTable from_values(const std::vector<double>& omegas, double beta, int dim = 1);

  const Lattice& lattice() const { return lattice_; }
  int dim() const { return lattice_.dim(); }
  double k_enum() const { return k_enum_; }
  double beta() const { return beta_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const SpectrumEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<SpectrumEntry>& entries() const { return entries_; }
  std::optional<std::size_t> find(const LatticePoint& p) const;
  std::size_t index_of(const LatticePoint& p) const;  // throws if absent
  bool exact() const { return exact_; }
  std::vector<double> omegas() const;

  void write_csv(std::ostream& os) const;

 private:
  void finalize();

  Lattice lattice_;
  double k_enum_ = 0.0;
  double beta_ = 2.0;
  bool exact_ = false;
  std::vector<SpectrumEntry> entries_;
  std::map<LatticePoint, std::size_t> index_;
};

struct AsymptoticFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double inner_max = 0.0;
  double outer_max = 0.0;
  bool pass = false;
};

// Least squares C1 on (|a|^beta, omega); C2 = max residual. The growth test compares C2 with the
// residual of a fit restricted to the inner half radius.
AsymptoticFit fit_asymptotics(const SpectrumTable& table, double growth_tolerance = 2.0);

// Bounds lo, hi with lo |a| <= floor(a) <= hi |a| over nonzero modes.
std::pair<double, double> floor_comparability(const SpectrumTable& table);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

// Index 0 is the initial segment (lowest frequency value); bands n >= 1 follow greedily.
struct BandPartition {
  int dim = 1;
  double beta = 2.0;
  std::vector<Interval> intervals;
  std::vector<std::string> violations;
  std::vector<std::string> diagnostics;

  bool valid() const { return violations.empty(); }
  std::size_t size() const { return intervals.size(); }
  double gap_floor(std::size_t n) const;
  std::optional<std::size_t> find(double omega) const;
  std::size_t band_of(double omega) const;
};

BandPartition band_partition(const std::vector<double>& sorted_omegas, int dim, double beta);
BandPartition band_partition(const SpectrumTable& table);

// Band id of every table entry.
std::vector<std::size_t> band_ids(const SpectrumTable& table, const BandPartition& bands);

}  // namespace lnf
