#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lnf/clusters.hpp"
#include "lnf/index.hpp"
#include "lnf/lattice.hpp"

namespace lnf {

// Spectrum together with its band and cluster structure.
struct Setting {
  SpectrumTable table;
  BandPartition bands;
  std::vector<std::size_t> band_id;
  ClusterPartition clusters;
};

Setting make_setting(SpectrumTable table, double delta = 0.5, double c_delta = 1.0);
Setting make_setting(const FrequencyModel& model, double k_enum, double delta = 0.5,
                     double c_delta = 1.0);

struct MultiIndex {
  std::vector<ExtId> entries;      // canonical order
  std::vector<std::size_t> perm;   // entries[j] == original[perm[j]]
};

// Stable sort by floor descending, then lexicographic point, then + before -.
std::vector<std::size_t> ordering_permutation(const std::vector<ExtId>& a,
                                              const SpectrumTable& table);
MultiIndex canonical_multi_index(const std::vector<ExtId>& a, const SpectrumTable& table);

bool is_resonant_W(const std::vector<ExtId>& a, const std::vector<std::size_t>& band_id);

double signed_divisor(const std::vector<ExtId>& a, const SpectrumTable& table);
double small_divisor(const std::vector<ExtId>& a, const SpectrumTable& table);
std::optional<std::int64_t> exact_small_divisor(const std::vector<ExtId>& a,
                                                const SpectrumTable& table);

// Throws unless K^beta lies strictly inside a gap between two consecutive bands.
void validate_cutoff(const BandPartition& bands, double k);

bool is_block_nonresonant(const std::vector<ExtId>& a, double k, const Setting& setting);

struct ResonanceCertificate {
  int r = 0;
  double k_enum = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
  double min_weighted = 0.0;  // min of divisor * max(1, max_j |a_j|)^tau
  double min_divisor = 0.0;   // raw divisor of the witness
  double min_nonzero_divisor = 0.0;
  std::vector<ExtId> witness;
  std::uint64_t scanned = 0;
  std::uint64_t violations = 0;
  bool exact = false;
  bool sampled = false;
  bool pass = false;
};

struct CertifyOptions {
  bool sampling = false;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
  double budget = 5e7;
  // Called for every scanned non-W multi-index below gamma.
  std::function<void(const std::vector<ExtId>&, double)> on_violation;
};

double default_tau(int dim, int r);

ResonanceCertificate certify_nonresonance(int r, const SpectrumTable& table,
                                          const std::vector<std::size_t>& band_id, double gamma,
                                          double tau, const CertifyOptions& opts = {});

std::string certificate_json(const ResonanceCertificate& cert, const SpectrumTable& table);

// Per-mode V_a with V_a <a>^n uniform in [-1/2, 1/2]; <a> = max(1, |a|).
struct MultiplierEnsemble {
  double n = 2.0;
  std::uint64_t seed = 0;
  // Reflect V at the zero mode of an integer lattice to keep its frequency nonnegative.
  bool fold_zero_mode = true;

  static double bracket(double abs) { return abs > 1.0 ? abs : 1.0; }
  double draw(const Lattice& lattice, const LatticePoint& a) const;
  std::map<LatticePoint, double> sample(const Lattice& lattice,
                                        const std::vector<LatticePoint>& points) const;
  std::map<LatticePoint, double> sample(const SpectrumTable& table) const;
};

struct MeasureEstimate {
  double fraction = 0.0;
  double bound = 0.0;
  double stderr_ = 0.0;
  double k_radius = 0.0;
  std::uint64_t samples = 0;
  bool pass = false;
};

using ModeVector = std::vector<std::pair<LatticePoint, int>>;

// Monte Carlo fraction of V with |sum_a k_a (lambda_a + V_a)| < gamma.
MeasureEstimate estimate_resonant_measure(const ModeVector& k, double gamma,
                                          const FrequencyModel& base, double n,
                                          std::uint64_t n_samples, std::uint64_t seed);

std::string mode_vector_hash(const ModeVector& k, int dim);

struct DivisorRoots {
  std::vector<double> roots;
  bool identically_zero = false;
  double max_abs = 0.0;
};

// f(x,y) = sum_{j<=l} sqrt(x_j^2 y + x_j) - sum_{j>l} sqrt(x_j^2 y + x_j) on a grid.
double ground_state_divisor(const std::vector<double>& x, std::size_t l, double y);
DivisorRoots ground_state_divisor_function(const std::vector<double>& x, std::size_t l,
                                           const std::vector<double>& y_grid);

}  // namespace lnf
