#include "lnf/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace lnf {

std::vector<ExtId> to_ext(const SpectrumTable& t, const std::vector<ExtendedIndex>& A) {
  std::vector<ExtId> out;
  out.reserve(A.size());
  for (const auto& x : A) out.push_back(to_ext(t, x));
  return out;
}

std::string format_multi_index(const SpectrumTable& t, const std::vector<ExtId>& A) {
  std::string s = "(";
  for (std::size_t j = 0; j < A.size(); ++j) {
    if (j) s += ',';
    s += '(' + to_string(t[ext_entry(A[j])].point, t.dim()) + (ext_sign(A[j]) > 0 ? ",+)" : ",-)");
  }
  return s + ')';
}

Setting make_setting(SpectrumTable table, double delta, double c_delta) {
  Setting s;
  s.table = std::move(table);
  s.bands = band_partition(s.table);
  s.band_id = band_ids(s.table, s.bands);
  s.clusters = build_clusters(s.table, delta, c_delta);
  return s;
}

Setting make_setting(const FrequencyModel& model, double k_enum, double delta, double c_delta) {
  return make_setting(SpectrumTable::build(model, k_enum), delta, c_delta);
}

std::vector<std::size_t> ordering_permutation(const std::vector<ExtId>& a,
                                              const SpectrumTable& table) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t x, std::size_t y) {
    const auto& ex = table[ext_entry(a[x])];
    const auto& ey = table[ext_entry(a[y])];
    if (ex.floor != ey.floor) return ex.floor > ey.floor;
    if (ex.point != ey.point) return ex.point < ey.point;
    return ext_sign(a[x]) > ext_sign(a[y]);
  });
  return perm;
}

MultiIndex canonical_multi_index(const std::vector<ExtId>& a, const SpectrumTable& table) {
  MultiIndex m;
  m.perm = ordering_permutation(a, table);
  for (std::size_t j : m.perm) m.entries.push_back(a[j]);
  return m;
}

bool is_resonant_W(const std::vector<ExtId>& a, const std::vector<std::size_t>& band_id) {
  const std::size_t r = a.size();
  if (r == 0 || r % 2 != 0) return false;
  std::vector<std::size_t> plus, minus;
  for (ExtId id : a) (ext_sign(id) > 0 ? plus : minus).push_back(band_id[ext_entry(id)]);
  if (plus.size() != minus.size()) return false;
  const std::size_t h = plus.size();
  std::vector<int> match_minus(h, -1);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t p) {
    for (std::size_t q = 0; q < h; ++q) {
      if (seen[q] || plus[p] != minus[q]) continue;
      seen[q] = 1;
      if (match_minus[q] < 0 || augment(static_cast<std::size_t>(match_minus[q]))) {
        match_minus[q] = static_cast<int>(p);
        return true;
      }
    }
    return false;
  };
  for (std::size_t p = 0; p < h; ++p) {
    seen.assign(h, 0);
    if (!augment(p)) return false;
  }
  return true;
}

double signed_divisor(const std::vector<ExtId>& a, const SpectrumTable& table) {
  if (table.exact()) {
    std::int64_t s = 0;
    for (ExtId id : a) s += ext_sign(id) * *table[ext_entry(id)].exact;
    return static_cast<double>(s);
  }
  double s = 0.0;
  for (ExtId id : a) s += ext_sign(id) * table[ext_entry(id)].omega;
  return s;
}

double small_divisor(const std::vector<ExtId>& a, const SpectrumTable& table) {
  return std::abs(signed_divisor(a, table));
}

std::optional<std::int64_t> exact_small_divisor(const std::vector<ExtId>& a,
                                                const SpectrumTable& table) {
  if (!table.exact()) return std::nullopt;
  std::int64_t s = 0;
  for (ExtId id : a) s += ext_sign(id) * *table[ext_entry(id)].exact;
  return s < 0 ? -s : s;
}

void validate_cutoff(const BandPartition& bands, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("cutoff: K must be positive");
  const double kb = std::pow(k, bands.beta);
  for (std::size_t n = 0; n + 1 < bands.intervals.size(); ++n) {
    if (kb > bands.intervals[n].hi && kb < bands.intervals[n + 1].lo) return;
  }
  std::ostringstream os;
  os << "cutoff: K = " << k << " (K^beta = " << kb << ") is not strictly between two bands";
  throw std::invalid_argument(os.str());
}

bool is_block_nonresonant(const std::vector<ExtId>& a, double k, const Setting& setting) {
  validate_cutoff(setting.bands, k);
  const auto& table = setting.table;
  std::vector<ExtId> large;
  for (ExtId id : a) {
    if (table[ext_entry(id)].floor >= k) large.push_back(id);
  }
  switch (large.size()) {
    case 0:
      return !is_resonant_W(a, setting.band_id);
    case 1:
      return true;
    case 2: {
      const std::size_t e1 = ext_entry(large[0]);
      const std::size_t e2 = ext_entry(large[1]);
      if (setting.clusters.block_of[e1] == setting.clusters.block_of[e2]) {
        return ext_sign(large[0]) * ext_sign(large[1]) == 1;
      }
      const double dist = table.lattice().distance(table[e1].point, table[e2].point);
      return dist <= std::pow(k, setting.clusters.delta);
    }
    default:
      return false;
  }
}

double default_tau(int dim, int r) { return static_cast<double>(dim * r + 2); }

namespace {

bool lexicographically_negative(const LatticePoint& p) {
  for (int v : p.n) {
    if (v != 0) return v < 0;
  }
  return false;
}

// Preference among equally small witnesses: distinct magnitudes, small modes, nonnegative
// points, leading plus sign, few minus signs.
auto witness_key(const std::vector<ExtId>& a, const SpectrumTable& table) {
  const auto m = canonical_multi_index(a, table).entries;
  std::vector<double> mags;
  int neg_points = 0, minus = 0;
  for (ExtId id : m) {
    mags.push_back(table[ext_entry(id)].abs);
    neg_points += lexicographically_negative(table[ext_entry(id)].point);
    minus += ext_sign(id) < 0;
  }
  std::sort(mags.begin(), mags.end());
  const bool repeated = std::adjacent_find(mags.begin(), mags.end()) != mags.end();
  const double top = mags.empty() ? 0.0 : mags.back();
  const int lead_minus = m.empty() ? 0 : ext_sign(m.front()) < 0;
  return std::make_tuple(repeated, top, neg_points, lead_minus, minus);
}

double binomial(double n, double k) {
  double r = 1.0;
  for (int i = 1; i <= static_cast<int>(k); ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

ResonanceCertificate certify_nonresonance(int r, const SpectrumTable& table,
                                          const std::vector<std::size_t>& band_id, double gamma,
                                          double tau, const CertifyOptions& opts) {
  if (r < 1) throw std::invalid_argument("certify_nonresonance: r must be positive");
  if (table.empty()) throw std::invalid_argument("certify_nonresonance: empty table");
  ResonanceCertificate cert;
  cert.r = r;
  cert.k_enum = table.k_enum();
  cert.gamma = gamma;
  cert.tau = tau;
  cert.exact = table.exact();
  cert.sampled = opts.sampling;
  cert.min_weighted = std::numeric_limits<double>::infinity();
  cert.min_nonzero_divisor = std::numeric_limits<double>::infinity();
  const std::size_t m = 2 * table.size();
  constexpr double kZero = 1e-12;

  std::vector<ExtId> a(static_cast<std::size_t>(r));
  bool have_best = false;
  decltype(witness_key(a, table)) best_key;

  auto consider = [&](const std::vector<ExtId>& idx) {
    ++cert.scanned;
    double div = small_divisor(idx, table);
    if (!cert.exact && div < kZero) div = 0.0;
    double amax = 0.0;
    for (ExtId id : idx) amax = std::max(amax, table[ext_entry(id)].abs);
    const double weighted = div * std::pow(MultiplierEnsemble::bracket(amax), tau);
    const bool interesting =
        weighted <= cert.min_weighted || weighted < gamma || (div > 0.0 && div < cert.min_nonzero_divisor);
    if (!interesting) return;
    if (is_resonant_W(idx, band_id)) return;
    if (div > 0.0) cert.min_nonzero_divisor = std::min(cert.min_nonzero_divisor, div);
    if (weighted < gamma) {
      ++cert.violations;
      if (opts.on_violation) opts.on_violation(idx, weighted);
    }
    if (weighted < cert.min_weighted) {
      cert.min_weighted = weighted;
      cert.min_divisor = div;
      cert.witness = idx;
      best_key = witness_key(idx, table);
      have_best = true;
    } else if (weighted == cert.min_weighted && have_best) {
      auto key = witness_key(idx, table);
      if (key < best_key) {
        best_key = key;
        cert.witness = idx;
        cert.min_divisor = div;
      }
    }
  };

  if (!opts.sampling) {
    const double total = binomial(static_cast<double>(m + r - 1), r);
    if (total > opts.budget) {
      std::ostringstream os;
      os << "certify_nonresonance: exhaustive scan of " << total
         << " multisets exceeds the budget; switch to sampling mode";
      throw std::length_error(os.str());
    }
    std::vector<std::size_t> c(static_cast<std::size_t>(r), 0);
    while (true) {
      for (int j = 0; j < r; ++j) a[j] = static_cast<ExtId>(c[j]);
      consider(a);
      int j = r - 1;
      while (j >= 0 && c[j] == m - 1) --j;
      if (j < 0) break;
      ++c[j];
      for (int k = j + 1; k < r; ++k) c[k] = c[j];
    }
  } else {
    std::mt19937_64 rng(opts.seed);
    for (std::uint64_t s = 0; s < opts.samples; ++s) {
      for (int j = 0; j < r; ++j) a[j] = static_cast<ExtId>(rng() % m);
      std::sort(a.begin(), a.end());
      consider(a);
    }
  }
  if (!std::isfinite(cert.min_nonzero_divisor)) cert.min_nonzero_divisor = 0.0;
  if (!have_best) cert.min_weighted = std::numeric_limits<double>::infinity();
  cert.pass = cert.min_weighted >= gamma;
  return cert;
}

std::string certificate_json(const ResonanceCertificate& cert, const SpectrumTable& table) {
  nlohmann::ordered_json j;
  j["r"] = cert.r;
  j["K"] = cert.k_enum;
  j["gamma"] = cert.gamma;
  j["tau"] = cert.tau;
  j["min_divisor"] = cert.min_divisor;
  j["min_weighted_divisor"] = std::isfinite(cert.min_weighted) ? nlohmann::ordered_json(cert.min_weighted)
                                                               : nlohmann::ordered_json(nullptr);
  j["min_nonzero_divisor"] = cert.min_nonzero_divisor;
  nlohmann::ordered_json w = nlohmann::ordered_json::array();
  for (ExtId id : canonical_multi_index(cert.witness, table).entries) {
    const Vec3 x = table.lattice().coord(table[ext_entry(id)].point);
    std::vector<double> v(x.begin(), x.begin() + table.dim());
    w.push_back({v, ext_sign(id)});
  }
  j["witness"] = w;
  j["scanned"] = cert.scanned;
  j["violations"] = cert.violations;
  j["exact"] = cert.exact;
  j["mode"] = cert.sampled ? "sampling" : "exhaustive";
  j["pass"] = cert.pass;
  return j.dump(2);
}

namespace {

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

double MultiplierEnsemble::draw(const Lattice& lattice, const LatticePoint& a) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a.n[0]), static_cast<std::uint32_t>(a.n[1]),
                    static_cast<std::uint32_t>(a.n[2]), 0x5eedu};
  std::mt19937_64 rng(seq);
  const double u = unit_uniform(rng()) - 0.5;
  double v = u * std::pow(bracket(lattice.norm(a)), -n);
  if (fold_zero_mode && lattice.integral() && a == LatticePoint{}) v = std::abs(v);
  return v;
}

std::map<LatticePoint, double> MultiplierEnsemble::sample(
    const Lattice& lattice, const std::vector<LatticePoint>& points) const {
  std::map<LatticePoint, double> out;
  for (const auto& p : points) out[p] = draw(lattice, p);
  return out;
}

std::map<LatticePoint, double> MultiplierEnsemble::sample(const SpectrumTable& table) const {
  std::vector<LatticePoint> pts;
  for (const auto& e : table.entries()) pts.push_back(e.point);
  return sample(table.lattice(), pts);
}

MeasureEstimate estimate_resonant_measure(const ModeVector& k, double gamma,
                                          const FrequencyModel& base, double n,
                                          std::uint64_t n_samples, std::uint64_t seed) {
  std::vector<std::pair<double, double>> terms;  // (k_a lambda_a, k_a <a>^{-n})
  double lin = 0.0;
  double radius = 1.0;
  std::map<LatticePoint, int> merged;
  for (const auto& [p, c] : k) merged[p] += c;
  for (const auto& [p, c] : merged) {
    if (c == 0) continue;
    const double br = MultiplierEnsemble::bracket(base.lattice().norm(p));
    radius = std::max(radius, br);
    lin += c * base.frequency(p);
    terms.emplace_back(c * base.frequency(p), c * std::pow(br, -n));
  }
  if (terms.empty()) throw std::invalid_argument("estimate_resonant_measure: k = 0");
  if (n_samples == 0) throw std::invalid_argument("estimate_resonant_measure: no samples");
  MeasureEstimate est;
  est.samples = n_samples;
  est.k_radius = radius;
  est.bound = 2.0 * gamma * std::pow(radius, n);
  // Fixed-size chunks with their own sub-seeds keep the estimate independent of scheduling.
  constexpr std::uint64_t kChunk = 4096;
  std::uint64_t hits = 0;
  for (std::uint64_t start = 0, chunk = 0; start < n_samples; start += kChunk, ++chunk) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk)};
    std::mt19937_64 rng(seq);
    const std::uint64_t stop = std::min(n_samples, start + kChunk);
    for (std::uint64_t s = start; s < stop; ++s) {
      double sum = lin;
      for (const auto& t : terms) sum += t.second * (unit_uniform(rng()) - 0.5);
      if (std::abs(sum) < gamma) ++hits;
    }
  }
  const double p = static_cast<double>(hits) / static_cast<double>(n_samples);
  est.fraction = p;
  est.stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(n_samples));
  est.pass = est.fraction <= est.bound + 3.0 * est.stderr_;
  return est;
}

std::string mode_vector_hash(const ModeVector& k, int dim) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ull;
    }
  };
  for (const auto& [p, c] : k) {
    for (int i = 0; i < dim; ++i) mix(p.n[i]);
    mix(c);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

double ground_state_divisor(const std::vector<double>& x, std::size_t l, double y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double q = x[j] * x[j] * y + x[j];
    if (q < 0.0) throw std::domain_error("ground_state_divisor: negative radicand");
    s += (j < l ? 1.0 : -1.0) * std::sqrt(q);
  }
  return s;
}

DivisorRoots ground_state_divisor_function(const std::vector<double>& x, std::size_t l,
                                           const std::vector<double>& y_grid) {
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ground_state_divisor: x in [0,1]^p");
  }
  if (l > x.size()) throw std::invalid_argument("ground_state_divisor: l exceeds p");
  DivisorRoots out;
  std::vector<double> f;
  f.reserve(y_grid.size());
  for (double y : y_grid) {
    f.push_back(ground_state_divisor(x, l, y));
    out.max_abs = std::max(out.max_abs, std::abs(f.back()));
  }
  if (out.max_abs <= 1e-14) {
    out.identically_zero = true;
    return out;
  }
  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    if (f[i] == 0.0) {
      out.roots.push_back(y_grid[i]);
      continue;
    }
    if (i + 1 < y_grid.size() && f[i + 1] != 0.0 && (f[i] < 0.0) != (f[i + 1] < 0.0)) {
      double lo = y_grid[i], hi = y_grid[i + 1];
      double flo = f[i];
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        const double fm = ground_state_divisor(x, l, mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.roots.push_back(0.5 * (lo + hi));
    }
  }
  return out;
}

}  // namespace lnf
