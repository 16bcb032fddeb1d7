#include "lnf/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace lnf {

LatticePoint make_point(std::initializer_list<int> values) {
  if (values.size() > kMaxDim) throw std::invalid_argument("make_point: too many coordinates");
  LatticePoint p;
  std::size_t i = 0;
  for (int v : values) p.n[i++] = v;
  return p;
}

LatticePoint negate(const LatticePoint& p) {
  LatticePoint q;
  for (int i = 0; i < kMaxDim; ++i) q.n[i] = -p.n[i];
  return q;
}

std::string to_string(const LatticePoint& p, int dim) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < dim; ++i) {
    if (i) os << ',';
    os << p.n[i];
  }
  os << ')';
  return os.str();
}

Lattice::Lattice(int dim, Vec3 kappa) : dim_(dim), kappa_(kappa) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("Lattice: dimension must be 1..3");
  for (int i = 0; i < kMaxDim; ++i) {
    if (i >= dim) {
      kappa_[i] = 0.0;
    } else if (!(kappa_[i] >= 0.0 && kappa_[i] < 1.0)) {
      throw std::invalid_argument("Lattice: kappa must lie in [0,1)");
    }
  }
}

bool Lattice::integral() const {
  return std::all_of(kappa_.begin(), kappa_.end(), [](double k) { return k == 0.0; });
}

Vec3 Lattice::coord(const LatticePoint& p) const {
  Vec3 x{};
  for (int i = 0; i < dim_; ++i) x[i] = p.n[i] + kappa_[i];
  return x;
}

double Lattice::norm(const LatticePoint& p) const {
  const Vec3 x = coord(p);
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

double Lattice::distance(const LatticePoint& a, const LatticePoint& b) const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) {
    const double d = static_cast<double>(a.n[i]) - static_cast<double>(b.n[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<LatticePoint> enumerate_lattice(const Lattice& lattice, double k_enum,
                                            std::size_t cap) {
  if (!(k_enum > 0.0)) throw std::invalid_argument("enumerate_lattice: K_enum must be positive");
  const int d = lattice.dim();
  const auto& kappa = lattice.kappa();
  std::array<int, kMaxDim> lo{}, hi{};
  double box = 1.0;
  for (int i = 0; i < d; ++i) {
    lo[i] = static_cast<int>(std::ceil(-k_enum - kappa[i]));
    hi[i] = static_cast<int>(std::floor(k_enum - kappa[i]));
    box *= static_cast<double>(hi[i] - lo[i] + 1);
  }
  // The ball holds at least ~ (pi/4)^d of the box; reject early when even that breaks the cap.
  if (box * std::pow(0.5, d) > static_cast<double>(cap)) {
    throw std::length_error("enumerate_lattice: point count exceeds cap");
  }
  std::vector<LatticePoint> out;
  const double r2 = k_enum * k_enum;
  LatticePoint p;
  for (int i = 0; i < d; ++i) p.n[i] = lo[i];
  while (true) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double x = p.n[i] + kappa[i];
      s += x * x;
    }
    if (s <= r2 * (1.0 + 1e-15)) {
      out.push_back(p);
      if (out.size() > cap) throw std::length_error("enumerate_lattice: point count exceeds cap");
    }
    int i = d - 1;
    while (i >= 0 && p.n[i] == hi[i]) {
      p.n[i] = lo[i];
      --i;
    }
    if (i < 0) break;
    ++p.n[i];
  }
  return out;
}

FrequencyModel FrequencyModel::torus_laplacian(const Lattice& lattice, std::vector<double> gram) {
  FrequencyModel m;
  m.kind_ = Kind::TorusLaplacian;
  m.lattice_ = lattice;
  m.beta_ = 2.0;
  const int d = lattice.dim();
  if (gram.empty()) {
    gram.assign(static_cast<std::size_t>(d * d), 0.0);
    for (int i = 0; i < d; ++i) gram[static_cast<std::size_t>(i * d + i)] = 1.0;
  }
  if (gram.size() != static_cast<std::size_t>(d * d)) {
    throw std::invalid_argument("torus_laplacian: Gram matrix must be d x d");
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (gram[i * d + j] != gram[j * d + i]) {
        throw std::invalid_argument("torus_laplacian: Gram matrix must be symmetric");
      }
    }
  }
  // Leading principal minors for positive definiteness (d <= 3).
  const auto g = [&](int i, int j) { return gram[i * d + j]; };
  bool spd = g(0, 0) > 0.0;
  if (d >= 2) spd = spd && g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) > 0.0;
  if (d == 3) {
    const double det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) -
                       g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
                       g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
    spd = spd && det > 0.0;
  }
  if (!spd) throw std::invalid_argument("torus_laplacian: Gram matrix must be positive definite");
  m.integer_gram_ = std::all_of(gram.begin(), gram.end(), [](double v) {
    return std::floor(v) == v && std::abs(v) < 1e9;
  });
  m.gram_ = std::move(gram);
  return m;
}

FrequencyModel FrequencyModel::spectral_multiplier(const FrequencyModel& base,
                                                   std::map<LatticePoint, double> v) {
  FrequencyModel m;
  m.kind_ = Kind::SpectralMultiplier;
  m.lattice_ = base.lattice_;
  m.beta_ = base.beta_;
  m.base_ = std::make_shared<FrequencyModel>(base);
  m.values_ = std::move(v);
  return m;
}

FrequencyModel FrequencyModel::ground_state(const FrequencyModel& base, double p0, double f_p0) {
  if (!(p0 > 0.0)) throw std::invalid_argument("ground_state: p0 must be positive");
  FrequencyModel m;
  m.kind_ = Kind::GroundState;
  m.lattice_ = base.lattice_;
  m.beta_ = base.beta_;
  m.base_ = std::make_shared<FrequencyModel>(base);
  m.p0_ = p0;
  m.f_p0_ = f_p0;
  return m;
}

FrequencyModel FrequencyModel::beam(const FrequencyModel& base, double mass) {
  if (!(mass >= 0.0)) throw std::invalid_argument("beam: mass must be nonnegative");
  FrequencyModel m;
  m.kind_ = Kind::Beam;
  m.lattice_ = base.lattice_;
  // omega = lambda + O(m / lambda), so the exponent is inherited.
  m.beta_ = base.beta_;
  m.base_ = std::make_shared<FrequencyModel>(base);
  m.mass_ = mass;
  return m;
}

FrequencyModel FrequencyModel::table(const Lattice& lattice, std::map<LatticePoint, double> values,
                                     double beta) {
  if (!(beta > 1.0)) throw std::invalid_argument("table: beta must exceed 1");
  FrequencyModel m;
  m.kind_ = Kind::Table;
  m.lattice_ = lattice;
  m.beta_ = beta;
  m.values_ = std::move(values);
  return m;
}

std::optional<std::int64_t> FrequencyModel::exact_frequency(const LatticePoint& a) const {
  if (kind_ != Kind::TorusLaplacian || !integer_gram_ || !lattice_.integral()) return std::nullopt;
  const int d = lattice_.dim();
  std::int64_t s = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      s += static_cast<std::int64_t>(gram_[i * d + j]) * a.n[i] * a.n[j];
    }
  }
  return s;
}

double FrequencyModel::frequency(const LatticePoint& a) const {
  switch (kind_) {
    case Kind::TorusLaplacian: {
      if (auto e = exact_frequency(a)) return static_cast<double>(*e);
      const Vec3 x = lattice_.coord(a);
      const int d = lattice_.dim();
      double s = 0.0;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) s += gram_[i * d + j] * x[i] * x[j];
      }
      return s;
    }
    case Kind::SpectralMultiplier: {
      double w = base_->frequency(a);
      if (auto it = values_.find(a); it != values_.end()) w += it->second;
      if (w < 0.0) {
        throw std::domain_error("spectral_multiplier: negative frequency at " +
                                to_string(a, lattice_.dim()));
      }
      return w;
    }
    case Kind::GroundState: {
      const double lam = base_->frequency(a);
      const double q = lam * lam + 2.0 * f_p0_ * lam;
      if (q < 0.0) {
        throw std::domain_error("ground_state: lambda^2 + 2 f(p0) lambda < 0 at " +
                                to_string(a, lattice_.dim()));
      }
      return std::sqrt(q);
    }
    case Kind::Beam: {
      const double lam = base_->frequency(a);
      return std::sqrt(lam * lam + mass_);
    }
    case Kind::Table: {
      auto it = values_.find(a);
      if (it == values_.end()) {
        throw std::out_of_range("table: no frequency for " + to_string(a, lattice_.dim()));
      }
      if (it->second < 0.0) throw std::domain_error("table: negative frequency");
      return it->second;
    }
  }
  throw std::logic_error("frequency: unknown model kind");
}

double FrequencyModel::floor_norm(const LatticePoint& a) const {
  return std::pow(frequency(a), 1.0 / beta_);
}

double floor_norm(const FrequencyModel& model, const LatticePoint& a) {
  return model.floor_norm(a);
}

SpectrumTable SpectrumTable::build(const FrequencyModel& model, double k_enum, std::size_t cap) {
  SpectrumTable t;
  t.lattice_ = model.lattice();
  t.k_enum_ = k_enum;
  t.beta_ = model.beta();
  const auto points = enumerate_lattice(model.lattice(), k_enum, cap);
  t.entries_.reserve(points.size());
  bool exact = true;
  for (const auto& p : points) {
    SpectrumEntry e;
    e.point = p;
    e.exact = model.exact_frequency(p);
    e.omega = model.frequency(p);
    e.abs = model.lattice().norm(p);
    exact = exact && e.exact.has_value();
    t.entries_.push_back(e);
  }
  t.exact_ = exact && !points.empty();
  t.finalize();
  return t;
}

SpectrumTable SpectrumTable::from_values(const std::vector<double>& omegas, double beta, int dim) {
  SpectrumTable t;
  t.lattice_ = Lattice(dim);
  t.beta_ = beta;
  std::int32_t next = 0;
  for (double w : omegas) {
    if (w < 0.0) throw std::domain_error("from_values: negative frequency");
    SpectrumEntry e;
    e.point.n[0] = next++;
    e.omega = w;
    e.abs = std::abs(static_cast<double>(e.point.n[0]));
    t.entries_.push_back(e);
    t.k_enum_ = std::max(t.k_enum_, e.abs);
  }
  t.finalize();
  return t;
}

void SpectrumTable::finalize() {
  for (auto& e : entries_) {
    // Exact for the integer torus with G = I: omega^{1/2} == |a| after rounding of sqrt.
    e.floor = std::pow(e.omega, 1.0 / beta_);
    if (beta_ == 2.0) e.floor = std::sqrt(e.omega);
  }
  std::stable_sort(entries_.begin(), entries_.end(), [](const SpectrumEntry& a, const SpectrumEntry& b) {
    if (a.omega != b.omega) return a.omega < b.omega;
    return a.point < b.point;
  });
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].point, i);
}

std::optional<std::size_t> SpectrumTable::find(const LatticePoint& p) const {
  auto it = index_.find(p);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t SpectrumTable::index_of(const LatticePoint& p) const {
  auto i = find(p);
  if (!i) throw std::out_of_range("SpectrumTable: point " + to_string(p, dim()) + " not enumerated");
  return *i;
}

std::vector<double> SpectrumTable::omegas() const {
  std::vector<double> w;
  w.reserve(entries_.size());
  for (const auto& e : entries_) w.push_back(e.omega);
  return w;
}

void SpectrumTable::write_csv(std::ostream& os) const {
  const int d = dim();
  for (int i = 0; i < d; ++i) os << "ax" << (i + 1) << ',';
  os << "omega\n";
  os.precision(17);
  for (const auto& e : entries_) {
    const Vec3 x = lattice_.coord(e.point);
    for (int i = 0; i < d; ++i) os << x[i] << ',';
    os << e.omega << '\n';
  }
}

namespace {

// Least-squares C1 over entries with |a| <= radius, and the max residual there.
std::pair<double, double> fit_within(const SpectrumTable& table, double radius) {
  const double beta = table.beta();
  double sxy = 0.0, sxx = 0.0;
  for (const auto& e : table.entries()) {
    if (e.abs > radius) continue;
    const double x = std::pow(e.abs, beta);
    sxy += x * e.omega;
    sxx += x * x;
  }
  const double c1 = sxx > 0.0 ? sxy / sxx : 0.0;
  double c2 = 0.0;
  for (const auto& e : table.entries()) {
    if (e.abs > radius) continue;
    c2 = std::max(c2, std::abs(e.omega - c1 * std::pow(e.abs, beta)));
  }
  return {c1, c2};
}

}  // namespace

AsymptoticFit fit_asymptotics(const SpectrumTable& table, double growth_tolerance) {
  AsymptoticFit fit;
  if (table.empty()) throw std::invalid_argument("fit_asymptotics: empty table");
  double amax = 0.0;
  for (const auto& e : table.entries()) amax = std::max(amax, e.abs);
  std::tie(fit.c1, fit.c2) = fit_within(table, amax);
  // Bounded residuals do not grow when the truncation radius doubles.
  fit.inner_max = fit_within(table, 0.5 * amax).second;
  fit.outer_max = fit.c2;
  // Residuals of size ~1e-12 count as exact.
  const double floor = 1e-9 * std::max(1.0, std::abs(fit.c1));
  fit.pass = std::isfinite(fit.c2) &&
             fit.outer_max <= growth_tolerance * std::max(fit.inner_max, floor) + floor;
  return fit;
}

std::pair<double, double> floor_comparability(const SpectrumTable& table) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& e : table.entries()) {
    if (e.abs == 0.0) continue;
    const double q = e.floor / e.abs;
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (hi == 0.0) lo = 0.0;
  return {lo, hi};
}

double BandPartition::gap_floor(std::size_t n) const {
  if (n == 0) return 0.0;
  return 2.0 * std::pow(static_cast<double>(n), -static_cast<double>(dim) / beta);
}

std::optional<std::size_t> BandPartition::find(double omega) const {
  auto it = std::upper_bound(intervals.begin(), intervals.end(), omega,
                             [](double w, const Interval& iv) { return w < iv.lo; });
  if (it == intervals.begin()) return std::nullopt;
  --it;
  if (omega > it->hi) return std::nullopt;
  return static_cast<std::size_t>(it - intervals.begin());
}

std::size_t BandPartition::band_of(double omega) const {
  auto n = find(omega);
  if (!n) throw std::out_of_range("band_of: frequency lies in no band");
  return *n;
}

BandPartition band_partition(const std::vector<double>& sorted_omegas, int dim, double beta) {
  BandPartition bp;
  bp.dim = dim;
  bp.beta = beta;
  if (!std::is_sorted(sorted_omegas.begin(), sorted_omegas.end())) {
    throw std::invalid_argument("band_partition: frequencies must be sorted");
  }
  std::vector<double> values;
  for (double w : sorted_omegas) {
    if (values.empty() || w != values.back()) values.push_back(w);
  }
  if (values.empty()) return bp;
  bp.intervals.push_back({values[0], values[0]});
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double w = values[i];
    const std::size_t n = bp.intervals.size() - 1;
    Interval& cur = bp.intervals.back();
    if (n == 0) {
      bp.intervals.push_back({w, w});
      continue;
    }
    const double gap = w - cur.hi;
    const double sep = bp.gap_floor(n);
    if (gap >= sep) {
      bp.intervals.push_back({w, w});
    } else if (w - cur.lo > 2.0) {
      std::ostringstream os;
      os << "gap after band " << n << " is " << gap << " < required " << sep;
      bp.violations.push_back(os.str());
      bp.intervals.push_back({w, w});
    } else {
      cur.hi = w;
    }
  }
  for (std::size_t n = 1; n + 1 < bp.intervals.size(); ++n) {
    const double next = bp.intervals[n + 1].lo;
    if (!(next < 3.0 * static_cast<double>(n))) {
      std::ostringstream os;
      os << "a_" << (n + 1) << " = " << next << " >= 3n";
      bp.diagnostics.push_back(os.str());
    }
  }
  return bp;
}

BandPartition band_partition(const SpectrumTable& table) {
  return band_partition(table.omegas(), table.dim(), table.beta());
}

std::vector<std::size_t> band_ids(const SpectrumTable& table, const BandPartition& bands) {
  std::vector<std::size_t> ids;
  ids.reserve(table.size());
  for (const auto& e : table.entries()) ids.push_back(bands.band_of(e.omega));
  return ids;
}

}  // namespace lnf
