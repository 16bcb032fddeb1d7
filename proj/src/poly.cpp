#include "lnf/poly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace lnf {

namespace {

constexpr cplx kI{0.0, 1.0};

const std::array<double, kMaxDegree + 1>& factorials() {
  static const auto table = [] {
    std::array<double, kMaxDegree + 1> f{};
    f[0] = 1.0;
    for (int i = 1; i <= kMaxDegree; ++i) f[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i - 1)] * i;
    return f;
  }();
  return table;
}

// Runs of equal ids in a sorted key: (id, count).
template <class Fn>
void for_each_distinct(const Key& k, Fn&& fn) {
  int j = 0;
  while (j < k.r) {
    int e = j + 1;
    while (e < k.r && k[e] == k[j]) ++e;
    fn(k[j], e - j);
    j = e;
  }
}

Key remove_one(const Key& k, ExtId a) {
  Key out;
  bool removed = false;
  for (int j = 0; j < k.r; ++j) {
    if (!removed && k[j] == a) {
      removed = true;
      continue;
    }
    out.id[out.r++] = k[j];
  }
  return out;
}

Key merge(const Key& a, const Key& b) {
  if (a.r + b.r > kMaxDegree) throw std::length_error("Key: degree above limit");
  Key out;
  std::merge(a.id.begin(), a.id.begin() + a.r, b.id.begin(), b.id.begin() + b.r, out.id.begin());
  out.r = static_cast<std::uint8_t>(a.r + b.r);
  return out;
}

void check_state(const Key& k, const StateVector& u) {
  if (k.r > 0 && k[k.r - 1] >= u.size()) {
    throw std::out_of_range("state does not cover the polynomial support");
  }
}

}  // namespace

Key::Key(std::span<const ExtId> ids) {
  if (ids.size() > static_cast<std::size_t>(kMaxDegree)) {
    throw std::length_error("Key: degree above limit");
  }
  std::copy(ids.begin(), ids.end(), id.begin());
  r = static_cast<std::uint8_t>(ids.size());
  std::sort(id.begin(), id.begin() + r);
}

bool Key::operator==(const Key& o) const {
  return r == o.r && std::equal(id.begin(), id.begin() + r, o.id.begin());
}

Key Key::conj() const {
  Key out;
  out.r = r;
  for (int j = 0; j < r; ++j) out.id[static_cast<std::size_t>(j)] = ext_conj(id[static_cast<std::size_t>(j)]);
  std::sort(out.id.begin(), out.id.begin() + r);
  return out;
}

std::size_t KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ k.r;
  for (int j = 0; j < k.r; ++j) {
    h ^= k[j] + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ull;
  }
  return static_cast<std::size_t>(h ^ (h >> 31));
}

double multiplicity(const Key& k) {
  const auto& f = factorials();
  double m = f[k.r];
  for_each_distinct(k, [&](ExtId, int c) { m /= f[static_cast<std::size_t>(c)]; });
  return m;
}

void Poly::add(const Key& k, cplx c) {
  if (c == cplx{}) return;
  auto [it, inserted] = terms_.try_emplace(k, c);
  if (!inserted) {
    it->second += c;
    if (it->second == cplx{}) terms_.erase(it);
  }
}

cplx Poly::coeff(const Key& k) const {
  auto it = terms_.find(k);
  return it == terms_.end() ? cplx{} : it->second;
}

int Poly::min_degree() const {
  int d = std::numeric_limits<int>::max();
  for (const auto& [k, c] : terms_) d = std::min(d, k.degree());
  return terms_.empty() ? 0 : d;
}

int Poly::max_degree() const {
  int d = 0;
  for (const auto& [k, c] : terms_) d = std::max(d, k.degree());
  return d;
}

Poly Poly::degree_part(int r) const { return degree_range(r, r); }

Poly Poly::degree_range(int lo, int hi) const {
  Poly out;
  for (const auto& [k, c] : terms_) {
    if (k.degree() >= lo && k.degree() <= hi) out.terms_.emplace(k, c);
  }
  return out;
}

void Poly::prune(double tol) {
  std::erase_if(terms_, [tol](const auto& kv) { return std::abs(kv.second) <= tol; });
}

double Poly::max_abs() const {
  double m = 0.0;
  for (const auto& [k, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

Poly& Poly::operator+=(const Poly& o) {
  for (const auto& [k, c] : o.terms_) add(k, c);
  return *this;
}

Poly& Poly::operator-=(const Poly& o) {
  for (const auto& [k, c] : o.terms_) add(k, -c);
  return *this;
}

Poly& Poly::operator*=(cplx s) {
  if (s == cplx{}) {
    terms_.clear();
    return *this;
  }
  for (auto& [k, c] : terms_) c *= s;
  return *this;
}

StateVector zero_state(const SpectrumTable& table) { return StateVector(2 * table.size()); }

bool is_real_state(const StateVector& u, double tol) {
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
    if (std::abs(u[i + 1] - std::conj(u[i])) > tol) return false;
  }
  return true;
}

void make_real(StateVector& u) {
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) u[i + 1] = std::conj(u[i]);
}

bool is_real(const Poly& p, double tol) {
  for (const auto& [k, c] : p.terms()) {
    if (std::abs(p.coeff(k.conj()) - std::conj(c)) > tol * std::max(1.0, std::abs(c))) return false;
  }
  return true;
}

MuS mu_S(std::span<const ExtId> a, const SpectrumTable& table, ZeroModePolicy policy) {
  if (a.empty()) throw std::invalid_argument("mu_S: empty multi-index");
  std::array<std::size_t, kMaxDegree> e{};
  const std::size_t r = a.size();
  if (r > e.size()) throw std::length_error("mu_S: degree above limit");
  for (std::size_t j = 0; j < r; ++j) e[j] = ext_entry(a[j]);
  std::sort(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(r), [&](std::size_t x, std::size_t y) {
    const double fx = table[x].floor;
    const double fy = table[y].floor;
    if (fx != fy) return fx > fy;
    return table[x].point < table[y].point;
  });
  MuS out;
  out.mu = table[e[std::min<std::size_t>(3, r) - 1]].floor;
  if (policy == ZeroModePolicy::ShiftByOne) {
    out.mu += 1.0;
  } else if (out.mu <= 0.0) {
    throw std::domain_error("mu_S: mu vanishes on the zero mode");
  }
  const double dist = r >= 2 ? table.lattice().distance(table[e[0]].point, table[e[1]].point) : 0.0;
  out.s = out.mu + dist;
  return out;
}

double localized_norm(const Poly& f, double nu, double n, const SpectrumTable& table,
                      ZeroModePolicy policy, double radius) {
  double best = 0.0;
  for (const auto& [k, c] : f.terms()) {
    const double a = std::abs(c);
    if (a == 0.0) continue;
    const MuS m = mu_S(k.ids(), table, policy);
    const double w = a * std::pow(m.s, n) / std::pow(m.mu, n + nu) * std::pow(radius, k.degree());
    best = std::max(best, w);
  }
  return best;
}

cplx evaluate(const Poly& f, const StateVector& u) {
  cplx sum{};
  for (const auto& [k, c] : f.terms()) {
    check_state(k, u);
    cplx p = c * multiplicity(k);
    for (int j = 0; j < k.r; ++j) p *= u[k[j]];
    sum += p;
  }
  return sum;
}

StateVector gradient(const Poly& f, const StateVector& u) {
  StateVector g(u.size());
  std::array<cplx, kMaxDegree + 1> pre{};
  std::array<cplx, kMaxDegree + 1> suf{};
  for (const auto& [k, c] : f.terms()) {
    check_state(k, u);
    const cplx m = c * multiplicity(k);
    const int r = k.r;
    pre[0] = 1.0;
    for (int j = 0; j < r; ++j) pre[static_cast<std::size_t>(j + 1)] = pre[static_cast<std::size_t>(j)] * u[k[j]];
    suf[static_cast<std::size_t>(r)] = 1.0;
    for (int j = r - 1; j >= 0; --j) suf[static_cast<std::size_t>(j)] = suf[static_cast<std::size_t>(j + 1)] * u[k[j]];
    for (int j = 0; j < r; ++j) g[k[j]] += m * pre[static_cast<std::size_t>(j)] * suf[static_cast<std::size_t>(j + 1)];
  }
  return g;
}

namespace {

void field_from_gradient(const StateVector& g, StateVector& out) {
  out.resize(g.size());
  for (std::size_t i = 0; i + 1 < g.size(); i += 2) {
    out[i] = -kI * g[i + 1];
    out[i + 1] = kI * g[i];
  }
}

}  // namespace

StateVector vector_field(const Poly& f, const StateVector& u) {
  StateVector x;
  field_from_gradient(gradient(f, u), x);
  return x;
}

FlatPoly::FlatPoly(const Poly& p) {
  std::vector<std::pair<Key, cplx>> terms(p.terms().begin(), p.terms().end());
  std::sort(terms.begin(), terms.end(), [](const auto& x, const auto& y) {
    return std::lexicographical_compare(x.first.id.begin(), x.first.id.begin() + x.first.r,
                                        y.first.id.begin(), y.first.id.begin() + y.first.r);
  });
  offset_.push_back(0);
  for (const auto& [k, c] : terms) {
    ids_.insert(ids_.end(), k.id.begin(), k.id.begin() + k.r);
    offset_.push_back(static_cast<std::uint32_t>(ids_.size()));
    coef_.push_back(c * multiplicity(k));
  }
}

cplx FlatPoly::evaluate(const StateVector& u) const {
  cplx sum{};
  for (std::size_t t = 0; t < coef_.size(); ++t) {
    cplx p = coef_[t];
    for (std::uint32_t j = offset_[t]; j < offset_[t + 1]; ++j) p *= u[ids_[j]];
    sum += p;
  }
  return sum;
}

void FlatPoly::gradient(const StateVector& u, StateVector& out) const {
  out.assign(u.size(), cplx{});
  std::array<cplx, kMaxDegree + 1> pre{};
  for (std::size_t t = 0; t < coef_.size(); ++t) {
    const std::uint32_t b = offset_[t];
    const int r = static_cast<int>(offset_[t + 1] - b);
    pre[0] = coef_[t];
    for (int j = 0; j < r; ++j) pre[static_cast<std::size_t>(j + 1)] = pre[static_cast<std::size_t>(j)] * u[ids_[b + static_cast<std::uint32_t>(j)]];
    cplx suf = 1.0;
    for (int j = r - 1; j >= 0; --j) {
      const ExtId id = ids_[b + static_cast<std::uint32_t>(j)];
      out[id] += pre[static_cast<std::size_t>(j)] * suf;
      suf *= u[id];
    }
  }
}

void FlatPoly::vector_field(const StateVector& u, StateVector& out) const {
  StateVector g;
  gradient(u, g);
  field_from_gradient(g, out);
}

Poly h0_poly(const SpectrumTable& table) {
  Poly h;
  for (std::size_t e = 0; e < table.size(); ++e) {
    h.add_monomial(Key{make_ext(e, 1), make_ext(e, -1)}, table[e].omega);
  }
  return h;
}

Poly quadratic_mass(const SpectrumTable& table, const std::vector<std::size_t>& entries) {
  Poly j;
  for (std::size_t e : entries) {
    if (e >= table.size()) throw std::out_of_range("quadratic_mass: entry outside table");
    j.add_monomial(Key{make_ext(e, 1), make_ext(e, -1)}, 1.0);
  }
  return j;
}

Poly poisson_bracket(const Poly& f, const Poly& g, int max_degree, double drop_tol) {
  struct Term {
    Key key;
    cplx mono;
  };
  std::vector<Term> gt;
  gt.reserve(g.size());
  std::unordered_map<ExtId, std::vector<std::pair<std::uint32_t, int>>> gidx;
  for (const auto& [k, c] : g.terms()) {
    const auto t = static_cast<std::uint32_t>(gt.size());
    gt.push_back({k, c * multiplicity(k)});
    for_each_distinct(k, [&](ExtId id, int cnt) { gidx[id].emplace_back(t, cnt); });
  }
  std::unordered_map<Key, cplx, KeyHash> acc;
  for (const auto& [k, c] : f.terms()) {
    const cplx mf = c * multiplicity(k);
    for_each_distinct(k, [&](ExtId a, int ka) {
      auto it = gidx.find(ext_conj(a));
      if (it == gidx.end()) return;
      const Key kr = remove_one(k, a);
      // X_G(a,+) = -i dG/du_(a,-), X_G(a,-) = +i dG/du_(a,+).
      const cplx factor = ext_sign(a) > 0 ? -kI : kI;
      for (const auto& [t, l] : it->second) {
        const Key& lk = gt[t].key;
        const int deg = k.r + lk.r - 2;
        if (deg < 1 || deg > max_degree) continue;
        const Key key = merge(kr, remove_one(lk, ext_conj(a)));
        acc[key] += factor * mf * static_cast<double>(ka) * gt[t].mono * static_cast<double>(l);
      }
    });
  }
  Poly out;
  for (const auto& [k, m] : acc) {
    const cplx c = m / multiplicity(k);
    if (std::abs(c) > drop_tol) out.add(k, c);
  }
  return out;
}

Poly h0_bracket(const Poly& g, const SpectrumTable& table) {
  Poly out;
  for (const auto& [k, c] : g.terms()) {
    double omega = 0.0;
    if (table.exact()) {
      std::int64_t s = 0;
      for (int j = 0; j < k.r; ++j) s += ext_sign(k[j]) * *table[ext_entry(k[j])].exact;
      omega = static_cast<double>(s);
    } else {
      for (int j = 0; j < k.r; ++j) omega += ext_sign(k[j]) * table[ext_entry(k[j])].omega;
    }
    if (omega != 0.0) out.add(k, kI * omega * c);
  }
  return out;
}

SplitState split(const StateVector& u, double k, const SpectrumTable& table) {
  if (u.size() != 2 * table.size()) throw std::invalid_argument("split: state/table size mismatch");
  SplitState s{StateVector(u.size()), StateVector(u.size())};
  for (std::size_t i = 0; i < u.size(); ++i) {
    (table[ext_entry(static_cast<ExtId>(i))].floor <= k ? s.low : s.high)[i] = u[i];
  }
  return s;
}

int order_in_high(const Key& key, double k, const SpectrumTable& table) {
  int n = 0;
  for (int j = 0; j < key.r; ++j) n += table[ext_entry(key[j])].floor > k ? 1 : 0;
  return n;
}

int order_in_high(const Poly& f, double k, const SpectrumTable& table) {
  int order = -2;
  for (const auto& [key, c] : f.terms()) {
    const int o = order_in_high(key, k, table);
    if (order == -2) order = o;
    else if (order != o) return -1;
  }
  return order == -2 ? 0 : order;
}

std::array<Poly, 4> decompose_by_high_order(const Poly& f, double k, const SpectrumTable& table) {
  std::array<Poly, 4> parts;
  for (const auto& [key, c] : f.terms()) {
    parts[static_cast<std::size_t>(std::min(3, order_in_high(key, k, table)))].add(key, c);
  }
  return parts;
}

double sobolev_norm(const StateVector& u, double s, const SpectrumTable& table,
                    SobolevWeight weight) {
  if (u.size() > 2 * table.size()) throw std::invalid_argument("sobolev_norm: state too large");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto& e = table[ext_entry(static_cast<ExtId>(i))];
    const double w = 1.0 + (weight == SobolevWeight::Abs ? e.abs : e.floor);
    sum += std::pow(w, 2.0 * s) * std::norm(u[i]);
  }
  return std::sqrt(sum);
}

Poly multiply_by_mass(const Poly& p, const SpectrumTable& table) {
  std::unordered_map<Key, cplx, KeyHash> acc;
  for (const auto& [k, c] : p.terms()) {
    const cplx m = c * multiplicity(k);
    for (std::size_t e = 0; e < table.size(); ++e) {
      acc[merge(k, Key{make_ext(e, 1), make_ext(e, -1)})] += m;
    }
  }
  Poly q;
  for (const auto& [k, m] : acc) q.add(k, m / multiplicity(k));
  return q;
}

double vector_field_seminorm(const Poly& f, double nu, double n, const SpectrumTable& table,
                             ZeroModePolicy policy) {
  double best = 0.0;
  std::vector<ExtId> idx;
  for (const auto& [k, c] : f.terms()) {
    const double p = k.r;
    for_each_distinct(k, [&](ExtId a, int) {
      // Component (conj a) of X_F with coefficient p c_K on the multi-index K \ {a}.
      const Key rest = remove_one(k, a);
      idx.assign(rest.id.begin(), rest.id.begin() + rest.r);
      idx.push_back(ext_conj(a));
      const MuS m = mu_S(idx, table, policy);
      best = std::max(best, p * std::abs(c) * std::pow(m.s, n) / std::pow(m.mu, n + nu));
    });
  }
  return best;
}

StateVector multilinear_field(const Poly& f, const std::vector<StateVector>& us) {
  if (f.empty()) return us.empty() ? StateVector{} : StateVector(us.front().size());
  if (!f.homogeneous()) throw std::invalid_argument("multilinear_field: form must be homogeneous");
  const int p = f.max_degree();
  if (static_cast<int>(us.size()) != p - 1) {
    throw std::invalid_argument("multilinear_field: need degree-1 input states");
  }
  StateVector out(us.front().size());
  std::array<ExtId, kMaxDegree> perm{};
  for (const auto& [k, c] : f.terms()) {
    check_state(k, out);
    for_each_distinct(k, [&](ExtId a, int) {
      const Key rest = remove_one(k, a);
      const int r = rest.r;
      std::copy(rest.id.begin(), rest.id.begin() + r, perm.begin());
      cplx sum{};
      do {
        cplx prod = 1.0;
        for (int j = 0; j < r; ++j) prod *= us[static_cast<std::size_t>(j)][perm[static_cast<std::size_t>(j)]];
        sum += prod;
      } while (std::next_permutation(perm.begin(), perm.begin() + r));
      const ExtId comp = ext_conj(a);
      const cplx factor = ext_sign(comp) > 0 ? -kI : kI;
      out[comp] += factor * static_cast<double>(p) * c * sum;
    });
  }
  return out;
}

Poly random_form(const SpectrumTable& table, int degree, int terms, std::mt19937_64& rng,
                 bool real) {
  if (table.empty() || degree < 1 || degree > kMaxDegree) {
    throw std::invalid_argument("random_form: bad degree or empty table");
  }
  std::uniform_int_distribution<ExtId> pick(0, static_cast<ExtId>(2 * table.size() - 1));
  std::normal_distribution<double> g;
  Poly p;
  for (int i = 0; i < terms; ++i) {
    std::vector<ExtId> ids;
    for (int j = 0; j < degree; ++j) ids.push_back(pick(rng));
    const Key k(ids);
    const cplx c{g(rng), g(rng)};
    p.add(k, c);
    if (real) p.add(k.conj(), std::conj(c));
  }
  return p;
}

StateVector random_state(const SpectrumTable& table, std::mt19937_64& rng, double decay,
                         bool real) {
  std::uniform_real_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  StateVector u(2 * table.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double w = std::pow(1.0 + table[ext_entry(static_cast<ExtId>(i))].abs, -decay);
    u[i] = std::polar(amp(rng) * w, phase(rng));
  }
  if (real) make_real(u);
  return u;
}

double verify_tame(const Poly& f, const TameParams& prm, int trials, const SpectrumTable& table,
                   std::mt19937_64& rng, ZeroModePolicy policy) {
  const double d = table.dim();
  const double lo = 1.5 * d + prm.nu;
  if (!(prm.nu >= 0.0)) throw std::invalid_argument("verify_tame: nu must be nonnegative");
  if (!(prm.s > lo)) throw std::invalid_argument("verify_tame: need s > 3d/2 + nu");
  if (!(prm.n > d + prm.s)) throw std::invalid_argument("verify_tame: need N > d + s");
  if (!(prm.s0 > lo && prm.s0 < prm.s)) {
    throw std::invalid_argument("verify_tame: need s0 in (3d/2 + nu, s)");
  }
  if (f.empty()) return 0.0;
  if (!f.homogeneous() || f.max_degree() < 2) {
    throw std::invalid_argument("verify_tame: need a homogeneous form of degree >= 2");
  }
  const int r = f.max_degree() - 1;
  const double xnorm = vector_field_seminorm(f, prm.nu, prm.n, table, policy);
  if (xnorm == 0.0) return 0.0;
  std::uniform_real_distribution<double> decay(0.0, prm.s + 2.0);
  std::uniform_int_distribution<std::size_t> pick(0, 2 * table.size() - 1);
  double worst = 0.0;
  std::vector<StateVector> us(static_cast<std::size_t>(r));
  for (int t = 0; t < trials; ++t) {
    for (auto& u : us) {
      if (t % 3 == 0) {
        u.assign(2 * table.size(), cplx{});
        u[pick(rng)] = 1.0;
      } else {
        u = random_state(table, rng, decay(rng));
      }
    }
    const double lhs = sobolev_norm(multilinear_field(f, us), prm.s, table);
    double rhs = 0.0;
    for (int j = 0; j < r; ++j) {
      double term = sobolev_norm(us[static_cast<std::size_t>(j)], prm.s, table);
      for (int q = 0; q < r; ++q) {
        if (q != j) term *= sobolev_norm(us[static_cast<std::size_t>(q)], prm.s0, table);
      }
      rhs += term;
    }
    rhs *= xnorm;
    if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
  }
  return worst;
}

BilinearReport verify_bilinear_eigen(const std::map<LatticePoint, cplx>& ghat, int k, double nu,
                                     double n, const SpectrumTable& table,
                                     const std::vector<std::vector<std::size_t>>& tuples) {
  if (!table.lattice().integral()) {
    throw std::invalid_argument("verify_bilinear_eigen: exponential eigenbasis needs kappa = 0");
  }
  const int d = table.dim();
  const double volume = std::pow(2.0 * M_PI, d);
  BilinearReport rep;
  std::vector<ExtId> ids;
  for (const auto& tup : tuples) {
    if (static_cast<int>(tup.size()) != k) throw std::invalid_argument("verify_bilinear_eigen: tuple size");
    LatticePoint sum{};
    ids.clear();
    for (std::size_t e : tup) {
      for (int c = 0; c < d; ++c) sum.n[static_cast<std::size_t>(c)] -= table[e].point.n[static_cast<std::size_t>(c)];
      ids.push_back(make_ext(e, 1));
    }
    auto it = ghat.find(sum);
    const double integral = it == ghat.end() ? 0.0 : volume * std::abs(it->second);
    const MuS m = mu_S(ids, table, ZeroModePolicy::ShiftByOne);
    rep.worst_ratio = std::max(rep.worst_ratio, integral * std::pow(m.s, n) / std::pow(m.mu, n + nu));
    ++rep.checked;
  }
  return rep;
}

CutoffInequality check_cutoff_inequality(const Poly& f, double nu, double n, double n_prime,
                                         double k, double delta, const SpectrumTable& table,
                                         ZeroModePolicy policy) {
  if (!(n_prime >= n)) throw std::invalid_argument("check_cutoff_inequality: need N' >= N");
  CutoffInequality out;
  const double kd = std::pow(k, delta);
  const double scale = std::pow(kd, n_prime - n);
  for (const auto& [key, c] : f.terms()) {
    const MuS m = mu_S(key.ids(), table, policy);
    const double a = std::abs(c);
    const double t = a * std::pow(m.s, n) / std::pow(m.mu, n + nu);
    const double tp = a * std::pow(m.s, n_prime) / std::pow(m.mu, n_prime + nu) / scale;
    out.lhs = std::max(out.lhs, t);
    out.rhs = std::max(out.rhs, tp);
    if (tp > 0.0 && t / tp > out.worst_ratio) {
      out.worst_ratio = t / tp;
      out.worst = key;
    }
  }
  out.holds = out.lhs <= out.rhs;
  return out;
}

void write_poly_jsonl(const Poly& p, const SpectrumTable& table, std::ostream& os) {
  std::vector<std::pair<Key, cplx>> terms(p.terms().begin(), p.terms().end());
  std::sort(terms.begin(), terms.end(), [](const auto& x, const auto& y) {
    if (x.first.r != y.first.r) return x.first.r < y.first.r;
    return std::lexicographical_compare(x.first.id.begin(), x.first.id.begin() + x.first.r,
                                        y.first.id.begin(), y.first.id.begin() + y.first.r);
  });
  const int d = table.dim();
  for (const auto& [k, c] : terms) {
    nlohmann::ordered_json rec;
    auto idx = nlohmann::ordered_json::array();
    for (int j = 0; j < k.r; ++j) {
      const Vec3 x = table.lattice().coord(table[ext_entry(k[j])].point);
      auto pt = nlohmann::ordered_json::array();
      for (int q = 0; q < d; ++q) pt.push_back(x[static_cast<std::size_t>(q)]);
      idx.push_back(nlohmann::ordered_json::array({pt, ext_sign(k[j])}));
    }
    rec["indexes"] = idx;
    rec["re"] = c.real();
    rec["im"] = c.imag();
    os << rec.dump() << '\n';
  }
}

namespace {

LatticePoint point_from_coords(const SpectrumTable& table, const std::vector<double>& x) {
  const int d = table.dim();
  if (static_cast<int>(x.size()) != d) throw std::invalid_argument("point has wrong dimension");
  LatticePoint p{};
  for (int q = 0; q < d; ++q) {
    const double v = x[static_cast<std::size_t>(q)] - table.lattice().kappa()[static_cast<std::size_t>(q)];
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9) throw std::invalid_argument("coordinate is not a lattice point");
    p.n[static_cast<std::size_t>(q)] = static_cast<std::int32_t>(r);
  }
  return p;
}

}  // namespace

Poly read_poly_jsonl(std::istream& is, const SpectrumTable& table) {
  Poly p;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      std::vector<ExtId> ids;
      for (const auto& item : rec.at("indexes")) {
        const auto x = item.at(0).get<std::vector<double>>();
        const int sign = item.at(1).get<int>();
        if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
        ids.push_back(make_ext(table.index_of(point_from_coords(table, x)), sign));
      }
      p.add(Key(ids), {rec.at("re").get<double>(), rec.at("im").get<double>()});
    } catch (const std::exception& e) {
      throw std::runtime_error("poly line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return p;
}

void write_state_csv(const StateVector& u, const SpectrumTable& table, std::ostream& os) {
  const int d = table.dim();
  for (int q = 0; q < d; ++q) os << "ax" << (q + 1) << ',';
  os << "sign,re,im\n";
  os.precision(17);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto id = static_cast<ExtId>(i);
    const Vec3 x = table.lattice().coord(table[ext_entry(id)].point);
    for (int q = 0; q < d; ++q) os << x[static_cast<std::size_t>(q)] << ',';
    os << ext_sign(id) << ',' << u[i].real() << ',' << u[i].imag() << '\n';
  }
}

StateVector read_state_csv(std::istream& is, const SpectrumTable& table) {
  const int d = table.dim();
  StateVector u = zero_state(table);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("state csv: missing header");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    try {
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
      if (static_cast<int>(vals.size()) != d + 3) throw std::invalid_argument("wrong column count");
      const std::vector<double> x(vals.begin(), vals.begin() + d);
      const int sign = static_cast<int>(vals[static_cast<std::size_t>(d)]);
      if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
      u[make_ext(table.index_of(point_from_coords(table, x)), sign)] =
          cplx{vals[static_cast<std::size_t>(d + 1)], vals[static_cast<std::size_t>(d + 2)]};
    } catch (const std::exception& e) {
      throw std::runtime_error("state csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return u;
}

}  // namespace lnf
