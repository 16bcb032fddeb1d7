#include "lnf/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lnf {

UnionFind::UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t UnionFind::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

bool clusters_connected(const SpectrumTable& table, std::size_t i, std::size_t j, double delta,
                        double c_delta) {
  const auto& a = table[i];
  const auto& b = table[j];
  const double bound = c_delta * (std::pow(a.abs, delta) + std::pow(b.abs, delta));
  const double dist = table.lattice().distance(a.point, b.point);
  if (dist >= bound) return false;
  return dist + std::abs(a.omega - b.omega) < bound;
}

namespace {

ClusterPartition from_roots(const SpectrumTable& table, UnionFind& uf, double delta,
                            double c_delta) {
  ClusterPartition cp;
  cp.delta = delta;
  cp.c_delta = c_delta;
  const std::size_t n = table.size();
  cp.block_of.assign(n, -1);
  std::vector<int> root_block(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (root_block[r] < 0) {
      root_block[r] = static_cast<int>(cp.blocks.size());
      cp.blocks.emplace_back();
    }
    cp.block_of[i] = root_block[r];
    cp.blocks[static_cast<std::size_t>(root_block[r])].push_back(i);
  }
  const double k_enum = table.k_enum();
  const double band = c_delta * 2.0 * std::pow(k_enum, delta);
  cp.provisional.assign(cp.blocks.size(), false);
  for (std::size_t b = 0; b < cp.blocks.size(); ++b) {
    for (std::size_t i : cp.blocks[b]) {
      if (k_enum - table[i].abs < band) {
        cp.provisional[b] = true;
        break;
      }
    }
  }
  return cp;
}

}  // namespace

ClusterPartition build_clusters(const SpectrumTable& table, double delta, double c_delta) {
  if (table.empty()) throw std::invalid_argument("build_clusters: empty table");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("build_clusters: delta in (0,1)");
  if (!(c_delta > 0.0)) throw std::invalid_argument("build_clusters: C_delta must be positive");
  const std::size_t n = table.size();
  std::vector<double> pw(n);
  for (std::size_t i = 0; i < n; ++i) pw[i] = std::pow(table[i].abs, delta);
  // Sort by |a| so the radius prefilter can stop scanning early: |a-b| >= |b| - |a|.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return table[x].abs < table[y].abs; });
  UnionFind uf(n);
  const Lattice& lat = table.lattice();
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = order[p];
    for (std::size_t q = p + 1; q < n; ++q) {
      const std::size_t j = order[q];
      const double bound = c_delta * (pw[i] + pw[j]);
      const double radial = table[j].abs - table[i].abs;
      // Once |b| - |a| reaches the bound it stays above it: the bound is sublinear in |b|.
      if (radial >= bound) break;
      const double dist = lat.distance(table[i].point, table[j].point);
      if (dist >= bound) continue;
      if (dist + std::abs(table[i].omega - table[j].omega) < bound) uf.unite(i, j);
    }
  }
  return from_roots(table, uf, delta, c_delta);
}

DyadicReport certify_dyadic(const ClusterPartition& partition, const SpectrumTable& table,
                            double c_max) {
  DyadicReport rep;
  for (std::size_t b = 0; b < partition.blocks.size(); ++b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t i : partition.blocks[b]) {
      lo = std::min(lo, table[i].abs);
      hi = std::max(hi, table[i].abs);
    }
    if (partition.blocks[b].empty()) continue;
    if (lo == 0.0) {
      rep.exempt_blocks.push_back(b);
      continue;
    }
    const double ratio = hi / lo;
    if (!rep.worst_block || ratio > rep.constant) {
      rep.constant = ratio;
      rep.worst_block = b;
    }
  }
  rep.pass = rep.constant <= c_max;
  return rep;
}

MarginReport separation_margin(const ClusterPartition& partition, const SpectrumTable& table) {
  if (partition.blocks.size() < 2) {
    throw std::invalid_argument("separation_margin: fewer than two blocks");
  }
  MarginReport rep;
  rep.margin = std::numeric_limits<double>::infinity();
  const std::size_t n = table.size();
  const double delta = partition.delta;
  for (std::size_t i = 0; i < n; ++i) {
    if (partition.block_of[i] < 0) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (partition.block_of[j] < 0 || partition.block_of[j] == partition.block_of[i]) continue;
      const double den = std::pow(table[i].abs, delta) + std::pow(table[j].abs, delta);
      const double num = table.lattice().distance(table[i].point, table[j].point) +
                         std::abs(table[i].omega - table[j].omega);
      const double ratio = num / den;
      if (ratio < rep.margin) {
        rep.margin = ratio;
        rep.a = i;
        rep.b = j;
      }
    }
  }
  return rep;
}

ClusterPartition high_mode_blocks(const ClusterPartition& partition, const SpectrumTable& table,
                                  double k) {
  if (!(k >= 0.0)) throw std::invalid_argument("high_mode_blocks: K must be nonnegative");
  ClusterPartition out;
  out.delta = partition.delta;
  out.c_delta = partition.c_delta;
  out.block_of.assign(partition.block_of.size(), -1);
  for (std::size_t b = 0; b < partition.blocks.size(); ++b) {
    std::vector<std::size_t> kept;
    for (std::size_t i : partition.blocks[b]) {
      if (table[i].floor >= k) kept.push_back(i);
    }
    if (kept.empty()) continue;
    const int id = static_cast<int>(out.blocks.size());
    for (std::size_t i : kept) out.block_of[i] = id;
    out.blocks.push_back(std::move(kept));
    out.provisional.push_back(b < partition.provisional.size() && partition.provisional[b]);
  }
  return out;
}

void write_clusters_csv(const ClusterPartition& partition, const SpectrumTable& table,
                        std::ostream& os) {
  const int d = table.dim();
  os << "block_id,";
  for (int i = 0; i < d; ++i) os << "ax" << (i + 1) << ',';
  os << "omega\n";
  os.precision(17);
  for (std::size_t b = 0; b < partition.blocks.size(); ++b) {
    for (std::size_t i : partition.blocks[b]) {
      const Vec3 x = table.lattice().coord(table[i].point);
      os << b << ',';
      for (int c = 0; c < d; ++c) os << x[c] << ',';
      os << table[i].omega << '\n';
    }
  }
}

}  // namespace lnf
