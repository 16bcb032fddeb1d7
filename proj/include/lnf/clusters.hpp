#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <vector>

#include "lnf/lattice.hpp"

namespace lnf {

// Disjoint sets with path halving and union by rank.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned char> rank_;
};

struct ClusterPartition {
  double delta = 0.5;
  double c_delta = 1.0;
  // Block id per table entry, or -1 for entries removed by a restriction.
  std::vector<int> block_of;
  // Table entry ids per block, ascending; blocks numbered by their smallest entry.
  std::vector<std::vector<std::size_t>> blocks;
  // Blocks reaching within C_delta * 2 K_enum^delta of the truncation boundary.
  std::vector<bool> provisional;

  std::size_t n_blocks() const { return blocks.size(); }
};

// Edge predicate |a-b| + |w_a - w_b| < C_delta (|a|^delta + |b|^delta).
bool clusters_connected(const SpectrumTable& table, std::size_t i, std::size_t j, double delta,
                        double c_delta);

ClusterPartition build_clusters(const SpectrumTable& table, double delta, double c_delta);

struct DyadicReport {
  double constant = 1.0;
  std::optional<std::size_t> worst_block;
  bool pass = true;
  std::vector<std::size_t> exempt_blocks;  // blocks containing the zero mode
};

DyadicReport certify_dyadic(const ClusterPartition& partition, const SpectrumTable& table,
                            double c_max);

struct MarginReport {
  double margin = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
};

MarginReport separation_margin(const ClusterPartition& partition, const SpectrumTable& table);

// Blocks intersected with {floor(a) >= K}; empty intersections dropped.
ClusterPartition high_mode_blocks(const ClusterPartition& partition, const SpectrumTable& table,
                                  double k);

void write_clusters_csv(const ClusterPartition& partition, const SpectrumTable& table,
                        std::ostream& os);

}  // namespace lnf
