#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lnf/lattice.hpp"

namespace lnf {

// Extended index (a, sigma) encoded against a SpectrumTable: 2 * entry + (sigma < 0).
using ExtId = std::uint32_t;

inline ExtId make_ext(std::size_t entry, int sign) {
  return static_cast<ExtId>(2 * entry + (sign < 0 ? 1u : 0u));
}
inline std::size_t ext_entry(ExtId id) { return id >> 1; }
inline int ext_sign(ExtId id) { return (id & 1u) ? -1 : 1; }
inline ExtId ext_conj(ExtId id) { return id ^ 1u; }

struct ExtendedIndex {
  LatticePoint point;
  int sign = 1;
  bool operator==(const ExtendedIndex&) const = default;
};

inline ExtId to_ext(const SpectrumTable& t, const ExtendedIndex& A) {
  return make_ext(t.index_of(A.point), A.sign);
}
inline ExtendedIndex from_ext(const SpectrumTable& t, ExtId id) {
  return {t[ext_entry(id)].point, ext_sign(id)};
}

std::vector<ExtId> to_ext(const SpectrumTable& t, const std::vector<ExtendedIndex>& A);
std::string format_multi_index(const SpectrumTable& t, const std::vector<ExtId>& A);

}  // namespace lnf
