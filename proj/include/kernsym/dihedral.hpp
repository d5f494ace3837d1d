// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>

#include "kernsym/tensor.hpp"

namespace kernsym {

/// The eight symmetries of the square.
///
/// Every element is written s^f r^q with r a 90 degree clockwise rotation and
/// s the reflection across the vertical axis. Acting on an n x n matrix, the
/// value at position (i, j) moves to:
///
///   e   (i, j)              s   (i, n-1-j)       vertical axis
///   r   (j, n-1-i)          sr  (j, i)           main diagonal (transpose)
///   r2  (n-1-i, n-1-j)      sr2 (n-1-i, j)       horizontal axis
///   r3  (n-1-j, i)          sr3 (n-1-j, n-1-i)   anti-diagonal
///
/// so apply(r, [[1,2],[3,4]]) == [[3,1],[4,2]].
enum class D4 : unsigned char { e, r, r2, r3, s, sr, sr2, sr3 };

inline constexpr std::array<D4, 8> kAllD4 = {D4::e, D4::r,  D4::r2,  D4::r3,
                                              D4::s, D4::sr, D4::sr2, D4::sr3};

/// The identity carries no information about symmetry and is left out.
inline constexpr std::array<D4, 7> kNonIdentityD4 = {D4::r,  D4::r2,  D4::r3, D4::s,
                                                      D4::sr, D4::sr2, D4::sr3};

std::string_view to_string(D4 t);

/// Destination of position (i, j) under `t` on an n x n grid.
constexpr std::pair<std::size_t, std::size_t> destination(D4 t, std::size_t i, std::size_t j,
                                                          std::size_t n) {
  const std::size_t m = n - 1;
  switch (t) {
    case D4::e: return {i, j};
    case D4::r: return {j, m - i};
    case D4::r2: return {m - i, m - j};
    case D4::r3: return {m - j, i};
    case D4::s: return {i, m - j};
    case D4::sr: return {j, i};
    case D4::sr2: return {m - i, j};
    case D4::sr3: return {m - j, m - i};
  }
  return {i, j};
}

KernelMatrix apply(D4 t, const KernelMatrix& m);

/// The element equal to applying `second` first and then `first`:
/// apply(compose(a, b), m) == apply(a, apply(b, m)).
D4 compose(D4 first, D4 second);

D4 inverse(D4 t);

/// Smallest k >= 1 with t^k == e.
int order(D4 t);

std::span<const D4> non_identity_set();

}  // namespace kernsym
