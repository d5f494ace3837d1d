// SPDX-License-Identifier: Apache-2.0

#include "kernsym/dihedral.hpp"

#include <vector>

namespace kernsym {

namespace {

// s^flip r^turns
struct Word {
  int flip;
  int turns;
};

Word to_word(D4 t) {
  const int v = static_cast<int>(t);
  return {v / 4, v % 4};
}

D4 from_word(Word w) { return static_cast<D4>(w.flip * 4 + ((w.turns % 4) + 4) % 4); }

}  // namespace

std::string_view to_string(D4 t) {
  switch (t) {
    case D4::e: return "e";
    case D4::r: return "r";
    case D4::r2: return "r2";
    case D4::r3: return "r3";
    case D4::s: return "s";
    case D4::sr: return "sr";
    case D4::sr2: return "sr2";
    case D4::sr3: return "sr3";
  }
  return "?";
}

KernelMatrix apply(D4 t, const KernelMatrix& m) {
  const std::size_t n = m.side();
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto [di, dj] = destination(t, i, j, n);
      out[di * n + dj] = m(i, j);
    }
  }
  return KernelMatrix(n, std::move(out));
}

D4 compose(D4 first, D4 second) {
  // (s^a r^b)(s^c r^d) = s^(a+c) r^((-1)^c b + d), using r s = s r^-1.
  const Word a = to_word(first);
  const Word b = to_word(second);
  const int turns = (b.flip ? -a.turns : a.turns) + b.turns;
  return from_word({(a.flip + b.flip) % 2, turns});
}

D4 inverse(D4 t) {
  const Word w = to_word(t);
  if (w.flip) return t;
  return from_word({0, -w.turns});
}

int order(D4 t) {
  int k = 1;
  for (D4 p = t; p != D4::e; p = compose(t, p)) ++k;
  return k;
}

std::span<const D4> non_identity_set() { return kNonIdentityD4; }

}  // namespace kernsym
