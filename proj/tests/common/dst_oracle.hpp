#pragma once

// Dempster-Shafer evaluated over arbitrary subsets of the frame, independent
// of the library's singleton + theta representation.

#include <cstdint>
#include <map>
#include <vector>

namespace oracle {

using Subset = std::uint32_t;  // bit c set = class c in the focal set
using Bpa = std::map<Subset, double>;

inline Subset full_set(int n_classes) { return (Subset{1} << n_classes) - 1; }

inline Bpa from_scores(const std::vector<double>& s, double reliability) {
  Bpa m;
  for (std::size_t c = 0; c < s.size(); ++c) m[Subset{1} << c] += reliability * s[c];
  m[full_set(static_cast<int>(s.size()))] += 1.0 - reliability;
  return m;
}

struct Combined {
  Bpa mass;
  double conflict = 0.0;
};

// Enumerates every tuple of focal sets, one per source, and intersects them.
inline Combined combine_all(const std::vector<Bpa>& sources) {
  Bpa joint{{~Subset{0}, 1.0}};
  for (const auto& src : sources) {
    Bpa next;
    for (const auto& [a, ma] : joint)
      for (const auto& [b, mb] : src) next[a & b] += ma * mb;
    joint = std::move(next);
  }
  Combined out;
  out.conflict = joint.count(0) ? joint[0] : 0.0;
  for (const auto& [set, m] : joint)
    if (set != 0) out.mass[set] = m / (1.0 - out.conflict);
  return out;
}

inline std::vector<double> pignistic(const Bpa& m, int n_classes) {
  std::vector<double> p(n_classes, 0.0);
  for (const auto& [set, mass] : m) {
    const Subset s = set & full_set(n_classes);
    int size = 0;
    for (int c = 0; c < n_classes; ++c) size += (s >> c) & 1;
    for (int c = 0; c < n_classes; ++c)
      if ((s >> c) & 1) p[c] += mass / size;
  }
  return p;
}

}  // namespace oracle
