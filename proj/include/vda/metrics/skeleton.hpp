#pragma once

#include <array>
#include <cstdint>

#include "vda/core/errors.hpp"
#include "vda/core/tensor.hpp"

namespace vda {

namespace detail {

// 3x3 ring around a pixel, row-major: index k covers offset kRingOff[k].
inline constexpr std::array<std::array<int, 2>, 8> kRingOff = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

/// A foreground pixel is *simple* when deleting it changes neither the
/// 8-connected foreground topology nor the 4-connected background topology:
/// exactly one fg component in the ring, and exactly one bg component that
/// touches an edge-neighbour of the centre.
inline bool compute_simple(unsigned cfg) {
  auto adjacent = [](int i, int j, bool diag) {
    int dr = kRingOff[i][0] - kRingOff[j][0];
    int dc = kRingOff[i][1] - kRingOff[j][1];
    dr = dr < 0 ? -dr : dr;
    dc = dc < 0 ? -dc : dc;
    return diag ? (dr <= 1 && dc <= 1) : (dr + dc == 1);
  };
  auto components = [&](unsigned members, bool diag, unsigned must_touch) {
    int count = 0;
    unsigned seen = 0;
    for (int s = 0; s < 8; ++s) {
      if (!(members >> s & 1) || (seen >> s & 1)) continue;
      unsigned comp = 1u << s;
      bool grew = true;
      while (grew) {
        grew = false;
        for (int i = 0; i < 8; ++i) {
          if (!(members >> i & 1) || (comp >> i & 1)) continue;
          for (int j = 0; j < 8; ++j)
            if ((comp >> j & 1) && adjacent(i, j, diag)) {
              comp |= 1u << i;
              grew = true;
              break;
            }
        }
      }
      seen |= comp;
      if (!must_touch || (comp & must_touch)) ++count;
    }
    return count;
  };
  // Edge-neighbour positions N, W, E, S are ring indices 1, 3, 4, 6.
  unsigned edge = (1u << 1) | (1u << 3) | (1u << 4) | (1u << 6);
  return components(cfg, /*diag=*/true, /*must_touch=*/0) == 1 &&
         components(~cfg & 0xffu, /*diag=*/false, edge) == 1;
}

inline const std::array<bool, 256>& simple_lut() {
  static const std::array<bool, 256> lut = [] {
    std::array<bool, 256> t{};
    for (unsigned c = 0; c < 256; ++c) t[c] = compute_simple(c);
    return t;
  }();
  return lut;
}

}  // namespace detail

/// Homotopic thinning by sequential deletion of simple points, sweeping the
/// four border directions in turn until a full cycle removes nothing.
/// Pixels with at most one foreground neighbour are kept as curve endpoints.
/// Deleting only simple points preserves the number of 8-connected components
/// and every hole, and a second application is a no-op by construction.
template <typename U>
Tensor<uint8_t> skeletonize(const Tensor<U>& mask) {
  const Shape& s = mask.shape();
  if (s.size() != 2) throw ShapeError("skeletonize: expected 2-d mask, got " + shape_str(s));
  int64_t H = s[0], W = s[1];
  Tensor<uint8_t> skel({H, W});
  for (int64_t i = 0; i < H * W; ++i) skel[i] = mask[i] != U(0) ? 1 : 0;

  auto at = [&](int64_t y, int64_t x) -> uint8_t {
    return (y < 0 || y >= H || x < 0 || x >= W) ? 0 : skel[y * W + x];
  };
  auto ring_config = [&](int64_t y, int64_t x) {
    unsigned cfg = 0;
    for (int k = 0; k < 8; ++k)
      if (at(y + detail::kRingOff[k][0], x + detail::kRingOff[k][1])) cfg |= 1u << k;
    return cfg;
  };

  const auto& lut = detail::simple_lut();
  constexpr int dirs[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};  // N, S, W, E
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& d : dirs) {
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          if (!skel[y * W + x] || at(y + d[0], x + d[1])) continue;
          unsigned cfg = ring_config(y, x);
          int nnb = __builtin_popcount(cfg);
          if (nnb >= 2 && lut[cfg]) {
            skel[y * W + x] = 0;
            changed = true;
          }
        }
    }
  }
  return skel;
}

}  // namespace vda
