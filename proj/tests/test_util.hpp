// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include "pimjitq/catalog.hpp"
#include "pimjitq/mxfmt.hpp"
#include "pimjitq/pim.hpp"

namespace testutil {

using namespace pimjitq;

// A normal value 1.f * 2^k with random sign, k in [lo, hi], or zero.
inline uint32_t random_normal(std::mt19937_64& rng, const mx::ScalarFormat& f, int lo, int hi,
                              int zero_per_mille = 80) {
    const uint64_t r = rng();
    if (int(r % 1000) < zero_per_mille) return 0;
    const int k = lo + int((r >> 10) % uint64_t(hi - lo + 1));
    const int emax = (1 << f.exp_bits) - (f.ieee_specials ? 2 : 1);
    int e = f.bias + k;
    e = e < 1 ? 1 : e > emax ? emax : e;
    uint32_t frac = uint32_t(rng()) & f.frac_mask();
    uint32_t bits = (uint32_t((r >> 40) & 1) << (f.width() - 1)) | (uint32_t(e) << f.mantissa_bits) | frac;
    if (!mx::is_finite(bits, f)) bits &= ~1u;
    return bits;
}

inline std::array<uint32_t, 16> random_block(std::mt19937_64& rng, const mx::ScalarFormat& f,
                                             int spread = 12) {
    std::array<uint32_t, 16> x{};
    const int centre = int(rng() % 41) - 20;
    for (auto& v : x) v = random_normal(rng, f, centre - spread, centre + spread);
    return x;
}

inline const catalog::Catalog& builtin_catalog() {
    static const catalog::Catalog c = catalog::Catalog::builtin();
    return c;
}

// Small geometry for functional runs: 1 stack, 2 pseudo-channels, 2 units each.
inline pim::HwConfig small_hw() {
    pim::HwConfig c;
    c.stacks = 1;
    c.pchs_per_stack = 2;
    c.banks_per_pch = 4;
    c.banks_per_stack = 8;
    c.pim_units_per_stack = 4;
    return c;
}

}  // namespace testutil
