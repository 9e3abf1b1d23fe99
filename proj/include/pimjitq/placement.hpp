// SPDX-License-Identifier: Apache-2.0
//
// Weight tensor placement onto PIM bank pairs.
//
// The tensor is cut into 16x16 tiles assigned round-robin over PIM units,
// visiting every pseudo-channel before reusing one. Tile rows alternate
// between the even and odd bank of the owning unit.
//
//   Tiled:   a tile row is stored as consecutive DRAM words (row-major).
//   Strided: up to L tiles share each DRAM word, one tile per SIMD lane;
//            element (i, j) of a tile lands in word i*16 + j of its pack.
//
// L is 16 for BF16 sources and 8 for FP32 (32-bit ALU lanes).
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "pimjitq/mxfmt.hpp"
#include "pimjitq/pim.hpp"

namespace pimjitq::placement {

enum class Scheme { Tiled, Strided };

std::string_view to_string(Scheme s);

struct UnitId {
    int stack = 0;
    int pch = 0;
    int unit = 0;  // unit within the pseudo-channel, owns banks 2u and 2u+1

    bool operator==(const UnitId&) const = default;
};

struct PhysAddr {
    int stack = 0;
    int pch = 0;
    int bank = 0;  // bank within the pseudo-channel
    uint32_t row = 0;
    uint32_t col = 0;
    int lane = 0;

    bool operator==(const PhysAddr&) const = default;
};

// Unit-relative location of one element.
struct Slot {
    pim::BankAddr addr;
    int lane = 0;
};

class Layout {
public:
    static Layout tiled(std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
                        const pim::HwConfig& cfg);
    static Layout strided(std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
                          const pim::HwConfig& cfg);
    static Layout make(Scheme s, std::size_t rows, std::size_t cols,
                       const mx::ScalarFormat& src, const pim::HwConfig& cfg);

    Scheme scheme() const { return scheme_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const mx::ScalarFormat& src() const { return src_; }
    const pim::HwConfig& config() const { return cfg_; }

    int lane_width() const { return width_; }
    int lanes() const { return 256 / width_; }
    std::size_t tile_rows() const { return rows_ / 16; }
    std::size_t tile_cols() const { return cols_ / 16; }
    std::size_t tiles() const { return tile_rows() * tile_cols(); }
    // Largest number of tiles on any unit (every unit runs the same stream).
    std::size_t tiles_per_unit() const;
    std::size_t tiles_on_unit(std::size_t global_unit) const;
    std::size_t packs_per_unit() const;

    std::size_t global_unit_of_tile(std::size_t t) const;
    std::size_t local_index_of_tile(std::size_t t) const { return t / total_units(); }
    std::size_t tile_of(std::size_t global_unit, std::size_t local) const {
        return local * total_units() + global_unit;
    }
    UnitId unit_id(std::size_t global_unit) const;
    std::size_t total_units() const { return std::size_t(cfg_.total_units()); }

    // Element (i, j) of the tile in local slot `local`.
    Slot tile_element(std::size_t local, int i, int j) const;
    PhysAddr locate(std::size_t r, std::size_t c) const;

    uint32_t data_rows_per_bank() const;
    uint32_t scratch_rows_per_axis() const;
    uint32_t scratch_first_row(mx::QuantAxis axis) const;
    uint32_t constants_row() const;

private:
    Layout(Scheme s, std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
           const pim::HwConfig& cfg);

    Scheme scheme_;
    std::size_t rows_;
    std::size_t cols_;
    mx::ScalarFormat src_;
    pim::HwConfig cfg_;
    int width_;
};

// Lane width used by the ALU for a source format (16 for BF16, 32 for FP32).
int lane_width_for(const mx::ScalarFormat& src);

struct LayoutStats {
    double rows_touched_per_block = 0;   // mean distinct (bank, row) pairs
    uint32_t max_rows_touched = 0;
    double words_touched_per_block = 0;  // mean distinct DRAM words
    double pack_occupancy = 0;           // occupied lanes / available lanes
    bool colocated = true;               // every block inside one unit
    bool lane_aligned = true;            // every block on a single lane index
};

LayoutStats layout_stats(const Layout& l, mx::QuantAxis axis);

// JSON descriptor (scheme, dims, geometry, scratch-row ranges).
std::string layout_json(const Layout& l);

}  // namespace pimjitq::placement
