// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/placement.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "json.hpp"

#include "pimjitq/error.hpp"

namespace pimjitq::placement {

std::string_view to_string(Scheme s) { return s == Scheme::Tiled ? "tiled" : "strided"; }

int lane_width_for(const mx::ScalarFormat& src) {
    if (src == mx::kBF16) return 16;
    if (src == mx::kFP32) return 32;
    throw Error("PIM layouts support BF16 and FP32 sources only");
}

Layout::Layout(Scheme s, std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
               const pim::HwConfig& cfg)
    : scheme_(s), rows_(rows), cols_(cols), src_(src), cfg_(cfg), width_(lane_width_for(src)) {
    cfg_.validate();
    if (rows == 0 || cols == 0 || rows % 16 != 0 || cols % 16 != 0) {
        throw Error("tensor dims must be non-zero multiples of 16");
    }
}

Layout Layout::tiled(std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
                     const pim::HwConfig& cfg) {
    return Layout(Scheme::Tiled, rows, cols, src, cfg);
}

Layout Layout::strided(std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
                       const pim::HwConfig& cfg) {
    return Layout(Scheme::Strided, rows, cols, src, cfg);
}

Layout Layout::make(Scheme s, std::size_t rows, std::size_t cols, const mx::ScalarFormat& src,
                    const pim::HwConfig& cfg) {
    return Layout(s, rows, cols, src, cfg);
}

std::size_t Layout::tiles_per_unit() const {
    return (tiles() + total_units() - 1) / total_units();
}

std::size_t Layout::tiles_on_unit(std::size_t global_unit) const {
    const std::size_t u = total_units();
    return tiles() / u + (global_unit < tiles() % u ? 1 : 0);
}

std::size_t Layout::packs_per_unit() const {
    const std::size_t l = std::size_t(lanes());
    return (tiles_per_unit() + l - 1) / l;
}

std::size_t Layout::global_unit_of_tile(std::size_t t) const { return t % total_units(); }

UnitId Layout::unit_id(std::size_t g) const {
    const std::size_t pchs = std::size_t(cfg_.total_pchs());
    const std::size_t pch_global = g % pchs;
    return UnitId{int(pch_global / std::size_t(cfg_.pchs_per_stack)),
                  int(pch_global % std::size_t(cfg_.pchs_per_stack)), int(g / pchs)};
}

Slot Layout::tile_element(std::size_t local, int i, int j) const {
    const uint32_t wpr = uint32_t(cfg_.words_per_row());
    std::size_t offset;
    int lane;
    if (scheme_ == Scheme::Tiled) {
        const std::size_t words_per_tile_row = std::size_t(width_ / 16);
        offset = local * 8 * words_per_tile_row + std::size_t(i / 2) * words_per_tile_row +
                 std::size_t(j / lanes());
        lane = j % lanes();
    } else {
        const std::size_t pack = local / std::size_t(lanes());
        offset = pack * 128 + std::size_t(i / 2) * 16 + std::size_t(j);
        lane = int(local % std::size_t(lanes()));
    }
    return Slot{pim::BankAddr{uint8_t(i % 2), uint32_t(offset / wpr), uint16_t(offset % wpr)},
                lane};
}

PhysAddr Layout::locate(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw Error("element outside tensor");
    const std::size_t t = (r / 16) * tile_cols() + c / 16;
    const std::size_t g = global_unit_of_tile(t);
    const UnitId u = unit_id(g);
    const Slot s = tile_element(local_index_of_tile(t), int(r % 16), int(c % 16));
    return PhysAddr{u.stack, u.pch, 2 * u.unit + s.addr.bank, s.addr.row, s.addr.col, s.lane};
}

uint32_t Layout::data_rows_per_bank() const {
    const std::size_t wpr = std::size_t(cfg_.words_per_row());
    std::size_t words;
    if (scheme_ == Scheme::Tiled) {
        words = tiles_per_unit() * 8 * std::size_t(width_ / 16);
    } else {
        words = packs_per_unit() * 128;
    }
    return uint32_t((words + wpr - 1) / wpr);
}

uint32_t Layout::scratch_rows_per_axis() const { return 3 * data_rows_per_bank() + 2; }

uint32_t Layout::scratch_first_row(mx::QuantAxis axis) const {
    return data_rows_per_bank() +
           (axis == mx::QuantAxis::Row ? 0u : scratch_rows_per_axis());
}

uint32_t Layout::constants_row() const {
    return data_rows_per_bank() + 2 * scratch_rows_per_axis();
}

LayoutStats layout_stats(const Layout& l, mx::QuantAxis axis) {
    const mx::BlockIndexMap map{l.rows(), l.cols(), axis};
    LayoutStats st;
    double rows_sum = 0, words_sum = 0;
    for (std::size_t b = 0; b < map.block_count(); ++b) {
        std::set<std::tuple<int, int, int, uint32_t>> rows;
        std::set<std::tuple<int, int, int, uint32_t, uint32_t>> words;
        std::set<std::tuple<int, int, int>> units;
        std::set<int> lanes;
        for (int j = 0; j < mx::kBlockSize; ++j) {
            const auto [r, c] = map.coord(b, j);
            const PhysAddr a = l.locate(r, c);
            rows.insert({a.stack, a.pch, a.bank, a.row});
            words.insert({a.stack, a.pch, a.bank, a.row, a.col});
            units.insert({a.stack, a.pch, a.bank / 2});
            lanes.insert(a.lane);
        }
        rows_sum += double(rows.size());
        words_sum += double(words.size());
        st.max_rows_touched = std::max<uint32_t>(st.max_rows_touched, uint32_t(rows.size()));
        st.colocated = st.colocated && units.size() == 1;
        st.lane_aligned = st.lane_aligned && lanes.size() == 1;
    }
    const double n = double(map.block_count());
    st.rows_touched_per_block = rows_sum / n;
    st.words_touched_per_block = words_sum / n;
    if (l.scheme() == Scheme::Tiled) {
        st.pack_occupancy = 1.0;
    } else {
        std::size_t available = 0;
        for (std::size_t g = 0; g < l.total_units(); ++g) {
            const std::size_t t = l.tiles_on_unit(g);
            const std::size_t packs = (t + std::size_t(l.lanes()) - 1) / std::size_t(l.lanes());
            available += packs * std::size_t(l.lanes());
        }
        st.pack_occupancy = double(l.tiles()) / double(available);
    }
    return st;
}

std::string layout_json(const Layout& l) {
    const auto& cfg = l.config();
    nlohmann::ordered_json j;
    j["scheme"] = std::string(to_string(l.scheme()));
    j["rows"] = l.rows();
    j["cols"] = l.cols();
    j["src"] = std::string(l.src().name);
    j["lane_width"] = l.lane_width();
    j["geometry"] = {{"stacks", cfg.stacks},
                     {"pchs_per_stack", cfg.pchs_per_stack},
                     {"banks_per_pch", cfg.banks_per_pch},
                     {"pim_units", cfg.total_units()},
                     {"row_buffer_bytes", cfg.row_buffer_bytes}};
    j["tiles"] = l.tiles();
    j["tiles_per_unit"] = l.tiles_per_unit();
    j["data_rows_per_bank"] = {0, l.data_rows_per_bank()};
    const uint32_t n = l.scratch_rows_per_axis();
    const uint32_t r0 = l.scratch_first_row(mx::QuantAxis::Row);
    const uint32_t c0 = l.scratch_first_row(mx::QuantAxis::Column);
    j["scratch_rows"] = {{"row", {r0, r0 + n}}, {"column", {c0, c0 + n}}};
    j["constants_row"] = l.constants_row();
    return j.dump(2);
}

}  // namespace pimjitq::placement
