// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/kernelgen.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"
#include "pimjitq/error.hpp"

namespace pimjitq::kernelgen {

using pim::BankAddr;
using pim::Cond;
using pim::PimCommand;
using pim::ShiftDir;
using placement::Layout;
using placement::Slot;
namespace cmd = pim::cmd;

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Tiled: return "tiled";
        case Variant::Strided: return "strided";
        case Variant::StridedOpt: return "strided-opt";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    if (s == "tiled") return Variant::Tiled;
    if (s == "strided") return Variant::Strided;
    if (s == "strided-opt" || s == "opt") return Variant::StridedOpt;
    throw Error("unknown kernel variant: " + std::string(s));
}

placement::Scheme scheme_for(Variant v) {
    return v == Variant::Tiled ? placement::Scheme::Tiled : placement::Scheme::Strided;
}

KernelSpec make_spec(Variant v, const mx::ScalarFormat& src, const mx::MxFormat& dst,
                     mx::QuantAxis axis, std::size_t rows, std::size_t cols,
                     const pim::HwConfig& cfg) {
    return KernelSpec{v, src, dst, std::nullopt, axis,
                      Layout::make(scheme_for(v), rows, cols, src, cfg)};
}

KernelSpec make_scalar_spec(Variant v, const mx::ScalarFormat& src, const mx::ScalarFormat& dst,
                            std::size_t rows, std::size_t cols, const pim::HwConfig& cfg) {
    return KernelSpec{v, src, mx::kMX6, dst, mx::QuantAxis::Row,
                      Layout::make(scheme_for(v), rows, cols, src, cfg)};
}

int shift_loop_trips(const mx::ScalarFormat& src) { return src.mantissa_bits + 1; }

namespace {

constexpr int kRegsNeeded = 16;

// Register file of the lane-aligned routine.
constexpr int rE1 = 0, rDACC = 1, rEM0 = 2, rX = 10, rXE = 11, rSIG = 12, rY = 13, rT = 14,
              rF = 15;
// Register file of the cross-lane (tiled row) routine.
constexpr int tEVEN = 0, tODD = 1, tE1 = 2, tT = 3, tA = 4, tB = 5, tSIG = 12, tY = 13,
              tQ = 14, tF = 15;
constexpr int tX(int w) { return 6 + 3 * w; }
constexpr int tXE(int w) { return 7 + 3 * w; }
constexpr int tEM(int w) { return 8 + 3 * w; }

struct LaneTarget {
    std::size_t local = 0;
    int block = 0;
    bool used = false;
};

PimCommand sub_imm(int dst, int a, uint32_t imm, int width) {
    auto c = cmd::add_imm(dst, a, imm, width);
    c.sub = true;
    return c;
}

std::size_t data_words_per_bank(const Layout& l) {
    if (l.scheme() == placement::Scheme::Tiled) {
        return l.tiles_per_unit() * 8 * std::size_t(l.lane_width() / 16);
    }
    return l.packs_per_unit() * 128;
}

class Emitter {
public:
    Emitter(const KernelSpec& s, const Sink& sink, OutputMap* map)
        : s_(s),
          l_(s.layout),
          sink_(sink),
          map_(map),
          w_(l_.lane_width()),
          lanes_(l_.lanes()),
          mb_(s.src.mantissa_bits),
          unit_(1u << s.src.mantissa_bits),
          trips_(shift_loop_trips(s.src)),
          opt_(s.variant == Variant::StridedOpt) {
        const auto& cfg = l_.config();
        if (!(s.src == l_.src())) throw Error("kernel source format differs from layout");
        if (l_.scheme() != scheme_for(s.variant)) {
            throw Error("variant " + std::string(to_string(s.variant)) + " needs a " +
                        std::string(placement::to_string(scheme_for(s.variant))) + " layout");
        }
        if (cfg.regs_per_alu < kRegsNeeded) {
            throw Error("kernel needs " + std::to_string(kRegsNeeded) +
                        " registers per ALU, hardware has " + std::to_string(cfg.regs_per_alu));
        }
        if (opt_ && !cfg.cond_shift_support) {
            throw Error("strided-opt requires conditional bit-shift support");
        }
        wpr_ = uint64_t(cfg.words_per_row());
        const auto axis = s.is_scalar() ? mx::QuantAxis::Row : s.axis;
        scratch_base_ = uint64_t(l_.scratch_first_row(axis)) * wpr_;
        scratch_words_ = uint64_t(l_.scratch_rows_per_axis()) * wpr_;
        if (map_) {
            *map_ = OutputMap{};
            map_->tiles_per_unit = l_.tiles_per_unit();
            if (!s.is_scalar()) map_->blocks.assign(l_.tiles_per_unit() * 16, BlockSlots{});
        }
    }

    void run() {
        if (s_.is_scalar()) {
            scalar_kernel();
            return;
        }
        const std::size_t tpu = l_.tiles_per_unit();
        const bool row = s_.axis == mx::QuantAxis::Row;
        if (s_.variant == Variant::Tiled) {
            if (row) {
                const uint32_t crow = l_.constants_row();
                emit(cmd::load(tEVEN, BankAddr{0, crow, 0}, w_));
                emit(cmd::load(tODD, BankAddr{0, crow, 1}, w_));
                for (std::size_t lt = 0; lt < tpu; ++lt) {
                    for (int i = 0; i < 16; ++i) tiled_row_block(lt, i);
                }
                return;
            }
            for (std::size_t lt = 0; lt < tpu; ++lt) {
                for (int wd = 0; wd < 16 / lanes_; ++wd) {
                    std::array<BankAddr, 16> e{};
                    for (int i = 0; i < 16; ++i) e[i] = l_.tile_element(lt, i, wd * lanes_).addr;
                    std::array<LaneTarget, 16> t{};
                    for (int ln = 0; ln < lanes_; ++ln) t[ln] = {lt, wd * lanes_ + ln, true};
                    lane_group(e, t, true);
                }
            }
            return;
        }
        for (std::size_t p = 0; p < l_.packs_per_unit(); ++p) {
            const std::size_t first = p * std::size_t(lanes_);
            for (int q = 0; q < 16; ++q) {
                std::array<BankAddr, 16> e{};
                for (int j = 0; j < 16; ++j) {
                    e[j] = row ? l_.tile_element(first, q, j).addr
                               : l_.tile_element(first, j, q).addr;
                }
                std::array<LaneTarget, 16> t{};
                for (int ln = 0; ln < lanes_; ++ln) {
                    t[ln] = {first + std::size_t(ln), q, first + std::size_t(ln) < tpu};
                }
                lane_group(e, t, !row);
            }
        }
    }

private:
    void emit(const PimCommand& c) { sink_(c); }
    void emit_step(PimCommand c) {
        c.shift_step = true;
        sink_(c);
    }

    BankAddr scratch(int bank) {
        uint64_t& c = cursor_[std::size_t(bank)];
        if (c >= scratch_words_) throw Error("scratch area exhausted");
        const uint64_t a = scratch_base_ + c++;
        return BankAddr{uint8_t(bank), uint32_t(a / wpr_), uint16_t(a % wpr_)};
    }

    uint32_t align_offset() const {
        return uint32_t(s_.src.significand_bits() - s_.dst.mantissa_bits) * unit_;
    }

    // Shifts `sig` right by the per-lane amount held in `amount` (exponent
    // field units); returns the register holding the result.
    int align(int sig, int amount, int out, int tmp) {
        if (opt_) {
            emit(cmd::load_counter(amount, uint32_t(mb_), w_));
            for (int t = 0; t < trips_; ++t) emit(cmd::cond_bitshift(sig, w_));
            return sig;
        }
        emit(cmd::cmp_sel(out, amount, Cond::Eq, 0, sig, w_));
        for (int step = 1; step <= trips_; ++step) {
            emit_step(cmd::bitshift(sig, ShiftDir::Right, w_));
            emit_step(cmd::cmp_sel(tmp, amount, Cond::Eq, uint32_t(step) * unit_, sig, w_));
            emit_step(cmd::add(out, out, tmp, w_));
        }
        return out;
    }

    // 16 blocks (or 8 for 32-bit lanes) processed side by side, one per lane.
    void lane_group(const std::array<BankAddr, 16>& e, const std::array<LaneTarget, 16>& tgt,
                    bool bank_order) {
        const uint32_t emask = s_.src.exp_mask();
        for (int k = 0; k < mx::kSubblocks; ++k) {
            emit(cmd::load(rX, e[2 * k], w_));
            emit(cmd::band_imm(rX, rX, emask, w_));
            emit(cmd::load(rT, e[2 * k + 1], w_));
            emit(cmd::band_imm(rT, rT, emask, w_));
            emit(cmd::max(rEM0 + k, rX, rT, w_));
            if (k == 0) {
                emit(cmd::copy(rE1, rEM0, w_));
            } else {
                emit(cmd::max(rE1, rE1, rEM0 + k, w_));
            }
        }
        emit(cmd::max_imm(rT, rE1, unit_, w_));
        for (int k = 0; k < mx::kSubblocks; ++k) {
            const int em = rEM0 + k;
            if (k == 0) {
                emit(cmd::cmp_imm_reg(rDACC, em, Cond::Lt, rT, 1, w_));
            } else {
                emit(cmd::cmp_imm_reg(rX, em, Cond::Lt, rT, 1, w_));
                emit(cmd::add(rDACC, rDACC, rDACC, w_));
                emit(cmd::add(rDACC, rDACC, rX, w_));
            }
            emit(cmd::cmp_imm_reg(em, em, Cond::Lt, rT, unit_, w_));
            emit(cmd::sub(em, rT, em, w_));
            emit(cmd::add_imm(em, em, align_offset(), w_));
        }
        const int side = 1 - e[0].bank;
        const BankAddr e1_at = scratch(side);
        emit(cmd::store(e1_at, rE1, w_));
        const BankAddr d_at = scratch(side);
        emit(cmd::store(d_at, rDACC, w_));

        std::array<int, 16> order{};
        for (int j = 0; j < 16; ++j) order[j] = j;
        if (bank_order) {
            std::stable_partition(order.begin(), order.end(),
                                  [&](int j) { return e[j].bank == e[0].bank; });
        }
        std::array<BankAddr, 16> out_at{};
        for (int j : order) {
            emit(cmd::load(rX, e[j], w_));
            emit(cmd::band_imm(rXE, rX, emask, w_));
            emit(cmd::band_imm(rF, rX, s_.src.frac_mask(), w_));
            emit(cmd::add_imm(rF, rF, unit_, w_));
            emit(cmd::cmp_sel(rSIG, rXE, Cond::Ne, 0, rF, w_));
            emit(cmd::sub(rXE, rEM0 + j / 2, rXE, w_));
            const int y = align(rSIG, rXE, rY, rT);
            emit(cmd::band_imm(rF, rX, s_.src.sign_mask(), w_));
            emit(cmd::add(rY, y, rF, w_));
            out_at[j] = scratch(1 - e[j].bank);
            emit(cmd::store(out_at[j], rY, w_));
        }
        if (!map_) return;
        for (int ln = 0; ln < lanes_; ++ln) {
            if (!tgt[ln].used) continue;
            BlockSlots& b = map_->blocks[tgt[ln].local * 16 + std::size_t(tgt[ln].block)];
            b.e1 = Slot{e1_at, ln};
            b.d_packed = true;
            b.d[0] = Slot{d_at, ln};
            for (int j = 0; j < 16; ++j) b.elem[j] = Slot{out_at[j], ln};
        }
    }

    // Row block of a row-major tile: the block sits across the lanes of one
    // (BF16) or two (FP32) words, so exponent maxima need lane shifts.
    void tiled_row_block(std::size_t lt, int i) {
        const int words = 16 / lanes_;
        const int side = 1 - i % 2;
        const uint32_t emask = s_.src.exp_mask();
        for (int wd = 0; wd < words; ++wd) {
            emit(cmd::load(tX(wd), l_.tile_element(lt, i, wd * lanes_).addr, w_));
            emit(cmd::band_imm(tXE(wd), tX(wd), emask, w_));
            emit(cmd::laneshift(tA, tXE(wd), ShiftDir::Left, w_));
            emit(cmd::laneshift(tB, tXE(wd), ShiftDir::Right, w_));
            emit(cmd::max(tA, tXE(wd), tA, w_));
            emit(cmd::max(tB, tXE(wd), tB, w_));
            emit(cmd::band(tA, tA, tEVEN, w_));
            emit(cmd::band(tB, tB, tODD, w_));
            emit(cmd::add(tEM(wd), tA, tB, w_));
        }
        int acc = tEM(0);
        if (words == 2) {
            emit(cmd::max(tE1, tEM(0), tEM(1), w_));
            acc = tE1;
        }
        for (int r = 2; r < lanes_; r *= 2) {
            emit(cmd::laneshift(tA, acc, ShiftDir::Left, w_));
            for (int k = 1; k < r; ++k) emit(cmd::laneshift(tA, tA, ShiftDir::Left, w_));
            emit(cmd::max(tE1, acc, tA, w_));
            acc = tE1;
        }
        emit(cmd::max_imm(tT, tE1, unit_, w_));
        const BankAddr e1_at = scratch(side);
        emit(cmd::store(e1_at, tE1, w_));

        BlockSlots slots;
        slots.e1 = Slot{e1_at, 0};
        slots.d_packed = false;
        for (int wd = 0; wd < words; ++wd) {
            const int em = tEM(wd), xe = tXE(wd);
            emit(cmd::cmp_imm_reg(tQ, em, Cond::Lt, tT, 1, w_));
            const BankAddr d_at = scratch(side);
            emit(cmd::store(d_at, tQ, w_));
            emit(cmd::cmp_imm_reg(em, em, Cond::Lt, tT, unit_, w_));
            emit(cmd::sub(em, tT, em, w_));
            emit(cmd::add_imm(em, em, align_offset(), w_));
            emit(cmd::band_imm(tF, tX(wd), s_.src.frac_mask(), w_));
            emit(cmd::add_imm(tF, tF, unit_, w_));
            emit(cmd::cmp_sel(tSIG, xe, Cond::Ne, 0, tF, w_));
            emit(cmd::sub(xe, em, xe, w_));
            const int y = align(tSIG, xe, tY, tQ);
            emit(cmd::band_imm(tQ, tX(wd), s_.src.sign_mask(), w_));
            emit(cmd::add(tY, y, tQ, w_));
            const BankAddr out_at = scratch(side);
            emit(cmd::store(out_at, tY, w_));
            for (int ln = 0; ln < lanes_; ++ln) {
                const int j = wd * lanes_ + ln;
                slots.elem[j] = Slot{out_at, ln};
                if (j % 2 == 0) slots.d[j / 2] = Slot{d_at, ln};
            }
        }
        if (map_) map_->blocks[lt * 16 + std::size_t(i)] = slots;
    }

    // Element-wise narrowing conversion; truncates, flushes, saturates.
    void scalar_kernel() {
        const mx::ScalarFormat& src = s_.src;
        const mx::ScalarFormat& dst = *s_.scalar_dst;
        if (dst.mantissa_bits > src.mantissa_bits || dst.exp_bits > src.exp_bits ||
            dst.bias > src.bias) {
            throw Error("scalar kernel supports narrowing conversions only");
        }
        constexpr int X = 0, V = 1, A = 2, S = 3;
        const int shift = src.mantissa_bits - dst.mantissa_bits;
        const uint32_t diff = uint32_t(src.bias - dst.bias) << dst.mantissa_bits;
        const uint32_t floor = uint32_t(src.bias - dst.bias + 1) << dst.mantissa_bits;
        const uint32_t maxf = mx::max_finite(dst);
        const std::size_t used = data_words_per_bank(l_);
        for (std::size_t base = 0; base < used; base += wpr_) {
            for (int bank = 0; bank < 2; ++bank) {
                for (std::size_t off = base; off < std::min<std::size_t>(base + wpr_, used);
                     ++off) {
                    const BankAddr in{uint8_t(bank), uint32_t(off / wpr_),
                                      uint16_t(off % wpr_)};
                    emit(cmd::load(X, in, w_));
                    emit(cmd::band_imm(V, X, src.exp_mask() | src.frac_mask(), w_));
                    for (int k = 0; k < shift; ++k) {
                        emit(cmd::bitshift(V, ShiftDir::Right, w_));
                    }
                    if (diff != 0) {
                        emit(sub_imm(A, V, diff, w_));
                    } else {
                        emit(cmd::copy(A, V, w_));
                    }
                    emit(cmd::cmp_sel(A, V, Cond::Ge, floor, A, w_));
                    emit(cmd::cmp_imm(S, A, Cond::Gt, maxf, maxf, w_));
                    emit(cmd::cmp_sel(A, A, Cond::Le, maxf, A, w_));
                    emit(cmd::add(A, A, S, w_));
                    emit(cmd::cmp_imm(S, X, Cond::Ge, src.sign_mask(), dst.sign_mask(), w_));
                    emit(cmd::add(A, A, S, w_));
                    const BankAddr out = scratch(1 - bank);
                    emit(cmd::store(out, A, w_));
                    if (map_) map_->scalar_words.push_back({in, out});
                }
            }
        }
    }

    const KernelSpec& s_;
    const Layout& l_;
    const Sink& sink_;
    OutputMap* map_;
    int w_;
    int lanes_;
    int mb_;
    uint32_t unit_;
    int trips_;
    bool opt_;
    uint64_t wpr_ = 0;
    uint64_t scratch_base_ = 0;
    uint64_t scratch_words_ = 0;
    std::array<uint64_t, 2> cursor_{};
};

uint32_t lane_mask(int width) { return width == 32 ? 0xFFFFFFFFu : 0xFFFFu; }

pim::PhysWordAddr phys(const placement::UnitId& u, const BankAddr& a) {
    return pim::PhysWordAddr{u.stack, u.pch, 2 * u.unit + a.bank, a.row, a.col};
}

uint32_t read_lane(const pim::MemoryImage& mem, const placement::UnitId& u, const Slot& s,
                   int width) {
    return mem.read(phys(u, s.addr)).lane(s.lane, width);
}

struct RawBlock {
    uint32_t e1 = 0;
    bool d_packed = true;
    std::array<uint32_t, mx::kSubblocks> d{};
    std::array<uint32_t, mx::kBlockSize> elem{};
};

// Visits every real block of the tensor with its raw output lanes.
template <typename Fn>
void for_each_block(const KernelSpec& spec, const OutputMap& map, const pim::MemoryImage& mem,
                    Fn&& fn) {
    const Layout& l = spec.layout;
    const int w = l.lane_width();
    const mx::BlockIndexMap bmap{l.rows(), l.cols(), spec.axis};
    const bool row = spec.axis == mx::QuantAxis::Row;
    for (std::size_t g = 0; g < l.total_units(); ++g) {
        const placement::UnitId u = l.unit_id(g);
        for (std::size_t lt = 0; lt < l.tiles_on_unit(g); ++lt) {
            const std::size_t t = l.tile_of(g, lt);
            const std::size_t r0 = (t / l.tile_cols()) * 16, c0 = (t % l.tile_cols()) * 16;
            for (int bt = 0; bt < 16; ++bt) {
                const BlockSlots& s = map.blocks[lt * 16 + std::size_t(bt)];
                RawBlock raw;
                raw.e1 = read_lane(mem, u, s.e1, w);
                raw.d_packed = s.d_packed;
                for (int k = 0; k < (s.d_packed ? 1 : mx::kSubblocks); ++k) {
                    raw.d[k] = read_lane(mem, u, s.d[k], w);
                }
                for (int j = 0; j < 16; ++j) raw.elem[j] = read_lane(mem, u, s.elem[j], w);
                const std::size_t block = row ? bmap.locate(r0 + bt, c0).first
                                              : bmap.locate(r0, c0 + bt).first;
                fn(block, raw);
            }
        }
    }
}

mx::MxBlock decode_raw(const RawBlock& raw, const KernelSpec& spec) {
    const int w = spec.layout.lane_width();
    mx::MxBlock b;
    b.e1 = uint8_t(raw.e1 >> spec.src.mantissa_bits);
    for (int k = 0; k < mx::kSubblocks; ++k) {
        b.d[k] = raw.d_packed ? uint8_t((raw.d[0] >> (7 - k)) & 1u) : uint8_t(raw.d[k] & 1u);
    }
    const uint32_t low = (1u << (w - 1)) - 1u;
    for (int j = 0; j < 16; ++j) {
        b.sign[j] = uint8_t(raw.elem[j] >> (w - 1));
        b.mantissa[j] = uint8_t(raw.elem[j] & low);
    }
    return b;
}

std::optional<Mismatch> compare_block(std::size_t block, const mx::MxBlock& want,
                                      const RawBlock& raw, const KernelSpec& spec) {
    const int w = spec.layout.lane_width();
    const int mb = spec.src.mantissa_bits;
    if (raw.e1 != (uint32_t(want.e1) << mb)) {
        return Mismatch{block, "e1", -1, want.e1, raw.e1 >> mb};
    }
    for (int k = 0; k < mx::kSubblocks; ++k) {
        const uint32_t got = raw.d_packed ? (raw.d[0] >> (7 - k)) & 1u : raw.d[k];
        if (got != want.d[k]) return Mismatch{block, "d", k, want.d[k], got};
    }
    if (raw.d_packed && (raw.d[0] >> 8) != 0) return Mismatch{block, "d", -1, 0, raw.d[0]};
    const uint32_t low = (1u << (w - 1)) - 1u;
    for (int j = 0; j < 16; ++j) {
        const uint32_t sign = raw.elem[j] >> (w - 1);
        if (sign != want.sign[j]) return Mismatch{block, "sign", j, want.sign[j], sign};
        const uint32_t mant = raw.elem[j] & low;
        if (mant != want.mantissa[j]) {
            return Mismatch{block, "mantissa", j, want.mantissa[j], mant};
        }
    }
    return std::nullopt;
}

}  // namespace

void emit_quant_kernel(const KernelSpec& spec, const Sink& sink, OutputMap* map) {
    Emitter(spec, sink, map).run();
}

GeneratedKernel gen_quant_kernel(const KernelSpec& spec) {
    GeneratedKernel k;
    emit_quant_kernel(
        spec, [&](const PimCommand& c) { k.stream.cmds.push_back(c); }, &k.map);
    return k;
}

void place_tensor(const mx::Matrix& m, const Layout& l, pim::MemoryImage& mem) {
    if (m.rows != l.rows() || m.cols != l.cols()) throw Error("tensor shape differs from layout");
    if (!(m.fmt == l.src())) throw Error("tensor format differs from layout");
    const int w = l.lane_width();
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            const placement::PhysAddr a = l.locate(r, c);
            const pim::PhysWordAddr wa{a.stack, a.pch, a.bank, a.row, a.col};
            pim::Word word = mem.read(wa);
            word.set_lane(a.lane, w, m.at(r, c));
            mem.write(wa, word);
        }
    }
    pim::Word even, odd;
    for (int i = 0; i < l.lanes(); ++i) (i % 2 == 0 ? even : odd).set_lane(i, w, lane_mask(w));
    const auto& cfg = l.config();
    for (int st = 0; st < cfg.stacks; ++st) {
        for (int p = 0; p < cfg.pchs_per_stack; ++p) {
            for (int u = 0; u < cfg.units_per_pch(); ++u) {
                mem.write({st, p, 2 * u, l.constants_row(), 0}, even);
                mem.write({st, p, 2 * u, l.constants_row(), 1}, odd);
            }
        }
    }
}

pim::MemoryImage place_tensor(const mx::Matrix& m, const Layout& l) {
    pim::MemoryImage mem(l.config());
    place_tensor(m, l, mem);
    return mem;
}

mx::QuantizedMatrix unpack_output(const KernelSpec& spec, const OutputMap& map,
                                  const pim::MemoryImage& mem) {
    if (spec.is_scalar()) throw Error("scalar kernel output holds no MX blocks");
    mx::QuantizedMatrix q;
    q.fmt = spec.dst;
    q.src = spec.src;
    q.map = mx::BlockIndexMap{spec.layout.rows(), spec.layout.cols(), spec.axis};
    q.blocks.resize(q.map.block_count());
    for_each_block(spec, map, mem, [&](std::size_t b, const RawBlock& raw) {
        q.blocks[b] = decode_raw(raw, spec);
    });
    return q;
}

mx::Matrix unpack_scalar_output(const KernelSpec& spec, const OutputMap& map,
                                const pim::MemoryImage& mem) {
    if (!spec.is_scalar()) throw Error("not a scalar kernel");
    const Layout& l = spec.layout;
    const int w = l.lane_width();
    auto key = [](const BankAddr& a) {
        return (uint64_t(a.bank) << 48) | (uint64_t(a.row) << 16) | uint64_t(a.col);
    };
    std::map<uint64_t, BankAddr> out_of;
    for (const auto& [in, out] : map.scalar_words) out_of[key(in)] = out;
    mx::Matrix m(l.rows(), l.cols(), *spec.scalar_dst);
    for (std::size_t r = 0; r < l.rows(); ++r) {
        for (std::size_t c = 0; c < l.cols(); ++c) {
            const std::size_t t = (r / 16) * l.tile_cols() + c / 16;
            const placement::UnitId u = l.unit_id(l.global_unit_of_tile(t));
            const Slot s = l.tile_element(l.local_index_of_tile(t), int(r % 16), int(c % 16));
            const auto it = out_of.find(key(s.addr));
            if (it == out_of.end()) throw Error("scalar output map incomplete");
            m.at(r, c) = read_lane(mem, u, Slot{it->second, s.lane}, w);
        }
    }
    return m;
}

VerifyResult verify_kernel(const KernelSpec& spec, const pim::MemoryImage& mem,
                           const mx::Matrix& ref) {
    const GeneratedKernel k = gen_quant_kernel(spec);
    const pim::MemoryImage out = pim::execute_stream(k.stream, mem);
    VerifyResult res;
    res.commands = k.stream.cmds.size();
    if (spec.is_scalar()) {
        const mx::Matrix got = unpack_scalar_output(spec, k.map, out);
        for (std::size_t i = 0; i < ref.bits.size(); ++i) {
            const uint32_t want = mx::scalar_convert(ref.bits[i], spec.src, *spec.scalar_dst);
            ++res.checked;
            if (got.bits[i] != want) {
                res.first = Mismatch{i, "value", -1, want, got.bits[i]};
                return res;
            }
        }
        res.pass = true;
        return res;
    }
    const mx::QuantizedMatrix want = mx::quantize_matrix(ref, spec.dst, spec.axis);
    std::optional<Mismatch> first;
    for_each_block(spec, k.map, out, [&](std::size_t b, const RawBlock& raw) {
        ++res.checked;
        if (first && first->block < b) return;
        if (auto m = compare_block(b, want.blocks[b], raw, spec)) first = m;
    });
    if (res.checked != want.blocks.size()) throw Error("kernel output map does not cover tensor");
    res.first = first;
    res.pass = !first.has_value();
    return res;
}

VerifyResult verify_kernel(const KernelSpec& spec, const mx::Matrix& ref) {
    return verify_kernel(spec, place_tensor(ref, spec.layout), ref);
}

std::string verify_json(const KernelSpec& spec, const VerifyResult& r) {
    nlohmann::ordered_json j;
    j["pass"] = r.pass;
    j["variant"] = std::string(to_string(spec.variant));
    j["src"] = std::string(spec.src.name);
    j["dst"] = std::string(spec.is_scalar() ? spec.scalar_dst->name : spec.dst.name);
    j["axis"] = std::string(mx::to_string(spec.axis));
    j["rows"] = spec.layout.rows();
    j["cols"] = spec.layout.cols();
    j["commands"] = r.commands;
    j["checked"] = r.checked;
    if (r.first) {
        j["first_mismatch"] = {{"index", r.first->block},
                               {"field", r.first->field},
                               {"element", r.first->element},
                               {"expected", r.first->expected},
                               {"actual", r.first->actual}};
    } else {
        j["first_mismatch"] = nullptr;
    }
    return j.dump(2);
}

QuantTime quant_time(const KernelSpec& spec) {
    pim::TimingEngine eng(spec.layout.config());
    emit_quant_kernel(spec, [&](const PimCommand& c) { eng.issue(c); });
    QuantTime t;
    t.total_ps = eng.now_ps();
    t.commands = eng.issued();
    t.row_switches = eng.row_switches();
    t.stall_ps = eng.stall_ps();
    t.lane_shift_ps = eng.bucket_ps(pim::Bucket::LaneShift);
    t.bit_shift_ps = eng.bucket_ps(pim::Bucket::BitShift);
    t.other_ps = eng.bucket_ps(pim::Bucket::Other);
    t.histogram = eng.histogram();
    return t;
}

}  // namespace pimjitq::kernelgen
