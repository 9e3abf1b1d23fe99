// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/pim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "pimjitq/error.hpp"

namespace pimjitq::pim {

int64_t HwConfig::tccdl_ps() const { return std::llround(tCCDL_ns * 1000.0); }

int64_t HwConfig::row_switch_ps() const {
    return std::llround(tRAS_ns * 1000.0) + std::llround(tRP_ns * 1000.0);
}

void HwConfig::validate() const {
    if (stacks <= 0 || pchs_per_stack <= 0 || banks_per_pch <= 0) {
        throw Error("hw config: geometry counts must be positive");
    }
    if (banks_per_stack != pchs_per_stack * banks_per_pch) {
        throw Error("hw config: banks_per_stack must equal pchs_per_stack * banks_per_pch");
    }
    if (banks_per_pim_unit != 2 || banks_per_stack != 2 * pim_units_per_stack) {
        throw Error("hw config: each PIM unit must own exactly one even/odd bank pair");
    }
    if (simd_lanes * lane_width != 256) throw Error("hw config: SIMD width must be 256 bits");
    if (regs_per_alu <= 0 || regs_per_alu > 127) throw Error("hw config: bad register count");
    if (row_buffer_bytes < kWordBytes || row_buffer_bytes % kWordBytes != 0) {
        throw Error("hw config: row buffer must be a multiple of 32 B");
    }
    if (!(tCCDL_ns > 0.0) || tRP_ns < 0.0 || tRAS_ns < 0.0 || !(gpu_bw_per_stack_GBps > 0.0)) {
        throw Error("hw config: timing parameters must be positive");
    }
}

double pim_bandwidth_ratio(const HwConfig& cfg) {
    const double per_unit_GBps = double(kWordBytes) / cfg.tCCDL_ns;  // B/ns == GB/s
    return cfg.pim_units_per_stack * per_unit_GBps / cfg.gpu_bw_per_stack_GBps;
}

std::string_view to_string(Opcode op) {
    switch (op) {
        case Opcode::Mov: return "MOV";
        case Opcode::Max: return "MAX";
        case Opcode::Cmp: return "CMP";
        case Opcode::Add: return "ADD";
        case Opcode::And: return "AND";
        case Opcode::BitShift: return "BITSHIFT";
        case Opcode::CondBitShift: return "CONDBITSHIFT";
        case Opcode::LaneShift: return "LANESHIFT";
        case Opcode::LoadCounter: return "LOADCOUNTER";
        case Opcode::WriteRow: return "WRITEROW";
    }
    return "?";
}

std::string_view to_string(Cond c) {
    switch (c) {
        case Cond::Eq: return "eq";
        case Cond::Ne: return "ne";
        case Cond::Lt: return "lt";
        case Cond::Le: return "le";
        case Cond::Gt: return "gt";
        case Cond::Ge: return "ge";
    }
    return "?";
}

namespace cmd {

namespace {
PimCommand make(Opcode op, int width) {
    PimCommand c;
    c.op = op;
    c.width = uint8_t(width);
    return c;
}
}  // namespace

PimCommand load(int dst, BankAddr addr, int width) {
    auto c = make(Opcode::Mov, width);
    c.dst = int8_t(dst);
    c.addr = addr;
    return c;
}
PimCommand copy(int dst, int src, int width) {
    auto c = make(Opcode::Mov, width);
    c.dst = int8_t(dst);
    c.a = int8_t(src);
    return c;
}
PimCommand store(BankAddr addr, int src, int width) {
    auto c = make(Opcode::WriteRow, width);
    c.a = int8_t(src);
    c.addr = addr;
    return c;
}
PimCommand max(int dst, int a, int b, int width) {
    auto c = make(Opcode::Max, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.b = int8_t(b);
    return c;
}
PimCommand max_imm(int dst, int a, uint32_t imm, int width) {
    auto c = make(Opcode::Max, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.imm = imm;
    return c;
}
PimCommand add(int dst, int a, int b, int width) {
    auto c = make(Opcode::Add, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.b = int8_t(b);
    return c;
}
PimCommand add_imm(int dst, int a, uint32_t imm, int width) {
    auto c = make(Opcode::Add, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.imm = imm;
    return c;
}
PimCommand sub(int dst, int a, int b, int width) {
    auto c = add(dst, a, b, width);
    c.sub = true;
    return c;
}
PimCommand band(int dst, int a, int b, int width) {
    auto c = make(Opcode::And, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.b = int8_t(b);
    return c;
}
PimCommand band_imm(int dst, int a, uint32_t imm, int width) {
    auto c = make(Opcode::And, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.imm = imm;
    return c;
}
PimCommand cmp_sel(int dst, int a, Cond cond, uint32_t rhs, int sel_reg, int width) {
    auto c = make(Opcode::Cmp, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.imm = rhs, c.cond = cond, c.sel = int8_t(sel_reg);
    return c;
}
PimCommand cmp_sel_reg(int dst, int a, Cond cond, int rhs_reg, int sel_reg, int width) {
    auto c = make(Opcode::Cmp, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.b = int8_t(rhs_reg), c.cond = cond;
    c.sel = int8_t(sel_reg);
    return c;
}
PimCommand cmp_imm(int dst, int a, Cond cond, uint32_t rhs, uint32_t value, int width) {
    auto c = make(Opcode::Cmp, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.imm = rhs, c.cond = cond, c.sel_imm = value;
    return c;
}
PimCommand cmp_imm_reg(int dst, int a, Cond cond, int rhs_reg, uint32_t value, int width) {
    auto c = make(Opcode::Cmp, width);
    c.dst = int8_t(dst), c.a = int8_t(a), c.b = int8_t(rhs_reg), c.cond = cond;
    c.sel_imm = value;
    return c;
}
PimCommand bitshift(int reg, ShiftDir dir, int width) {
    auto c = make(Opcode::BitShift, width);
    c.dst = int8_t(reg), c.dir = dir;
    return c;
}
PimCommand cond_bitshift(int reg, int width) {
    auto c = make(Opcode::CondBitShift, width);
    c.dst = int8_t(reg);
    return c;
}
PimCommand laneshift(int dst, int src, ShiftDir dir, int width) {
    auto c = make(Opcode::LaneShift, width);
    c.dst = int8_t(dst), c.a = int8_t(src), c.dir = dir;
    return c;
}
PimCommand load_counter(int src, uint32_t field_shift, int width) {
    auto c = make(Opcode::LoadCounter, width);
    c.a = int8_t(src), c.imm = field_shift;
    return c;
}

}  // namespace cmd

// --- memory ------------------------------------------------------------------

MemoryImage::MemoryImage(const HwConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

uint64_t MemoryImage::key(const PhysWordAddr& a) const {
    if (a.stack < 0 || a.stack >= cfg_.stacks || a.pch < 0 || a.pch >= cfg_.pchs_per_stack ||
        a.bank < 0 || a.bank >= cfg_.banks_per_pch ||
        a.col >= uint32_t(cfg_.words_per_row()) || a.row >= (1u << 24)) {
        throw Error("address out of geometry");
    }
    return (uint64_t(a.stack) << 56) | (uint64_t(a.pch) << 48) | (uint64_t(a.bank) << 40) |
           (uint64_t(a.row) << 16) | uint64_t(a.col);
}

Word MemoryImage::read(const PhysWordAddr& a) const {
    const auto it = words_.find(key(a));
    return it == words_.end() ? Word{} : it->second;
}

void MemoryImage::write(const PhysWordAddr& a, const Word& w) { words_[key(a)] = w; }

// --- functional execution ----------------------------------------------------

namespace {

uint32_t lane_mask(int width) { return width == 32 ? 0xFFFFFFFFu : 0xFFFFu; }

bool eval(Cond c, uint32_t x, uint32_t y) {
    switch (c) {
        case Cond::Eq: return x == y;
        case Cond::Ne: return x != y;
        case Cond::Lt: return x < y;
        case Cond::Le: return x <= y;
        case Cond::Gt: return x > y;
        case Cond::Ge: return x >= y;
    }
    return false;
}

}  // namespace

void check_command(const PimCommand& c, const HwConfig& cfg) {
    if (c.width != 16 && c.width != 32) throw Error("lane width must be 16 or 32");
    auto reg_ok = [&](int r) { return r < cfg.regs_per_alu; };
    if (!reg_ok(c.dst) || !reg_ok(c.a) || !reg_ok(c.b) || !reg_ok(c.sel)) {
        throw Error("register index out of range");
    }
    if (c.touches_memory()) {
        if (c.addr.bank >= cfg.banks_per_pim_unit) {
            throw Error("bank not attached to the PIM unit");
        }
        if (c.addr.col >= cfg.words_per_row()) throw Error("address out of geometry");
    }
    const bool needs_dst = c.op != Opcode::WriteRow && c.op != Opcode::LoadCounter;
    if (needs_dst && c.dst < 0) throw Error("command without destination register");
    const bool needs_a = c.op != Opcode::Mov && c.op != Opcode::BitShift &&
                         c.op != Opcode::CondBitShift;
    if (needs_a && c.a < 0) throw Error("command without source register");
}

void execute_on_unit(const PimCommand& c, PimUnitState& st, MemoryImage& mem, int stack,
                     int pch, int bank_base) {
    const int w = c.width;
    const int n = Word::lanes(w);
    const uint32_t msk = lane_mask(w);
    auto phys = [&](const BankAddr& a) {
        return PhysWordAddr{stack, pch, bank_base + a.bank, a.row, a.col};
    };
    auto rhs = [&](const Word& rb, int i) { return c.b >= 0 ? rb.lane(i, w) : (c.imm & msk); };

    switch (c.op) {
        case Opcode::Mov:
            st.regs[c.dst] = c.a < 0 ? mem.read(phys(c.addr)) : st.regs[c.a];
            break;
        case Opcode::WriteRow:
            mem.write(phys(c.addr), st.regs[c.a]);
            break;
        case Opcode::Max:
        case Opcode::Add:
        case Opcode::And: {
            const Word ra = st.regs[c.a];
            const Word rb = c.b >= 0 ? st.regs[c.b] : Word{};
            Word out;
            for (int i = 0; i < n; ++i) {
                const uint32_t x = ra.lane(i, w), y = rhs(rb, i);
                uint32_t v;
                if (c.op == Opcode::Max) {
                    v = std::max(x, y);
                } else if (c.op == Opcode::And) {
                    v = x & y;
                } else {
                    v = c.sub ? x - y : x + y;
                }
                out.set_lane(i, w, v & msk);
            }
            st.regs[c.dst] = out;
            break;
        }
        case Opcode::Cmp: {
            const Word ra = st.regs[c.a];
            const Word rb = c.b >= 0 ? st.regs[c.b] : Word{};
            const Word rs = c.sel >= 0 ? st.regs[c.sel] : Word{};
            Word out;
            for (int i = 0; i < n; ++i) {
                const bool t = eval(c.cond, ra.lane(i, w), rhs(rb, i));
                const uint32_t pick = c.sel >= 0 ? rs.lane(i, w) : (c.sel_imm & msk);
                out.set_lane(i, w, t ? pick : 0u);
            }
            st.regs[c.dst] = out;
            break;
        }
        case Opcode::BitShift: {
            Word& r = st.regs[c.dst];
            for (int i = 0; i < n; ++i) {
                const uint32_t x = r.lane(i, w);
                r.set_lane(i, w, (c.dir == ShiftDir::Right ? x >> 1 : x << 1) & msk);
            }
            break;
        }
        case Opcode::CondBitShift: {
            Word& r = st.regs[c.dst];
            for (int i = 0; i < n; ++i) {
                if (st.counters[i] > 0) {
                    r.set_lane(i, w, r.lane(i, w) >> 1);
                    --st.counters[i];
                }
            }
            break;
        }
        case Opcode::LaneShift: {
            const Word ra = st.regs[c.a];
            Word out;
            for (int i = 0; i < n; ++i) {
                const int from = c.dir == ShiftDir::Left ? (i + 1) % n : (i + n - 1) % n;
                out.set_lane(i, w, ra.lane(from, w));
            }
            st.regs[c.dst] = out;
            break;
        }
        case Opcode::LoadCounter: {
            const Word ra = st.regs[c.a];
            for (int i = 0; i < n; ++i) {
                const uint32_t v = c.imm >= 32 ? 0u : (ra.lane(i, w) >> c.imm);
                st.counters[i] = uint8_t(std::min<uint32_t>(v, kCounterMax));
            }
            break;
        }
    }
}

void execute_stream(const CommandStream& s, MemoryImage& mem) {
    const HwConfig& cfg = mem.config();
    for (const auto& c : s.cmds) check_command(c, cfg);

    std::vector<PchId> targets = s.targets;
    if (targets.empty()) {
        for (int st = 0; st < cfg.stacks; ++st) {
            for (int p = 0; p < cfg.pchs_per_stack; ++p) targets.push_back({st, p});
        }
    }
    for (const auto& t : targets) {
        if (t.stack < 0 || t.stack >= cfg.stacks || t.pch < 0 || t.pch >= cfg.pchs_per_stack) {
            throw Error("target pseudo-channel out of geometry");
        }
    }
    // Units never communicate, so running each unit to completion is
    // equivalent to lock-step broadcast.
    for (const auto& t : targets) {
        for (int u = 0; u < cfg.units_per_pch(); ++u) {
            PimUnitState st(cfg.regs_per_alu);
            for (const auto& c : s.cmds) execute_on_unit(c, st, mem, t.stack, t.pch, 2 * u);
        }
    }
}

MemoryImage execute_stream(const CommandStream& s, const MemoryImage& mem) {
    MemoryImage out = mem;
    execute_stream(s, out);
    return out;
}

// --- histogram ---------------------------------------------------------------

Bucket classify(const PimCommand& c) {
    if (c.op == Opcode::LaneShift) return Bucket::LaneShift;
    if (c.op == Opcode::BitShift || c.op == Opcode::CondBitShift || c.shift_step) {
        return Bucket::BitShift;
    }
    return Bucket::Other;
}

void Histogram::add(const PimCommand& c) {
    ++per_opcode[std::size_t(c.op)];
    switch (classify(c)) {
        case Bucket::LaneShift: ++lane_shift; break;
        case Bucket::BitShift: ++bit_shift; break;
        case Bucket::Other: ++other; break;
    }
}

Histogram& Histogram::operator+=(const Histogram& o) {
    for (int i = 0; i < kOpcodeCount; ++i) per_opcode[i] += o.per_opcode[i];
    lane_shift += o.lane_shift;
    bit_shift += o.bit_shift;
    other += o.other;
    return *this;
}

Histogram command_histogram(const CommandStream& s) {
    Histogram h;
    for (const auto& c : s.cmds) h.add(c);
    return h;
}

// --- timing ------------------------------------------------------------------

TimingEngine::TimingEngine(const HwConfig& cfg, OpenRows initial, bool record)
    : tccdl_(cfg.tccdl_ps()), tswitch_(cfg.row_switch_ps()), open_(initial), record_(record) {}

void TimingEngine::issue(const PimCommand& c) {
    int64_t start = now_;
    if (c.touches_memory()) {
        const int b = c.addr.bank & 1;
        if (open_[b] != c.addr.row) {
            const int64_t switch_from = (b == current_bank_) ? now_ : last_access_end_[b];
            start = std::max(now_, switch_from + tswitch_);
            open_[b] = c.addr.row;
            ++switches_;
        }
    }
    const int64_t end = start + tccdl_;
    stall_ps_ += start - now_;
    bucket_ps_[std::size_t(Bucket::Other)] += start - now_;
    bucket_ps_[std::size_t(classify(c))] += tccdl_;
    if (c.touches_memory()) {
        last_access_end_[c.addr.bank & 1] = end;
        current_bank_ = c.addr.bank & 1;
    }
    if (record_) trace_.push_back({issued_, c.op, start, end});
    hist_.add(c);
    now_ = end;
    ++issued_;
}

TimingResult time_stream(const CommandStream& s, const HwConfig& cfg, OpenRows initial) {
    for (const auto& c : s.cmds) check_command(c, cfg);
    TimingEngine eng(cfg, initial, true);
    for (const auto& c : s.cmds) eng.issue(c);
    return {eng.now_ps(), eng.row_switches(), eng.trace()};
}

// --- text format ---------------------------------------------------------------

namespace {

std::string reg_or_imm(int reg, uint32_t imm) {
    if (reg >= 0) return "r" + std::to_string(reg);
    std::ostringstream os;
    os << "#0x" << std::hex << imm;
    return os.str();
}

uint32_t parse_uint(std::string_view s) {
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    uint32_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw Error("bad number in command text: " + std::string(s));
    }
    return v;
}

// "r3" -> (3, 0), "#0x80" -> (-1, 0x80)
std::pair<int, uint32_t> parse_operand(std::string_view s) {
    if (!s.empty() && s[0] == 'r') return {int(parse_uint(s.substr(1))), 0u};
    if (!s.empty() && s[0] == '#') return {-1, parse_uint(s.substr(1))};
    throw Error("bad operand: " + std::string(s));
}

Opcode parse_opcode(std::string_view s) {
    for (int i = 0; i < kOpcodeCount; ++i) {
        if (to_string(Opcode(i)) == s) return Opcode(i);
    }
    throw Error("unknown opcode: " + std::string(s));
}

Cond parse_cond(std::string_view s) {
    for (int i = 0; i <= int(Cond::Ge); ++i) {
        if (to_string(Cond(i)) == s) return Cond(i);
    }
    throw Error("unknown condition: " + std::string(s));
}

}  // namespace

std::string format_command(const PimCommand& c) {
    std::ostringstream os;
    os << to_string(c.op) << " w=" << int(c.width);
    if (c.dst >= 0) os << " d=r" << int(c.dst);
    if (c.a >= 0) os << " a=r" << int(c.a);
    const bool has_rhs = c.op == Opcode::Max || c.op == Opcode::Add || c.op == Opcode::And ||
                         c.op == Opcode::Cmp || c.op == Opcode::LoadCounter;
    if (has_rhs) os << " b=" << reg_or_imm(c.b, c.imm);
    if (c.op == Opcode::Cmp) {
        os << " cond=" << to_string(c.cond) << " sel=" << reg_or_imm(c.sel, c.sel_imm);
    }
    if (c.op == Opcode::BitShift || c.op == Opcode::LaneShift) {
        os << " dir=" << (c.dir == ShiftDir::Left ? "l" : "r");
    }
    if (c.sub) os << " sub=1";
    if (c.touches_memory()) {
        os << " addr=b" << int(c.addr.bank) << ":r" << c.addr.row << ":c" << c.addr.col;
    }
    if (c.shift_step) os << " tag=shift";
    return os.str();
}

PimCommand parse_command(std::string_view line) {
    std::istringstream is{std::string(line)};
    std::string tok;
    if (!(is >> tok)) throw Error("empty command line");
    PimCommand c;
    c.op = parse_opcode(tok);
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw Error("bad token: " + tok);
        const std::string_view key = std::string_view(tok).substr(0, eq);
        const std::string_view val = std::string_view(tok).substr(eq + 1);
        if (key == "w") {
            c.width = uint8_t(parse_uint(val));
        } else if (key == "d") {
            c.dst = int8_t(parse_operand(val).first);
        } else if (key == "a") {
            c.a = int8_t(parse_operand(val).first);
        } else if (key == "b") {
            const auto [r, imm] = parse_operand(val);
            c.b = int8_t(r);
            c.imm = imm;
        } else if (key == "sel") {
            const auto [r, imm] = parse_operand(val);
            c.sel = int8_t(r);
            c.sel_imm = imm;
        } else if (key == "cond") {
            c.cond = parse_cond(val);
        } else if (key == "dir") {
            c.dir = val == "l" ? ShiftDir::Left : ShiftDir::Right;
        } else if (key == "sub") {
            c.sub = val == "1";
        } else if (key == "tag") {
            c.shift_step = val == "shift";
        } else if (key == "addr") {
            // b<bank>:r<row>:c<col>
            const auto p1 = val.find(':');
            const auto p2 = val.find(':', p1 + 1);
            if (p1 == std::string_view::npos || p2 == std::string_view::npos) {
                throw Error("bad address: " + std::string(val));
            }
            c.addr.bank = uint8_t(parse_uint(val.substr(1, p1 - 1)));
            c.addr.row = parse_uint(val.substr(p1 + 2, p2 - p1 - 2));
            c.addr.col = uint16_t(parse_uint(val.substr(p2 + 2)));
        } else {
            throw Error("unknown key: " + std::string(key));
        }
    }
    return c;
}

void write_stream(std::ostream& os, const CommandStream& s) {
    for (const auto& t : s.targets) os << "TARGET " << t.stack << ":" << t.pch << "\n";
    for (const auto& c : s.cmds) os << format_command(c) << "\n";
}

CommandStream read_stream(std::istream& is) {
    CommandStream s;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("TARGET ", 0) == 0) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) throw Error("bad TARGET line");
            s.targets.push_back({int(parse_uint(line.substr(7, colon - 7))),
                                 int(parse_uint(line.substr(colon + 1)))});
            continue;
        }
        s.cmds.push_back(parse_command(line));
    }
    return s;
}

void write_trace_csv(std::ostream& os, std::span<const TraceEvent> trace) {
    os << "index,opcode,start_ns,end_ns\n";
    for (const auto& e : trace) {
        os << e.index << ',' << to_string(e.op) << ',' << (e.start_ps / 1000) << '.'
           << std::string(3 - std::to_string(e.start_ps % 1000).size(), '0')
           << (e.start_ps % 1000) << ',' << (e.end_ps / 1000) << '.'
           << std::string(3 - std::to_string(e.end_ps % 1000).size(), '0') << (e.end_ps % 1000)
           << '\n';
    }
}

}  // namespace pimjitq::pim
