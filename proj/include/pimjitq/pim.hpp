// SPDX-License-Identifier: Apache-2.0
//
// HBM-PIM device model: geometry/timing parameters, the PIM command set,
// a bit-exact functional executor and a DRAM-command timing engine.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pimjitq::pim {

inline constexpr int kWordBytes = 32;  // one 256-bit DRAM column access
inline constexpr int kCounterMax = 31;  // 5-bit per-lane shift counters

struct HwConfig {
    int stacks = 4;
    int pchs_per_stack = 32;
    int banks_per_pch = 16;
    int banks_per_stack = 512;
    int pim_units_per_stack = 256;
    int banks_per_pim_unit = 2;
    int simd_lanes = 16;
    int lane_width = 16;
    int regs_per_alu = 16;
    int row_buffer_bytes = 1024;
    double tRP_ns = 15.0;
    double tCCDL_ns = 3.33;
    double tRAS_ns = 33.0;
    double pin_bw_gbps = 4.8;
    double gpu_bw_per_stack_GBps = 614.4;
    // Counter-based conditional shift augmentation of the ALU.
    bool cond_shift_support = true;

    int units_per_pch() const { return banks_per_pch / banks_per_pim_unit; }
    int total_pchs() const { return stacks * pchs_per_stack; }
    int total_units() const { return stacks * pim_units_per_stack; }
    int words_per_row() const { return row_buffer_bytes / kWordBytes; }

    int64_t tccdl_ps() const;
    int64_t row_switch_ps() const;  // tRAS + tRP

    // Throws pimjitq::Error when geometry invariants do not hold.
    void validate() const;
};

// Aggregate PIM access bandwidth over GPU bandwidth, per stack.
double pim_bandwidth_ratio(const HwConfig& cfg);

// 256-bit value viewed as 16 x 16-bit or 8 x 32-bit lanes.
struct Word {
    std::array<uint16_t, 16> h{};

    uint32_t lane(int i, int width) const {
        if (width == 16) return h[i];
        return uint32_t(h[2 * i]) | (uint32_t(h[2 * i + 1]) << 16);
    }
    void set_lane(int i, int width, uint32_t v) {
        if (width == 16) {
            h[i] = uint16_t(v);
        } else {
            h[2 * i] = uint16_t(v);
            h[2 * i + 1] = uint16_t(v >> 16);
        }
    }
    static int lanes(int width) { return 256 / width; }

    bool operator==(const Word&) const = default;
};

enum class Opcode : uint8_t {
    Mov,
    Max,
    Cmp,
    Add,
    And,
    BitShift,
    CondBitShift,
    LaneShift,
    LoadCounter,
    WriteRow,
};
inline constexpr int kOpcodeCount = 10;

enum class Cond : uint8_t { Eq, Ne, Lt, Le, Gt, Ge };
enum class ShiftDir : uint8_t { Right, Left };

std::string_view to_string(Opcode op);
std::string_view to_string(Cond c);

// Unit-relative DRAM coordinate: which bank of the unit's pair, row, column.
struct BankAddr {
    uint8_t bank = 0;  // 0 = even, 1 = odd
    uint32_t row = 0;
    uint16_t col = 0;

    bool operator==(const BankAddr&) const = default;
};

// One broadcast PIM command.
//
//   MOV          dst <- mem[addr]           (a < 0)   or dst <- reg a
//   WRITEROW     mem[addr] <- reg a
//   MAX/ADD/AND  dst <- a op (reg b | imm); ADD subtracts when `sub`
//   CMP          dst <- (a cond (reg b | imm)) ? (reg sel | sel_imm) : 0
//   BITSHIFT     dst <- dst shifted one bit in `dir`, every lane
//   CONDBITSHIFT lanes with S_i > 0: dst >>= 1, S_i -= 1
//   LANESHIFT    dst <- reg a rotated one lane in `dir` (Left: lane i takes lane i+1)
//   LOADCOUNTER  S_i <- min(31, a_i >> imm)
struct PimCommand {
    Opcode op = Opcode::Mov;
    uint8_t width = 16;
    int8_t dst = -1;
    int8_t a = -1;
    int8_t b = -1;
    int8_t sel = -1;
    uint32_t imm = 0;
    uint32_t sel_imm = 0;
    Cond cond = Cond::Eq;
    ShiftDir dir = ShiftDir::Right;
    bool sub = false;
    // Emitted as part of a per-bit shift step (counted with bitSHIFT).
    bool shift_step = false;
    BankAddr addr{};

    bool touches_memory() const { return op == Opcode::Mov ? a < 0 : op == Opcode::WriteRow; }
    bool operator==(const PimCommand&) const = default;
};

namespace cmd {
PimCommand load(int dst, BankAddr addr, int width);
PimCommand copy(int dst, int src, int width);
PimCommand store(BankAddr addr, int src, int width);
PimCommand max(int dst, int a, int b, int width);
PimCommand max_imm(int dst, int a, uint32_t imm, int width);
PimCommand add(int dst, int a, int b, int width);
PimCommand add_imm(int dst, int a, uint32_t imm, int width);
PimCommand sub(int dst, int a, int b, int width);
PimCommand band(int dst, int a, int b, int width);
PimCommand band_imm(int dst, int a, uint32_t imm, int width);
PimCommand cmp_sel(int dst, int a, Cond c, uint32_t rhs, int sel_reg, int width);
PimCommand cmp_sel_reg(int dst, int a, Cond c, int rhs_reg, int sel_reg, int width);
PimCommand cmp_imm(int dst, int a, Cond c, uint32_t rhs, uint32_t value, int width);
PimCommand cmp_imm_reg(int dst, int a, Cond c, int rhs_reg, uint32_t value, int width);
PimCommand bitshift(int reg, ShiftDir dir, int width);
PimCommand cond_bitshift(int reg, int width);
PimCommand laneshift(int dst, int src, ShiftDir dir, int width);
PimCommand load_counter(int src, uint32_t field_shift, int width);
}  // namespace cmd

struct PchId {
    int stack = 0;
    int pch = 0;
    bool operator==(const PchId&) const = default;
};

struct CommandStream {
    std::vector<PchId> targets;  // empty = every pseudo-channel
    std::vector<PimCommand> cmds;
};

// Sparse device memory; absent words read as zero.
struct PhysWordAddr {
    int stack = 0;
    int pch = 0;
    int bank = 0;  // bank within the pseudo-channel
    uint32_t row = 0;
    uint32_t col = 0;
};

class MemoryImage {
public:
    explicit MemoryImage(const HwConfig& cfg);

    Word read(const PhysWordAddr& a) const;
    void write(const PhysWordAddr& a, const Word& w);
    std::size_t size() const { return words_.size(); }
    const HwConfig& config() const { return cfg_; }

    bool operator==(const MemoryImage& o) const { return words_ == o.words_; }

private:
    uint64_t key(const PhysWordAddr& a) const;

    HwConfig cfg_;
    std::unordered_map<uint64_t, Word> words_;
};

// Per-unit architectural state (exposed for tests).
struct PimUnitState {
    std::vector<Word> regs;
    std::array<uint8_t, 16> counters{};
    explicit PimUnitState(int nregs) : regs(std::size_t(nregs)) {}
};

// Executes one command on one unit; `bank_base` is the unit's even bank.
void execute_on_unit(const PimCommand& c, PimUnitState& st, MemoryImage& mem, int stack,
                     int pch, int bank_base);

void check_command(const PimCommand& c, const HwConfig& cfg);

// In-place broadcast execution over every unit of each targeted pseudo-channel.
void execute_stream(const CommandStream& s, MemoryImage& mem);
MemoryImage execute_stream(const CommandStream& s, const MemoryImage& mem);

enum class Bucket : uint8_t { LaneShift, BitShift, Other };
Bucket classify(const PimCommand& c);

struct Histogram {
    std::array<uint64_t, kOpcodeCount> per_opcode{};
    uint64_t lane_shift = 0;
    uint64_t bit_shift = 0;
    uint64_t other = 0;

    void add(const PimCommand& c);
    uint64_t total() const { return lane_shift + bit_shift + other; }
    Histogram& operator+=(const Histogram& o);
    bool operator==(const Histogram&) const = default;
};

Histogram command_histogram(const CommandStream& s);

struct TraceEvent {
    std::size_t index = 0;
    Opcode op = Opcode::Mov;
    int64_t start_ps = 0;
    int64_t end_ps = 0;
};

using OpenRows = std::array<std::optional<uint32_t>, 2>;

// Timing of one unit's in-order command sequence.
//
// Commands issue back to back every tCCDL. A MOV/WRITEROW to a row other
// than the bank's open row pays tRAS + tRP. If the unit's previous memory
// access went to the same bank the switch is in the foreground; if the unit
// was working on the sibling bank, the switch started as soon as this bank's
// last access completed and overlaps whatever ran in between.
class TimingEngine {
public:
    explicit TimingEngine(const HwConfig& cfg, OpenRows initial = {}, bool record = false);

    void issue(const PimCommand& c);
    int64_t now_ps() const { return now_; }
    std::size_t issued() const { return issued_; }
    uint64_t row_switches() const { return switches_; }
    // Time attributed to each bucket; row-switch stalls count as Other.
    int64_t bucket_ps(Bucket b) const { return bucket_ps_[std::size_t(b)]; }
    int64_t stall_ps() const { return stall_ps_; }
    const std::vector<TraceEvent>& trace() const { return trace_; }
    const Histogram& histogram() const { return hist_; }

private:
    int64_t tccdl_;
    int64_t tswitch_;
    OpenRows open_;
    std::array<int64_t, 2> last_access_end_{0, 0};
    int current_bank_ = -1;
    int64_t now_ = 0;
    std::size_t issued_ = 0;
    uint64_t switches_ = 0;
    std::array<int64_t, 3> bucket_ps_{};
    int64_t stall_ps_ = 0;
    bool record_;
    std::vector<TraceEvent> trace_;
    Histogram hist_;
};

struct TimingResult {
    int64_t total_ps = 0;
    uint64_t row_switches = 0;
    std::vector<TraceEvent> trace;
};

TimingResult time_stream(const CommandStream& s, const HwConfig& cfg, OpenRows initial = {});

// Line-oriented text form, one command per line.
std::string format_command(const PimCommand& c);
PimCommand parse_command(std::string_view line);
void write_stream(std::ostream& os, const CommandStream& s);
CommandStream read_stream(std::istream& is);

void write_trace_csv(std::ostream& os, std::span<const TraceEvent> trace);

}  // namespace pimjitq::pim
