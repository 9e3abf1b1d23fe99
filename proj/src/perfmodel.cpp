// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "pimjitq/error.hpp"

namespace pimjitq::perf {

namespace {

int64_t seconds_to_ps(double s) { return int64_t(std::llround(s * 1e12)); }

int scalar_bits(const mx::ScalarFormat& f) { return 1 + f.exp_bits + f.mantissa_bits; }

bool is_mx_name(std::string_view fmt) { return fmt.size() > 2 && fmt.substr(0, 2) == "MX"; }

}  // namespace

GpuConfig GpuConfig::defaults() {
    GpuConfig g;
    // MX peaks scale with the multiplier width: MX6 1.54x and MX4 2.31x of MX9.
    g.peak_flops = {
        {"FP32", 65.625e12},  {"BF16", 262.5e12}, {"FP8-E4M3", 525.0e12},
        {"FP8-E5M2", 525.0e12}, {"MX9", 525.0e12},  {"MX6", 808.5e12},
        {"MX4", 1212.75e12},
    };
    return g;
}

double GpuConfig::peak(std::string_view fmt) const {
    auto it = peak_flops.find(std::string(fmt));
    if (it == peak_flops.end()) throw Error("no GPU peak for format " + std::string(fmt));
    return it->second;
}

void GpuConfig::validate() const {
    if (mem_bw <= 0) throw Error("GPU memory bandwidth must be positive");
    if (mem_efficiency <= 0 || mem_efficiency > 1) throw Error("memory efficiency must be in (0, 1]");
    if (total_cus <= 0 || reserved_cus < 0 || reserved_cus >= total_cus) {
        throw Error("reserved CUs must be fewer than total CUs");
    }
    if (!(sigma >= 1.0) || sigma > 4.0) throw Error("sigma must be in [1, 4]");
    if (!(memory_contention >= 1.0)) throw Error("memory contention must be >= 1");
    for (const auto& [k, v] : peak_flops) {
        if (!(v > 0)) throw Error("GPU peak for " + k + " must be positive");
    }
}

double element_bytes(std::string_view fmt) {
    if (is_mx_name(fmt)) return double(mx::mx_format(fmt).mantissa_bits + 2) / 8.0;
    return double(scalar_bits(mx::scalar_format(fmt))) / 8.0;
}

TrainingSetup TrainingSetup::with(const mx::ScalarFormat& master, const mx::MxFormat& fmt) {
    TrainingSetup s;
    s.master = master;
    s.mx = fmt;
    s.jitq_buffer_blocks = master == mx::kFP32 ? 2 : 1;
    return s;
}

int TrainingSetup::fixed_bits_per_param() const {
    return 3 * scalar_bits(master) + scalar_bits(gradient);
}

GemmCost gemm_cost(int64_t M, int64_t N, int64_t K, std::string_view fmt, const GpuConfig& gpu) {
    if (M <= 0 || N <= 0 || K <= 0) throw Error("GEMM dims must be positive");
    const double flops = 2.0 * double(M) * double(N) * double(K);
    const double bytes = (double(M) * double(K) + double(K) * double(N)) * element_bytes(fmt);
    return GemmCost{seconds_to_ps(flops / gpu.peak(fmt)),
                    seconds_to_ps(bytes / (gpu.mem_efficiency * gpu.mem_bw))};
}

int64_t gemm_time_ps(int64_t M, int64_t N, int64_t K, std::string_view fmt,
                     const GpuConfig& gpu) {
    return gemm_cost(M, N, K, fmt, gpu).time_ps();
}

BlockTimes block_times(const catalog::LlmConfig& m, const GpuConfig& gpu, std::string_view fmt) {
    BlockTimes bt;
    for (const auto& g : catalog::block_gemms(m)) {
        const GemmCost c = gemm_cost(g.M, g.N, g.K, fmt, gpu);
        bt.fwd_ps += c.time_ps();
        (c.compute_bound() ? bt.compute_bound_ps : bt.memory_bound_ps) += c.time_ps();
    }
    bt.bwd_ps = bt.fwd_ps;
    return bt;
}

std::pair<std::size_t, std::size_t> block_weight_shape(const catalog::LlmConfig& m) {
    const std::size_t cols = std::size_t(12 * m.H / m.TP);
    return {std::size_t(m.H), (cols + 15) / 16 * 16};
}

PimBlockTime pim_block_time(const catalog::LlmConfig& m, const pim::HwConfig& hw,
                            const TrainingSetup& s) {
    static std::mutex mu;
    static std::map<std::string, PimBlockTime> cache;

    const auto [rows, cols] = block_weight_shape(m);
    std::ostringstream key;
    key << rows << 'x' << cols << '|' << s.master.name << '|' << s.mx.name << '|'
        << kernelgen::to_string(s.variant) << '|' << hw_to_json(hw);
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key.str());
        if (it != cache.end()) return it->second;
    }
    PimBlockTime t;
    t.row = kernelgen::quant_time(
        kernelgen::make_spec(s.variant, s.master, s.mx, mx::QuantAxis::Row, rows, cols, hw));
    t.column = kernelgen::quant_time(
        kernelgen::make_spec(s.variant, s.master, s.mx, mx::QuantAxis::Column, rows, cols, hw));
    std::lock_guard<std::mutex> lock(mu);
    cache.emplace(key.str(), t);
    return t;
}

SlackResult jitq_slack(const catalog::LlmConfig& m, const GpuConfig& gpu,
                       const pim::HwConfig& hw, const TrainingSetup& s) {
    const BlockTimes bt = block_times(m, gpu, s.mx.name);
    const PimBlockTime pt = pim_block_time(m, hw, s);
    SlackResult r;
    r.gpu_fwd_ps = bt.fwd_ps;
    r.gpu_bwd_ps = bt.bwd_ps;
    r.pim_row_ps = pt.row.total_ps;
    r.pim_col_ps = pt.column.total_ps;
    r.fwd_ratio = double(r.pim_row_ps) / double(r.gpu_fwd_ps);
    r.bwd_ratio = double(r.pim_col_ps) / double(r.gpu_bwd_ps);
    return r;
}

CapacityBreakdown capacity(const catalog::LlmConfig& m, const TrainingSetup& s,
                           bool include_activations) {
    const double block = double(m.block_weights());
    const double params = double(m.L) * block;
    const double master_bytes = double(scalar_bits(s.master)) / 8.0;
    const double lp_bytes = double(s.lp_bits_per_param()) / 8.0;
    CapacityBreakdown c;
    c.master = params * master_bytes;
    c.optimizer = 2.0 * params * master_bytes;
    c.gradients = params * double(scalar_bits(s.gradient)) / 8.0;
    c.lp_weights = double(s.weight_copies) * params * lp_bytes;
    if (include_activations) {
        c.activations = double(m.L) * double(m.tokens()) * double(m.H) * s.c_act *
                        (double(s.activation_bits) / 16.0) / double(m.TP);
    }
    c.jitq_scratch = double(s.jitq_buffer_blocks) * block * lp_bytes;
    return c;
}

double capacity_limit_pct(const TrainingSetup& s) {
    const double lp = double(s.weight_copies * s.lp_bits_per_param());
    return 100.0 * lp / (double(s.fixed_bits_per_param()) + lp);
}

LossResult throughput_loss(const catalog::LlmConfig& m, const GpuConfig& gpu,
                           const pim::HwConfig& hw, const TrainingSetup& s) {
    gpu.validate();
    const BlockTimes bt = block_times(m, gpu, s.mx.name);
    const PimBlockTime pt = pim_block_time(m, hw, s);
    const int64_t depth = s.jitq_buffer_blocks;

    auto phase = [&](int64_t g, int64_t q, double& overlap, int64_t& stall) {
        const double f = std::min(1.0, double(q) / double(g));
        overlap += f * double(g);
        stall += std::max<int64_t>(0, q - depth * g);
        const double extra = f * (gpu.sigma - 1.0) * double(bt.compute_bound_ps) +
                             f * (gpu.memory_contention - 1.0) * double(bt.memory_bound_ps);
        return double(g) + extra + double(std::max<int64_t>(0, q - depth * g));
    };

    LossResult r;
    double overlap = 0;
    const double inflated_block = phase(bt.fwd_ps, pt.row.total_ps, overlap, r.stall_ps) +
                                  phase(bt.bwd_ps, pt.column.total_ps, overlap, r.stall_ps);
    const int64_t base_block = bt.fwd_ps + bt.bwd_ps;
    r.overlap_fraction = overlap / double(base_block);

    const int64_t slots = (m.microbatches + m.PP - 1) * m.layers_per_stage();
    r.baseline_iter_ps = slots * base_block;
    r.inflated_iter_ps = slots * int64_t(std::llround(inflated_block));
    r.loss_pct =
        100.0 * (double(r.inflated_iter_ps) - double(r.baseline_iter_ps)) / double(r.baseline_iter_ps);
    return r;
}

double calibrate_sigma(const std::vector<catalog::LlmConfig>& models, GpuConfig gpu,
                       const pim::HwConfig& hw, const TrainingSetup& s, double target_pct) {
    if (models.empty()) throw Error("calibration needs at least one model");
    auto avg_loss = [&](double sigma) {
        gpu.sigma = sigma;
        double sum = 0;
        for (const auto& m : models) sum += throughput_loss(m, gpu, hw, s).loss_pct;
        return sum / double(models.size());
    };
    double lo = 1.0, hi = 2.0;
    if (avg_loss(lo) > target_pct || avg_loss(hi) < target_pct) {
        throw Error("target loss not reachable with sigma in [1, 2]");
    }
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (avg_loss(mid) < target_pct ? lo : hi) = mid;
    }
    return hi;
}

// ---- configuration JSON ----

namespace {

nlohmann::json parse_object(std::string_view text, const char* what) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string(what) + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(std::string(what) + " must be a JSON object");
    return j;
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& field) {
    if (j.contains(key)) {
        try {
            field = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(std::string("bad value for ") + key);
        }
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const char* what) {
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* x) { return k == x; })) {
            throw Error(std::string("unknown ") + what + " key: " + k);
        }
    }
}

}  // namespace

pim::HwConfig hw_from_json(std::string_view text, pim::HwConfig hw) {
    const auto j = parse_object(text, "hardware config");
    reject_unknown(j,
                   {"stacks", "pchs_per_stack", "banks_per_pch", "banks_per_stack",
                    "pim_units_per_stack", "banks_per_pim_unit", "simd_lanes", "lane_width",
                    "regs_per_alu", "row_buffer_bytes", "tRP_ns", "tCCDL_ns", "tRAS_ns",
                    "pin_bw_gbps", "gpu_bw_per_stack_GBps", "cond_shift_support"},
                   "hardware");
    take(j, "stacks", hw.stacks);
    take(j, "pchs_per_stack", hw.pchs_per_stack);
    take(j, "banks_per_pch", hw.banks_per_pch);
    take(j, "pim_units_per_stack", hw.pim_units_per_stack);
    take(j, "banks_per_pim_unit", hw.banks_per_pim_unit);
    // Derived counts follow the geometry unless given explicitly.
    hw.banks_per_stack = hw.pchs_per_stack * hw.banks_per_pch;
    if (!j.contains("pim_units_per_stack")) {
        hw.pim_units_per_stack = hw.banks_per_stack / hw.banks_per_pim_unit;
    }
    take(j, "banks_per_stack", hw.banks_per_stack);
    take(j, "simd_lanes", hw.simd_lanes);
    take(j, "lane_width", hw.lane_width);
    take(j, "regs_per_alu", hw.regs_per_alu);
    take(j, "row_buffer_bytes", hw.row_buffer_bytes);
    take(j, "tRP_ns", hw.tRP_ns);
    take(j, "tCCDL_ns", hw.tCCDL_ns);
    take(j, "tRAS_ns", hw.tRAS_ns);
    take(j, "pin_bw_gbps", hw.pin_bw_gbps);
    take(j, "gpu_bw_per_stack_GBps", hw.gpu_bw_per_stack_GBps);
    take(j, "cond_shift_support", hw.cond_shift_support);
    hw.validate();
    return hw;
}

std::string hw_to_json(const pim::HwConfig& hw) {
    nlohmann::ordered_json j;
    j["stacks"] = hw.stacks;
    j["pchs_per_stack"] = hw.pchs_per_stack;
    j["banks_per_pch"] = hw.banks_per_pch;
    j["banks_per_stack"] = hw.banks_per_stack;
    j["pim_units_per_stack"] = hw.pim_units_per_stack;
    j["banks_per_pim_unit"] = hw.banks_per_pim_unit;
    j["simd_lanes"] = hw.simd_lanes;
    j["lane_width"] = hw.lane_width;
    j["regs_per_alu"] = hw.regs_per_alu;
    j["row_buffer_bytes"] = hw.row_buffer_bytes;
    j["tRP_ns"] = hw.tRP_ns;
    j["tCCDL_ns"] = hw.tCCDL_ns;
    j["tRAS_ns"] = hw.tRAS_ns;
    j["pin_bw_gbps"] = hw.pin_bw_gbps;
    j["gpu_bw_per_stack_GBps"] = hw.gpu_bw_per_stack_GBps;
    j["cond_shift_support"] = hw.cond_shift_support;
    return j.dump();
}

GpuConfig gpu_from_json(std::string_view text, GpuConfig gpu) {
    const auto j = parse_object(text, "GPU config");
    reject_unknown(j,
                   {"peak_flops", "mem_bw", "mem_efficiency", "total_cus", "reserved_cus",
                    "sigma", "memory_contention"},
                   "GPU");
    if (j.contains("peak_flops")) {
        if (!j["peak_flops"].is_object()) throw Error("peak_flops must be an object");
        for (const auto& [k, v] : j["peak_flops"].items()) {
            if (!v.is_number()) throw Error("bad value for peak_flops." + k);
            gpu.peak_flops[k] = v.get<double>();
        }
    }
    take(j, "mem_bw", gpu.mem_bw);
    take(j, "mem_efficiency", gpu.mem_efficiency);
    take(j, "total_cus", gpu.total_cus);
    take(j, "reserved_cus", gpu.reserved_cus);
    if (j.contains("total_cus") || j.contains("reserved_cus")) {
        gpu.sigma = double(gpu.total_cus) / double(gpu.total_cus - gpu.reserved_cus);
    }
    take(j, "sigma", gpu.sigma);
    take(j, "memory_contention", gpu.memory_contention);
    gpu.validate();
    return gpu;
}

std::string gpu_to_json(const GpuConfig& gpu) {
    nlohmann::ordered_json j;
    j["peak_flops"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : gpu.peak_flops) j["peak_flops"][k] = v;
    j["mem_bw"] = gpu.mem_bw;
    j["mem_efficiency"] = gpu.mem_efficiency;
    j["total_cus"] = gpu.total_cus;
    j["reserved_cus"] = gpu.reserved_cus;
    j["sigma"] = gpu.sigma;
    j["memory_contention"] = gpu.memory_contention;
    return j.dump();
}

}  // namespace pimjitq::perf
