// SPDX-License-Identifier: Apache-2.0
//
// Analytical GPU timing, JIT-Q slack, memory-capacity accounting and the
// training-throughput-loss estimate.
//
// Durations are integer picoseconds; reports print integer nanoseconds.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pimjitq/catalog.hpp"
#include "pimjitq/kernelgen.hpp"
#include "pimjitq/mxfmt.hpp"
#include "pimjitq/pim.hpp"

namespace pimjitq::perf {

struct GpuConfig {
    // Dense matrix throughput by compute format name (FLOP/s).
    std::map<std::string, double> peak_flops;
    double mem_bw = 2457.6e9;  // B/s, four stacks
    double mem_efficiency = 0.9;
    int total_cus = 104;
    int reserved_cus = 16;
    double sigma = 104.0 / 88.0;  // interference slowdown of overlapped compute
    double memory_contention = 1.0;

    static GpuConfig defaults();
    double peak(std::string_view fmt) const;
    void validate() const;
};

// Bytes per element of a compute format (MX formats amortize shared exponents).
double element_bytes(std::string_view fmt);

struct TrainingSetup {
    mx::ScalarFormat master = mx::kBF16;
    mx::ScalarFormat gradient = mx::kFP8E4M3;
    int activation_bits = 8;  // stored activations (FP8)
    mx::MxFormat mx = mx::kMX6;
    int weight_copies = 2;  // row- and column-quantized copies in the baseline
    double c_act = 34.0;    // bytes per token, hidden unit and layer at 16 bits
    int jitq_buffer_blocks = 1;
    kernelgen::Variant variant = kernelgen::Variant::StridedOpt;

    // BF16 master keeps one prepared block; FP32 master prepares two ahead.
    static TrainingSetup with(const mx::ScalarFormat& master, const mx::MxFormat& fmt);

    int fixed_bits_per_param() const;  // master + optimizer (2x master) + gradient
    int lp_bits_per_param() const { return mx.mantissa_bits + 2; }
};

struct GemmCost {
    int64_t compute_ps = 0;
    int64_t memory_ps = 0;
    int64_t time_ps() const { return compute_ps > memory_ps ? compute_ps : memory_ps; }
    bool compute_bound() const { return compute_ps >= memory_ps; }
};

GemmCost gemm_cost(int64_t M, int64_t N, int64_t K, std::string_view fmt, const GpuConfig& gpu);
int64_t gemm_time_ps(int64_t M, int64_t N, int64_t K, std::string_view fmt,
                     const GpuConfig& gpu);

struct BlockTimes {
    int64_t fwd_ps = 0;
    int64_t bwd_ps = 0;
    int64_t compute_bound_ps = 0;  // part of fwd spent in compute-bound GEMMs
    int64_t memory_bound_ps = 0;
};

BlockTimes block_times(const catalog::LlmConfig& m, const GpuConfig& gpu, std::string_view fmt);

// Shape used to quantize a block's weights: the four weight matrices of one
// device side by side, H rows by 12H/TP columns (rounded up to 16).
std::pair<std::size_t, std::size_t> block_weight_shape(const catalog::LlmConfig& m);

struct PimBlockTime {
    kernelgen::QuantTime row;
    kernelgen::QuantTime column;
};

// Memoized: the kernel is regenerated only for new (shape, format, variant, hw).
PimBlockTime pim_block_time(const catalog::LlmConfig& m, const pim::HwConfig& hw,
                            const TrainingSetup& s);

struct SlackResult {
    int64_t gpu_fwd_ps = 0;
    int64_t gpu_bwd_ps = 0;
    int64_t pim_row_ps = 0;
    int64_t pim_col_ps = 0;
    // PIM time over GPU time per phase: forward uses the row-quantized copy,
    // backward the column-quantized one.
    double fwd_ratio = 0;
    double bwd_ratio = 0;

    double ratio() const { return fwd_ratio > bwd_ratio ? fwd_ratio : bwd_ratio; }
    double gpu_over_pim() const { return 1.0 / ratio(); }
};

SlackResult jitq_slack(const catalog::LlmConfig& m, const GpuConfig& gpu,
                       const pim::HwConfig& hw, const TrainingSetup& s);

struct CapacityBreakdown {
    double master = 0;
    double optimizer = 0;
    double gradients = 0;
    double lp_weights = 0;  // baseline low-precision copies
    double activations = 0;
    double jitq_scratch = 0;

    double baseline_total() const {
        return master + optimizer + gradients + lp_weights + activations;
    }
    double jitq_total() const { return master + optimizer + gradients + activations + jitq_scratch; }
    double savings_pct() const { return 100.0 * (lp_weights - jitq_scratch) / baseline_total(); }
};

// Bytes held by one tensor-parallel shard across all layers.
CapacityBreakdown capacity(const catalog::LlmConfig& m, const TrainingSetup& s,
                           bool include_activations = true);
// Savings as the number of blocks per device grows and activations vanish.
double capacity_limit_pct(const TrainingSetup& s);

struct LossResult {
    double loss_pct = 0;
    int64_t baseline_iter_ps = 0;
    int64_t inflated_iter_ps = 0;
    int64_t stall_ps = 0;  // per block, both phases
    double overlap_fraction = 0;  // overlapped share of GPU block time
};

LossResult throughput_loss(const catalog::LlmConfig& m, const GpuConfig& gpu,
                           const pim::HwConfig& hw, const TrainingSetup& s);

// Smallest sigma in [1, 2] whose suite-average loss reaches `target_pct`.
double calibrate_sigma(const std::vector<catalog::LlmConfig>& models, GpuConfig gpu,
                       const pim::HwConfig& hw, const TrainingSetup& s, double target_pct);

// JSON overrides for the configuration structs (unknown keys are errors).
pim::HwConfig hw_from_json(std::string_view text, pim::HwConfig base = {});
GpuConfig gpu_from_json(std::string_view text, GpuConfig base = GpuConfig::defaults());
std::string hw_to_json(const pim::HwConfig& hw);
std::string gpu_to_json(const GpuConfig& gpu);

}  // namespace pimjitq::perf
