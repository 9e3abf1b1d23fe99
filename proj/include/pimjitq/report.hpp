// SPDX-License-Identifier: Apache-2.0
//
// Metric sweeps over (model, format, variant) and their versioned reports.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pimjitq/catalog.hpp"
#include "pimjitq/perfmodel.hpp"

namespace pimjitq::perf {

inline constexpr std::string_view kMetricsSchema = "pimjitq.metrics/1";

struct SweepSpec {
    std::vector<std::string> models;
    std::vector<std::string> formats{"MX6"};
    std::vector<std::string> variants{"strided-opt"};
    std::string master = "BF16";
};

struct MetricsRow {
    std::string model;
    std::string format;
    std::string variant;
    std::string src;
    int64_t gpu_fwd_ns = 0;
    int64_t gpu_bwd_ns = 0;
    int64_t pim_row_ns = 0;
    int64_t pim_col_ns = 0;
    double slack_ratio_fwd = 0;  // PIM time / GPU time; below 1 means PIM keeps up
    double slack_ratio_bwd = 0;
    double slack_ratio = 0;      // worse of the two phases
    double gpu_over_pim = 0;
    double capacity_savings_pct = 0;
    double capacity_limit_pct = 0;
    double loss_pct = 0;
    int64_t stall_ns = 0;
    // Row-kernel command counts by bucket.
    uint64_t lane_shift_cmds = 0;
    uint64_t bit_shift_cmds = 0;
    uint64_t other_cmds = 0;
    // Row time over the tiled row time; 0 when tiled is not in the sweep.
    double row_time_vs_tiled = 0;
};

struct MetricsReport {
    std::string schema{kMetricsSchema};
    std::string hw_json;
    std::string gpu_json;
    std::vector<MetricsRow> rows;  // sorted by (model, format, variant)

    std::string to_json() const;
    // Long format: one line per (model, format, variant, metric).
    std::string to_csv() const;
    static MetricsReport from_json(std::string_view text);
};

// Points are evaluated concurrently and merged in sort-key order.
MetricsReport run_sweep(const SweepSpec& spec, const catalog::Catalog& cat, const GpuConfig& gpu,
                        const pim::HwConfig& hw);

struct SummaryRow {
    std::string format;
    std::string variant;
    std::string src;
    std::size_t models = 0;
    double avg_gpu_over_pim = 0;
    double min_gpu_over_pim = 0;
    double avg_loss_pct = 0;
    double max_loss_pct = 0;
    double avg_savings_pct = 0;
};

// Suite averages per (format, variant, src).
std::vector<SummaryRow> summarize(const MetricsReport& r);
std::string summary_json(const std::vector<SummaryRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);

}  // namespace pimjitq::perf
