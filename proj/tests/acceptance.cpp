// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pimjitq/catalog.hpp"
#include "pimjitq/cli.hpp"
#include "pimjitq/io.hpp"
#include "pimjitq/kernelgen.hpp"
#include "pimjitq/perfmodel.hpp"
#include "pimjitq/pim.hpp"

using namespace pimjitq;
using kernelgen::Variant;
using mx::QuantAxis;

namespace {

// Tolerances.
constexpr int kTensorsPerCombination = 1000;
constexpr double kCapacityTolPp = 0.2;
constexpr double kStridedLo = 0.44, kStridedHi = 0.60;
constexpr double kOptLo = 0.22, kOptHi = 0.38;
constexpr double kColRowLo = 1.10, kColRowHi = 1.30;
constexpr double kSlackMinMX4 = 1.3, kSlackMinMX6 = 2.0, kSlackMinMX9 = 3.0;
constexpr double kLossTargetPct = 1.6;  // suite average used to pin sigma
constexpr double kLossAvgLo = 0.5, kLossAvgHi = 3.0, kLossMaxPct = 7.0;
constexpr int kRandomStreams = 10000;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const catalog::Catalog& cat() {
    static const catalog::Catalog c = catalog::Catalog::builtin();
    return c;
}

std::vector<catalog::LlmConfig> evaluated() {
    std::vector<catalog::LlmConfig> out;
    for (const auto& m : cat().models()) {
        if (m.name.rfind("future", 0) != 0) out.push_back(m);
    }
    return out;
}

pim::HwConfig small_hw() {
    pim::HwConfig c;
    c.stacks = 1;
    c.pchs_per_stack = 2;
    c.banks_per_pch = 4;
    c.banks_per_stack = 8;
    c.pim_units_per_stack = 4;
    return c;
}

double suite_avg(const std::vector<catalog::LlmConfig>& models,
                 const std::function<double(const catalog::LlmConfig&)>& f) {
    double s = 0;
    for (const auto& m : models) s += f(m);
    return s / double(models.size());
}

Outcome oracle_equivalence() {
    const auto hw = small_hw();
    Outcome o;
    std::size_t runs = 0;
    uint64_t seed = 1;
    for (const auto* src : {&mx::kBF16, &mx::kFP32}) {
        for (auto v : {Variant::Tiled, Variant::Strided, Variant::StridedOpt}) {
            for (const auto* f : {&mx::kMX4, &mx::kMX6, &mx::kMX9}) {
                for (auto axis : {QuantAxis::Row, QuantAxis::Column}) {
                    const auto spec = kernelgen::make_spec(v, *src, *f, axis, 64, 64, hw);
                    for (int n = 0; n < kTensorsPerCombination; ++n, ++seed, ++runs) {
                        const auto r =
                            kernelgen::verify_kernel(spec, io::random_matrix(64, 64, *src, seed));
                        if (!r.pass && o.pass) {
                            o.pass = false;
                            o.detail = "mismatch: " + std::string(kernelgen::to_string(v)) + " " +
                                       std::string(src->name) + "->" + std::string(f->name) +
                                       " seed " + std::to_string(seed) + "; ";
                        }
                    }
                }
            }
        }
    }
    o.detail += std::to_string(runs) + " tensors over 36 combinations";
    return o;
}

Outcome capacity_limits() {
    struct Case {
        const mx::MxFormat* f;
        int copies;
        double expected;
    };
    const Case cases[] = {{&mx::kMX4, 2, 12.5}, {&mx::kMX6, 2, 17.6}, {&mx::kMX9, 2, 24.2},
                          {&mx::kMX4, 1, 6.6},  {&mx::kMX6, 1, 9.7},  {&mx::kMX9, 1, 13.8}};
    Outcome o;
    for (const auto& c : cases) {
        auto s = perf::TrainingSetup::with(mx::kBF16, *c.f);
        s.weight_copies = c.copies;
        const double got = perf::capacity_limit_pct(s);
        const double closed = 100.0 * c.copies * (c.f->mantissa_bits + 2) /
                              (56.0 + c.copies * (c.f->mantissa_bits + 2));
        o.pass = o.pass && std::fabs(got - c.expected) <= kCapacityTolPp &&
                 std::fabs(got - closed) < 1e-9;
        o.detail += std::string(c.f->name) + "x" + std::to_string(c.copies) + "=" +
                    fmt("%.2f%% ", got);
    }
    return o;
}

Outcome mapping_comparison() {
    const pim::HwConfig hw;
    const auto [rows, cols] = perf::block_weight_shape(cat().get("gpt-3-175B"));
    auto t = [&](Variant v) {
        return kernelgen::quant_time(
            kernelgen::make_spec(v, mx::kBF16, mx::kMX6, QuantAxis::Row, rows, cols, hw));
    };
    const auto tiled = t(Variant::Tiled), strided = t(Variant::Strided), opt = t(Variant::StridedOpt);
    const double rs = double(strided.total_ps) / double(tiled.total_ps);
    const double ro = double(opt.total_ps) / double(tiled.total_ps);
    Outcome o;
    o.pass = rs >= kStridedLo && rs <= kStridedHi && ro >= kOptLo && ro <= kOptHi &&
             strided.histogram.lane_shift == 0 && opt.histogram.lane_shift == 0 &&
             opt.total_ps < strided.total_ps && strided.total_ps < tiled.total_ps;
    o.detail = std::to_string(rows) + "x" + std::to_string(cols) + " strided/tiled=" +
               fmt("%.3f", rs) + " strided-opt/tiled=" + fmt("%.3f", ro);
    return o;
}

Outcome column_vs_row() {
    const pim::HwConfig hw;
    const auto [rows, cols] = perf::block_weight_shape(cat().get("gpt-3-175B"));
    auto t = [&](QuantAxis a) {
        return kernelgen::quant_time(
                   kernelgen::make_spec(Variant::StridedOpt, mx::kBF16, mx::kMX6, a, rows, cols, hw))
            .total_ps;
    };
    const int64_t row = t(QuantAxis::Row), col = t(QuantAxis::Column);
    const double r = double(col) / double(row);
    Outcome o;
    o.pass = r >= kColRowLo && r <= kColRowHi && col >= row;
    o.detail = "strided-opt column/row=" + fmt("%.3f", r);
    return o;
}

Outcome slack() {
    const auto gpu = perf::GpuConfig::defaults();
    const pim::HwConfig hw;
    const auto models = evaluated();
    auto g_over_p = [&](const catalog::LlmConfig& m, const mx::MxFormat& f) {
        return perf::jitq_slack(m, gpu, hw, perf::TrainingSetup::with(mx::kBF16, f)).gpu_over_pim();
    };
    const double a4 = suite_avg(models, [&](auto& m) { return g_over_p(m, mx::kMX4); });
    const double a6 = suite_avg(models, [&](auto& m) { return g_over_p(m, mx::kMX6); });
    const double a9 = suite_avg(models, [&](auto& m) { return g_over_p(m, mx::kMX9); });
    bool ordered = true, grows = true;
    for (const auto& m : models) {
        const double r4 = g_over_p(m, mx::kMX4), r6 = g_over_p(m, mx::kMX6), r9 = g_over_p(m, mx::kMX9);
        ordered = ordered && r9 >= r6 && r6 >= r4;
        auto more = m;
        more.B *= 2;
        grows = grows && g_over_p(more, mx::kMX6) > r6;
    }
    Outcome o;
    o.pass = a6 >= kSlackMinMX6 && a4 >= kSlackMinMX4 && a9 >= kSlackMinMX9 && ordered && grows;
    o.detail = "avg GPU/PIM MX4=" + fmt("%.3f", a4) + " MX6=" + fmt("%.3f", a6) +
               " MX9=" + fmt("%.3f", a9) + (ordered ? " ordered" : " NOT ordered") +
               (grows ? ", grows with SL*B" : ", does NOT grow with SL*B");
    return o;
}

Outcome fp32_master() {
    const auto gpu = perf::GpuConfig::defaults();
    const pim::HwConfig hw;
    const auto models = evaluated();
    auto ratio = [&](const catalog::LlmConfig& m, const mx::MxFormat& f) {
        return perf::jitq_slack(m, gpu, hw, perf::TrainingSetup::with(mx::kFP32, f)).ratio();
    };
    const double r4 = suite_avg(models, [&](auto& m) { return ratio(m, mx::kMX4); });
    const double r6 = suite_avg(models, [&](auto& m) { return ratio(m, mx::kMX6); });
    const double r9 = suite_avg(models, [&](auto& m) { return ratio(m, mx::kMX9); });
    const double g4 = suite_avg(models, [&](auto& m) { return 1.0 / ratio(m, mx::kMX4); });

    // Depth 2 (prepare block i+2) against depth 1 for FP32 -> MX6.
    bool depth2_clean = true, depth1_stalls = false;
    for (const auto& m : models) {
        auto s = perf::TrainingSetup::with(mx::kFP32, mx::kMX6);
        depth2_clean = depth2_clean && perf::throughput_loss(m, gpu, hw, s).stall_ps == 0;
        s.jitq_buffer_blocks = 1;
        depth1_stalls = depth1_stalls || perf::throughput_loss(m, gpu, hw, s).stall_ps > 0;
    }
    Outcome o;
    o.pass = r4 > 1 && r6 > 1 && r9 < 1 && depth2_clean && depth1_stalls && g4 >= 0.5;
    o.detail = "avg PIM/GPU MX4=" + fmt("%.3f", r4) + " MX6=" + fmt("%.3f", r6) +
               " MX9=" + fmt("%.3f", r9) + "; avg GPU/PIM MX4=" + fmt("%.3f", g4) +
               "; depth-2 MX6 stall-free=" + (depth2_clean ? "yes" : "no") +
               ", depth-1 stalls=" + (depth1_stalls ? "yes" : "no");
    return o;
}

Outcome throughput_loss() {
    const pim::HwConfig hw;
    const auto models = evaluated();
    auto gpu = perf::GpuConfig::defaults();
    const double default_sigma = gpu.sigma;
    auto loss = [&](const catalog::LlmConfig& m, const mx::MxFormat& f) {
        return perf::throughput_loss(m, gpu, hw, perf::TrainingSetup::with(mx::kBF16, f)).loss_pct;
    };
    const double avg_default = suite_avg(models, [&](auto& m) { return loss(m, mx::kMX6); });

    gpu.sigma = perf::calibrate_sigma(models, gpu, hw, perf::TrainingSetup::with(mx::kBF16, mx::kMX6),
                                      kLossTargetPct);
    const double calibrated = gpu.sigma;
    double avg6 = 0, max6 = 0, avg4 = 0, avg9 = 0;
    bool ordered = true;
    for (const auto& m : models) {
        const double l4 = loss(m, mx::kMX4), l6 = loss(m, mx::kMX6), l9 = loss(m, mx::kMX9);
        avg4 += l4;
        avg6 += l6;
        avg9 += l9;
        max6 = std::max(max6, l6);
        ordered = ordered && l9 <= l6 && l6 <= l4;
    }
    const double n = double(models.size());
    avg4 /= n;
    avg6 /= n;
    avg9 /= n;

    bool zero_at_one = true;
    gpu.sigma = 1.0;
    for (const auto& m : models) {
        for (const auto* f : {&mx::kMX4, &mx::kMX6, &mx::kMX9}) {
            zero_at_one = zero_at_one && loss(m, *f) == 0.0;
        }
    }
    Outcome o;
    o.pass = avg6 >= kLossAvgLo && avg6 <= kLossAvgHi && max6 <= kLossMaxPct && ordered &&
             zero_at_one;
    o.detail = "sigma=" + fmt("%.4f", default_sigma) + " gives MX6 avg " + fmt("%.2f%%", avg_default) +
               "; sigma=" + fmt("%.4f", calibrated) + " gives MX6 avg " + fmt("%.2f%%", avg6) + " max " +
               fmt("%.2f%%", max6) + ", MX4 avg " + fmt("%.2f%%", avg4) + ", MX9 avg " +
               fmt("%.2f%%", avg9) + (ordered ? ", ordered" : ", NOT ordered") +
               (zero_at_one ? ", sigma=1 -> 0" : ", sigma=1 -> nonzero");
    return o;
}

Outcome timing_engine() {
    const pim::HwConfig cfg;
    Outcome o;
    pim::CommandStream one_row;
    for (int i = 0; i < 10; ++i) one_row.cmds.push_back(pim::cmd::load(0, {0, 5, uint16_t(i)}, 16));
    const int64_t t1 = pim::time_stream(one_row, cfg).total_ps;

    auto overlap = [&](uint8_t bank, uint32_t row) {
        pim::CommandStream s;
        s.cmds.push_back(pim::cmd::load(0, {0, 0, 0}, 16));
        for (int i = 0; i < 15; ++i) s.cmds.push_back(pim::cmd::add(1, 1, 0, 16));
        s.cmds.push_back(pim::cmd::load(2, {bank, row, 0}, 16));
        return pim::time_stream(s, cfg).total_ps;
    };
    const int64_t same = overlap(0, 1), other = overlap(1, 0);

    std::mt19937_64 rng(2024);
    bool props = true;
    for (int n = 0; n < kRandomStreams && props; ++n) {
        pim::CommandStream s;
        const int len = 1 + int(rng() % 64);
        for (int i = 0; i < len; ++i) {
            const int r = int(rng() % 16);
            const pim::BankAddr a{uint8_t(rng() % 2), uint32_t(rng() % 4), uint16_t(rng() % 32)};
            s.cmds.push_back(rng() % 3 == 0 ? pim::cmd::add(r, r, 0, 16) : pim::cmd::load(r, a, 16));
        }
        pim::TimingEngine eng(cfg);
        int64_t prev = 0;
        for (const auto& c : s.cmds) {
            eng.issue(c);
            props = props && eng.now_ps() >= prev + cfg.tccdl_ps();
            prev = eng.now_ps();
        }
        props = props && eng.now_ps() >= int64_t(len) * cfg.tccdl_ps() &&
                eng.now_ps() == pim::time_stream(s, cfg).total_ps;
    }
    o.pass = t1 == 81300 && same - other == cfg.row_switch_ps() && props;
    o.detail = "single row " + std::to_string(t1) + " ps, overlap saves " +
               std::to_string(same - other) + " ps, " + std::to_string(kRandomStreams) +
               " random streams " + (props ? "ok" : "violated");
    return o;
}

Outcome determinism() {
    auto run = [](std::vector<std::string> args) {
        std::vector<const char*> argv{"pimjitq"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(int(argv.size()), argv.data(), out, err);
        return std::make_pair(code, out.str());
    };
    const std::vector<std::string> sweep{"sweep", "--models", "all", "--formats", "MX4,MX6,MX9",
                                         "--variants", "tiled,strided,strided-opt"};
    bool same = true;
    std::size_t bytes = 0;
    for (const char* f : {"csv", "json"}) {
        auto args = sweep;
        args.insert(args.begin(), {"--format", f});
        const auto a = run(args), b = run(args);
        same = same && a.first == 0 && a == b && !a.second.empty();
        bytes += a.second.size();
    }
    Outcome o;
    o.pass = same;
    o.detail = "two CSV and two JSON sweeps, " + std::to_string(bytes) + " bytes per pair " +
               (same ? "identical" : "differ");
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*fn)();
    };
    const Criterion criteria[] = {
        {"oracle equivalence", oracle_equivalence},
        {"capacity limits", capacity_limits},
        {"mapping comparison", mapping_comparison},
        {"column vs row", column_vs_row},
        {"slack", slack},
        {"FP32 master", fp32_master},
        {"throughput loss", throughput_loss},
        {"timing engine", timing_engine},
        {"determinism", determinism},
    };
    int failed = 0;
    int i = 1;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", i++, c.name,
                    o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
