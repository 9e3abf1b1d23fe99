// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/report.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <map>
#include <tuple>

#include "json.hpp"
#include "pimjitq/error.hpp"

namespace pimjitq::perf {

namespace {

using ojson = nlohmann::ordered_json;

int64_t ps_to_ns(int64_t ps) { return (ps + 500) / 1000; }

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

auto sort_key(const MetricsRow& r) { return std::tie(r.model, r.format, r.variant); }

struct Point {
    const catalog::LlmConfig* model;
    std::string format;
    kernelgen::Variant variant;
};

MetricsRow evaluate(const Point& p, const mx::ScalarFormat& master, const GpuConfig& gpu,
                    const pim::HwConfig& hw) {
    TrainingSetup s = TrainingSetup::with(master, mx::mx_format(p.format));
    s.variant = p.variant;
    const SlackResult sl = jitq_slack(*p.model, gpu, hw, s);
    const PimBlockTime pt = pim_block_time(*p.model, hw, s);
    const LossResult loss = throughput_loss(*p.model, gpu, hw, s);

    MetricsRow r;
    r.model = p.model->name;
    r.format = p.format;
    r.variant = std::string(kernelgen::to_string(p.variant));
    r.src = std::string(master.name);
    r.gpu_fwd_ns = ps_to_ns(sl.gpu_fwd_ps);
    r.gpu_bwd_ns = ps_to_ns(sl.gpu_bwd_ps);
    r.pim_row_ns = ps_to_ns(sl.pim_row_ps);
    r.pim_col_ns = ps_to_ns(sl.pim_col_ps);
    r.slack_ratio_fwd = sl.fwd_ratio;
    r.slack_ratio_bwd = sl.bwd_ratio;
    r.slack_ratio = sl.ratio();
    r.gpu_over_pim = sl.gpu_over_pim();
    r.capacity_savings_pct = capacity(*p.model, s).savings_pct();
    r.capacity_limit_pct = capacity_limit_pct(s);
    r.loss_pct = loss.loss_pct;
    r.stall_ns = ps_to_ns(loss.stall_ps);
    r.lane_shift_cmds = pt.row.histogram.lane_shift;
    r.bit_shift_cmds = pt.row.histogram.bit_shift;
    r.other_cmds = pt.row.histogram.other;
    return r;
}

// (name, value) pairs in report order; integers keep integer formatting.
std::vector<std::pair<std::string, ojson>> metrics_of(const MetricsRow& r) {
    std::vector<std::pair<std::string, ojson>> m = {
        {"gpu_fwd_ns", r.gpu_fwd_ns},
        {"gpu_bwd_ns", r.gpu_bwd_ns},
        {"pim_row_ns", r.pim_row_ns},
        {"pim_col_ns", r.pim_col_ns},
        {"slack_ratio_fwd", r.slack_ratio_fwd},
        {"slack_ratio_bwd", r.slack_ratio_bwd},
        {"slack_ratio", r.slack_ratio},
        {"gpu_over_pim", r.gpu_over_pim},
        {"capacity_savings_pct", r.capacity_savings_pct},
        {"capacity_limit_pct", r.capacity_limit_pct},
        {"loss_pct", r.loss_pct},
        {"stall_ns", r.stall_ns},
        {"lane_shift_cmds", r.lane_shift_cmds},
        {"bit_shift_cmds", r.bit_shift_cmds},
        {"other_cmds", r.other_cmds},
    };
    if (r.row_time_vs_tiled > 0) m.emplace_back("row_time_vs_tiled", r.row_time_vs_tiled);
    return m;
}

std::string csv_value(const ojson& v) {
    if (v.is_number_float()) return fmt_double(v.get<double>());
    return v.dump();
}

}  // namespace

MetricsReport run_sweep(const SweepSpec& spec, const catalog::Catalog& cat, const GpuConfig& gpu,
                        const pim::HwConfig& hw) {
    if (spec.models.empty()) throw Error("sweep needs at least one model");
    if (spec.formats.empty()) throw Error("sweep needs at least one format");
    if (spec.variants.empty()) throw Error("sweep needs at least one variant");
    gpu.validate();
    hw.validate();
    const mx::ScalarFormat& master = mx::scalar_format(spec.master);
    if (master != mx::kBF16 && master != mx::kFP32) {
        throw Error("master format must be BF16 or FP32");
    }

    std::vector<Point> points;
    for (const auto& name : spec.models) {
        const catalog::LlmConfig& m = cat.get(name);
        for (const auto& f : spec.formats) {
            const std::string fname(mx::mx_format(f).name);
            for (const auto& v : spec.variants) {
                points.push_back({&m, fname, kernelgen::parse_variant(v)});
            }
        }
    }

    std::vector<std::future<MetricsRow>> jobs;
    jobs.reserve(points.size());
    for (const auto& p : points) {
        jobs.push_back(std::async(std::launch::async,
                                  [&, p] { return evaluate(p, master, gpu, hw); }));
    }
    MetricsReport rep;
    rep.hw_json = hw_to_json(hw);
    rep.gpu_json = gpu_to_json(gpu);
    for (auto& j : jobs) rep.rows.push_back(j.get());

    std::sort(rep.rows.begin(), rep.rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) { return sort_key(a) < sort_key(b); });
    rep.rows.erase(std::unique(rep.rows.begin(), rep.rows.end(),
                               [](const MetricsRow& a, const MetricsRow& b) {
                                   return sort_key(a) == sort_key(b);
                               }),
                   rep.rows.end());

    std::map<std::pair<std::string, std::string>, int64_t> tiled;
    for (const auto& r : rep.rows) {
        if (r.variant == "tiled") tiled[{r.model, r.format}] = r.pim_row_ns;
    }
    for (auto& r : rep.rows) {
        auto it = tiled.find({r.model, r.format});
        if (it != tiled.end() && it->second > 0) {
            r.row_time_vs_tiled = double(r.pim_row_ns) / double(it->second);
        }
    }
    return rep;
}

std::string MetricsReport::to_json() const {
    ojson j;
    j["schema"] = schema;
    j["hw"] = hw_json.empty() ? ojson::object() : ojson::parse(hw_json);
    j["gpu"] = gpu_json.empty() ? ojson::object() : ojson::parse(gpu_json);
    j["rows"] = ojson::array();
    for (const auto& r : rows) {
        ojson e;
        e["model"] = r.model;
        e["format"] = r.format;
        e["variant"] = r.variant;
        e["src"] = r.src;
        for (auto& [k, v] : metrics_of(r)) e[k] = v;
        j["rows"].push_back(e);
    }
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
    std::string out = "# schema=" + schema + "\n";
    out += "model,format,variant,src,metric,value\n";
    for (const auto& r : rows) {
        const std::string prefix = r.model + "," + r.format + "," + r.variant + "," + r.src + ",";
        for (const auto& [k, v] : metrics_of(r)) out += prefix + k + "," + csv_value(v) + "\n";
    }
    return out;
}

MetricsReport MetricsReport::from_json(std::string_view text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("metrics report is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("schema", std::string{}) != kMetricsSchema) {
        throw Error("not a " + std::string(kMetricsSchema) + " report");
    }
    MetricsReport rep;
    if (j.contains("hw")) rep.hw_json = j["hw"].dump();
    if (j.contains("gpu")) rep.gpu_json = j["gpu"].dump();
    try {
        for (const auto& e : j.at("rows")) {
            MetricsRow r;
            r.model = e.at("model").get<std::string>();
            r.format = e.at("format").get<std::string>();
            r.variant = e.at("variant").get<std::string>();
            r.src = e.at("src").get<std::string>();
            r.gpu_fwd_ns = e.at("gpu_fwd_ns").get<int64_t>();
            r.gpu_bwd_ns = e.at("gpu_bwd_ns").get<int64_t>();
            r.pim_row_ns = e.at("pim_row_ns").get<int64_t>();
            r.pim_col_ns = e.at("pim_col_ns").get<int64_t>();
            r.slack_ratio_fwd = e.at("slack_ratio_fwd").get<double>();
            r.slack_ratio_bwd = e.at("slack_ratio_bwd").get<double>();
            r.slack_ratio = e.at("slack_ratio").get<double>();
            r.gpu_over_pim = e.at("gpu_over_pim").get<double>();
            r.capacity_savings_pct = e.at("capacity_savings_pct").get<double>();
            r.capacity_limit_pct = e.at("capacity_limit_pct").get<double>();
            r.loss_pct = e.at("loss_pct").get<double>();
            r.stall_ns = e.at("stall_ns").get<int64_t>();
            r.lane_shift_cmds = e.at("lane_shift_cmds").get<uint64_t>();
            r.bit_shift_cmds = e.at("bit_shift_cmds").get<uint64_t>();
            r.other_cmds = e.at("other_cmds").get<uint64_t>();
            r.row_time_vs_tiled = e.value("row_time_vs_tiled", 0.0);
            rep.rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed metrics row: ") + e.what());
    }
    return rep;
}

std::vector<SummaryRow> summarize(const MetricsReport& rep) {
    std::map<std::tuple<std::string, std::string, std::string>, SummaryRow> groups;
    for (const auto& r : rep.rows) {
        SummaryRow& s = groups[{r.format, r.variant, r.src}];
        if (s.models == 0) {
            s.format = r.format;
            s.variant = r.variant;
            s.src = r.src;
            s.min_gpu_over_pim = r.gpu_over_pim;
        }
        ++s.models;
        s.avg_gpu_over_pim += r.gpu_over_pim;
        s.min_gpu_over_pim = std::min(s.min_gpu_over_pim, r.gpu_over_pim);
        s.avg_loss_pct += r.loss_pct;
        s.max_loss_pct = std::max(s.max_loss_pct, r.loss_pct);
        s.avg_savings_pct += r.capacity_savings_pct;
    }
    std::vector<SummaryRow> out;
    for (auto& [k, s] : groups) {
        const double n = double(s.models);
        s.avg_gpu_over_pim /= n;
        s.avg_loss_pct /= n;
        s.avg_savings_pct /= n;
        out.push_back(s);
    }
    return out;
}

std::string summary_json(const std::vector<SummaryRow>& rows) {
    ojson j;
    j["schema"] = "pimjitq.summary/1";
    j["groups"] = ojson::array();
    for (const auto& s : rows) {
        j["groups"].push_back({{"format", s.format},
                               {"variant", s.variant},
                               {"src", s.src},
                               {"models", s.models},
                               {"avg_gpu_over_pim", s.avg_gpu_over_pim},
                               {"min_gpu_over_pim", s.min_gpu_over_pim},
                               {"avg_loss_pct", s.avg_loss_pct},
                               {"max_loss_pct", s.max_loss_pct},
                               {"avg_savings_pct", s.avg_savings_pct}});
    }
    return j.dump(2) + "\n";
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "# schema=pimjitq.summary/1\n";
    out += "format,variant,src,models,avg_gpu_over_pim,min_gpu_over_pim,avg_loss_pct,"
           "max_loss_pct,avg_savings_pct\n";
    for (const auto& s : rows) {
        out += s.format + "," + s.variant + "," + s.src + "," + std::to_string(s.models) + "," +
               fmt_double(s.avg_gpu_over_pim) + "," + fmt_double(s.min_gpu_over_pim) + "," +
               fmt_double(s.avg_loss_pct) + "," + fmt_double(s.max_loss_pct) + "," +
               fmt_double(s.avg_savings_pct) + "\n";
    }
    return out;
}

}  // namespace pimjitq::perf
