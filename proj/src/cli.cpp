// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pimjitq/catalog.hpp"
#include "pimjitq/error.hpp"
#include "pimjitq/io.hpp"
#include "pimjitq/kernelgen.hpp"
#include "pimjitq/perfmodel.hpp"
#include "pimjitq/placement.hpp"
#include "pimjitq/report.hpp"

namespace pimjitq::cli {

namespace {

using ojson = nlohmann::ordered_json;

struct Globals {
    std::string hw_path;
    std::string gpu_path;
    std::string catalog_path;
    uint64_t seed = 0;
    std::string out_path;
    std::string format = "json";
};

// Everything that selects one quantization kernel.
struct KernelArgs {
    std::string dims = "64x64";
    std::string model;
    std::string src = "BF16";
    std::string to = "MX6";
    std::string variant = "strided-opt";
    std::string axis = "row";
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

pim::HwConfig load_hw(const Globals& g) {
    if (g.hw_path.empty()) return {};
    return perf::hw_from_json(read_file(g.hw_path));
}

perf::GpuConfig load_gpu(const Globals& g) {
    if (g.gpu_path.empty()) return perf::GpuConfig::defaults();
    return perf::gpu_from_json(read_file(g.gpu_path));
}

catalog::Catalog load_catalog(const Globals& g) {
    catalog::Catalog c = catalog::Catalog::builtin();
    if (!g.catalog_path.empty()) c.merge(catalog::Catalog::load(g.catalog_path));
    return c;
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& s) {
    const auto x = s.find('x');
    std::size_t r = 0, c = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        std::size_t used = 0;
        r = std::stoull(s.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(s);
        c = std::stoull(s.substr(x + 1), &used);
        if (used != s.size() - x - 1) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
        throw Error("dims must look like ROWSxCOLS, got '" + s + "'");
    }
    return {r, c};
}

bool is_mx_name(const std::string& s) { return s.rfind("MX", 0) == 0; }

kernelgen::KernelSpec make_kernel_spec(const KernelArgs& k, const Globals& g,
                                       const pim::HwConfig& hw) {
    std::size_t rows, cols;
    if (!k.model.empty()) {
        std::tie(rows, cols) = perf::block_weight_shape(load_catalog(g).get(k.model));
    } else {
        std::tie(rows, cols) = parse_dims(k.dims);
    }
    const auto v = kernelgen::parse_variant(k.variant);
    const auto& src = mx::scalar_format(k.src);
    if (is_mx_name(k.to)) {
        return kernelgen::make_spec(v, src, mx::mx_format(k.to), mx::parse_axis(k.axis), rows,
                                    cols, hw);
    }
    return kernelgen::make_scalar_spec(v, src, mx::scalar_format(k.to), rows, cols, hw);
}

void add_kernel_options(CLI::App* sub, KernelArgs& k) {
    sub->add_option("--dims", k.dims, "Tensor shape ROWSxCOLS")->capture_default_str();
    sub->add_option("--model", k.model, "Use the per-block weight shape of a catalog model");
    sub->add_option("--src", k.src, "Source scalar format (BF16, FP32)")->capture_default_str();
    sub->add_option("--to", k.to, "Target: MX4/MX6/MX9 or a narrower scalar format")
        ->capture_default_str();
    sub->add_option("--variant", k.variant, "tiled, strided or strided-opt")->capture_default_str();
    sub->add_option("--axis", k.axis, "row or column")->capture_default_str();
}

class Output {
public:
    Output(const Globals& g, std::ostream& fallback) : g_(g), fallback_(fallback) {}

    void write(const std::string& text) {
        if (g_.out_path.empty()) {
            fallback_ << text;
            return;
        }
        std::ofstream f(g_.out_path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + g_.out_path);
        f << text;
        if (!f) throw Error("write failed: " + g_.out_path);
    }

private:
    const Globals& g_;
    std::ostream& fallback_;
};

std::string kv_csv(const ojson& j) {
    std::string s = "metric,value\n";
    for (const auto& [k, v] : j.items()) {
        if (v.is_structured()) continue;
        s += k + "," + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    }
    return s;
}

std::string render(const ojson& j, const Globals& g) {
    return g.format == "csv" ? kv_csv(j) : j.dump(2) + "\n";
}

int64_t ns(int64_t ps) { return (ps + 500) / 1000; }

// ---- subcommands ----

int cmd_quantize(const Globals& g, const std::string& in, const std::string& fmt,
                 const std::string& axis, std::ostream& out) {
    if (g.out_path.empty()) throw Error("quantize needs --out");
    const mx::Matrix m = io::read_tensor(in);
    const auto q = mx::quantize_matrix(m, mx::mx_format(fmt), mx::parse_axis(axis));
    io::write_mx(g.out_path, q);
    ojson j;
    j["input"] = in;
    j["output"] = g.out_path;
    j["format"] = std::string(q.fmt.name);
    j["axis"] = std::string(mx::to_string(q.map.axis));
    j["rows"] = q.map.rows;
    j["cols"] = q.map.cols;
    j["blocks"] = q.blocks.size();
    out << render(j, g);
    return kExitOk;
}

int cmd_verify(const Globals& g, const KernelArgs& k, int count, std::ostream& out) {
    if (count < 1) throw Error("--count must be at least 1");
    const pim::HwConfig hw = load_hw(g);
    const auto spec = make_kernel_spec(k, g, hw);
    ojson j;
    j["schema"] = "pimjitq.verify/1";
    j["variant"] = std::string(kernelgen::to_string(spec.variant));
    j["src"] = std::string(spec.src.name);
    j["dst"] = k.to;
    j["axis"] = std::string(mx::to_string(spec.axis));
    j["rows"] = spec.layout.rows();
    j["cols"] = spec.layout.cols();
    j["seed"] = g.seed;
    std::size_t checked = 0;
    int passed = 0;
    ojson failure = nullptr;
    for (int i = 0; i < count; ++i) {
        const auto m = io::random_matrix(spec.layout.rows(), spec.layout.cols(), spec.src,
                                         g.seed + uint64_t(i));
        const auto r = kernelgen::verify_kernel(spec, m);
        checked += r.checked;
        if (r.pass) {
            ++passed;
        } else if (failure.is_null()) {
            failure = ojson::parse(kernelgen::verify_json(spec, r));
            failure["seed"] = g.seed + uint64_t(i);
        }
    }
    j["tensors"] = count;
    j["passed"] = passed;
    j["checked"] = checked;
    j["pass"] = passed == count;
    j["first_failure"] = failure;
    Output(g, out).write(render(j, g));
    return passed == count ? kExitOk : kExitVerifyFailed;
}

int cmd_kernel(const Globals& g, const KernelArgs& k, const std::string& layout_path,
               std::ostream& out) {
    const pim::HwConfig hw = load_hw(g);
    const auto spec = make_kernel_spec(k, g, hw);
    std::ostringstream os;
    kernelgen::emit_quant_kernel(spec, [&](const pim::PimCommand& c) {
        os << pim::format_command(c) << '\n';
    });
    Output(g, out).write(os.str());
    if (!layout_path.empty()) {
        std::ofstream f(layout_path, std::ios::trunc);
        if (!f) throw Error("cannot write " + layout_path);
        f << placement::layout_json(spec.layout) << '\n';
    }
    return kExitOk;
}

int cmd_simulate(const Globals& g, const KernelArgs& k, const std::string& trace_path,
                 std::ostream& out) {
    const pim::HwConfig hw = load_hw(g);
    const auto spec = make_kernel_spec(k, g, hw);
    const auto t = kernelgen::quant_time(spec);
    ojson j;
    j["schema"] = "pimjitq.simulate/1";
    j["variant"] = std::string(kernelgen::to_string(spec.variant));
    j["src"] = std::string(spec.src.name);
    j["dst"] = k.to;
    j["axis"] = std::string(mx::to_string(spec.axis));
    j["rows"] = spec.layout.rows();
    j["cols"] = spec.layout.cols();
    j["tiles_per_unit"] = spec.layout.tiles_per_unit();
    j["total_ns"] = ns(t.total_ps);
    j["commands"] = t.commands;
    j["row_switches"] = t.row_switches;
    j["stall_ns"] = ns(t.stall_ps);
    j["lane_shift_ns"] = ns(t.lane_shift_ps);
    j["bit_shift_ns"] = ns(t.bit_shift_ps);
    j["other_ns"] = ns(t.other_ps);
    j["lane_shift_cmds"] = t.histogram.lane_shift;
    j["bit_shift_cmds"] = t.histogram.bit_shift;
    j["other_cmds"] = t.histogram.other;
    ojson ops = ojson::object();
    for (int i = 0; i < pim::kOpcodeCount; ++i) {
        ops[std::string(pim::to_string(pim::Opcode(i)))] = t.histogram.per_opcode[std::size_t(i)];
    }
    j["opcodes"] = ops;
    Output(g, out).write(render(j, g));
    if (!trace_path.empty()) {
        const auto gen = kernelgen::gen_quant_kernel(spec);
        const auto tr = pim::time_stream(gen.stream, hw);
        std::ofstream f(trace_path, std::ios::trunc);
        if (!f) throw Error("cannot write " + trace_path);
        pim::write_trace_csv(f, tr.trace);
    }
    return kExitOk;
}

std::vector<std::string> non_empty(const std::vector<std::string>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) {
        if (!s.empty()) out.push_back(s);
    }
    return out;
}

perf::SweepSpec sweep_spec(const catalog::Catalog& cat, std::vector<std::string> models,
                           std::vector<std::string> formats, std::vector<std::string> variants,
                           const std::string& master) {
    perf::SweepSpec s;
    models = non_empty(models);
    if (models.size() == 1 && models[0] == "all") models = cat.names();
    s.models = models;
    s.formats = non_empty(formats);
    s.variants = non_empty(variants);
    s.master = master;
    return s;
}

int cmd_sweep(const Globals& g, const perf::SweepSpec& s, std::ostream& out) {
    const auto cat = load_catalog(g);
    const auto rep = perf::run_sweep(s, cat, load_gpu(g), load_hw(g));
    Output(g, out).write(g.format == "csv" ? rep.to_csv() : rep.to_json());
    return kExitOk;
}

int cmd_report(const Globals& g, const std::string& in, const perf::SweepSpec& s,
               std::ostream& out) {
    perf::MetricsReport rep;
    if (!in.empty()) {
        rep = perf::MetricsReport::from_json(read_file(in));
    } else {
        rep = perf::run_sweep(s, load_catalog(g), load_gpu(g), load_hw(g));
    }
    const auto rows = perf::summarize(rep);
    Output(g, out).write(g.format == "csv" ? perf::summary_csv(rows) : perf::summary_json(rows));
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"PIM just-in-time quantization simulator"};
    app.name("pimjitq");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--hw", g.hw_path, "Hardware config JSON");
    app.add_option("--gpu", g.gpu_path, "GPU config JSON");
    app.add_option("--catalog", g.catalog_path, "Extra catalog JSON merged over the built-in one");
    app.add_option("--seed", g.seed, "Seed for generated tensors")->capture_default_str();
    app.add_option("--out", g.out_path, "Output file (default: stdout)");
    app.add_option("--format", g.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    std::string q_in, q_fmt = "MX6", q_axis = "row";
    auto* quantize = app.add_subcommand("quantize", "Quantize a binary tensor file to an MX file");
    quantize->add_option("--in", q_in, "Binary tensor file (with .json sidecar)")->required();
    quantize->add_option("--mx", q_fmt, "MX4, MX6 or MX9")->capture_default_str();
    quantize->add_option("--axis", q_axis, "row or column")->capture_default_str();

    KernelArgs vk;
    int v_count = 1;
    auto* verify = app.add_subcommand("verify", "Run a kernel functionally and compare to the reference");
    add_kernel_options(verify, vk);
    verify->add_option("--count", v_count, "Random tensors to check")->capture_default_str();

    KernelArgs kk;
    std::string k_layout;
    auto* kernel = app.add_subcommand("kernel", "Dump a kernel's command stream");
    add_kernel_options(kernel, kk);
    kernel->add_option("--layout", k_layout, "Also write the layout JSON here");

    KernelArgs sk;
    std::string s_trace;
    auto* simulate = app.add_subcommand("simulate", "Time one tensor's quantization");
    add_kernel_options(simulate, sk);
    simulate->add_option("--trace", s_trace, "Write the per-command trace CSV here");

    std::vector<std::string> models, formats{"MX6"}, variants{"strided-opt"};
    std::string master = "BF16";
    auto* sweep = app.add_subcommand("sweep", "Evaluate metrics over models x formats x variants");
    sweep->add_option("--models", models, "Comma-separated catalog names, or 'all'")
        ->required()
        ->delimiter(',');
    sweep->add_option("--formats", formats, "Comma-separated MX formats")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--variants", variants, "Comma-separated kernel variants")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--master", master, "Master weight format (BF16 or FP32)")
        ->capture_default_str();

    std::string r_in;
    std::vector<std::string> r_models{"all"}, r_formats{"MX4", "MX6", "MX9"},
        r_variants{"strided-opt"};
    std::string r_master = "BF16";
    auto* report = app.add_subcommand("report", "Suite averages from a metrics report or a fresh sweep");
    report->add_option("--in", r_in, "Metrics report JSON from `sweep --format json`");
    report->add_option("--models", r_models, "Models when sweeping")->delimiter(',');
    report->add_option("--formats", r_formats, "Formats when sweeping")->delimiter(',');
    report->add_option("--variants", r_variants, "Variants when sweeping")->delimiter(',');
    report->add_option("--master", r_master, "Master format when sweeping");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*quantize) return cmd_quantize(g, q_in, q_fmt, q_axis, out);
        if (*verify) return cmd_verify(g, vk, v_count, out);
        if (*kernel) return cmd_kernel(g, kk, k_layout, out);
        if (*simulate) return cmd_simulate(g, sk, s_trace, out);
        if (*sweep) {
            const auto cat = load_catalog(g);
            return cmd_sweep(g, sweep_spec(cat, models, formats, variants, master), out);
        }
        if (*report) {
            const auto cat = load_catalog(g);
            return cmd_report(g, r_in, sweep_spec(cat, r_models, r_formats, r_variants, r_master),
                              out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace pimjitq::cli
