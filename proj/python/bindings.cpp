// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "json.hpp"
#include "pimjitq/catalog.hpp"
#include "pimjitq/cli.hpp"
#include "pimjitq/error.hpp"
#include "pimjitq/io.hpp"
#include "pimjitq/kernelgen.hpp"
#include "pimjitq/perfmodel.hpp"
#include "pimjitq/report.hpp"

namespace py = pybind11;
using namespace pimjitq;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

pim::HwConfig hw_of(const std::optional<std::string>& json) {
    return json ? perf::hw_from_json(*json) : pim::HwConfig{};
}

mx::Matrix matrix_from(const F32Array& a, const mx::ScalarFormat& src) {
    if (a.ndim() != 2) throw Error("expected a 2-D array");
    mx::Matrix m(std::size_t(a.shape(0)), std::size_t(a.shape(1)), src);
    const float* p = a.data();
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        m.bits[i] = src == mx::kBF16 ? mx::bf16_from_float(p[i]) : mx::fp32_from_float(p[i]);
    }
    return m;
}

kernelgen::KernelSpec spec_of(std::size_t rows, std::size_t cols, const std::string& src,
                              const std::string& to, const std::string& variant,
                              const std::string& axis, const pim::HwConfig& hw) {
    const auto v = kernelgen::parse_variant(variant);
    const auto& s = mx::scalar_format(src);
    if (to.rfind("MX", 0) == 0) {
        return kernelgen::make_spec(v, s, mx::mx_format(to), mx::parse_axis(axis), rows, cols, hw);
    }
    return kernelgen::make_scalar_spec(v, s, mx::scalar_format(to), rows, cols, hw);
}

py::object json_to_py(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "PIM just-in-time quantization simulator";
    py::register_exception<Error>(m, "PimJitqError", PyExc_ValueError);

    m.def(
        "quantize_dequantize",
        [](const F32Array& x, const std::string& fmt, const std::string& axis,
           const std::string& src) {
            const auto& s = mx::scalar_format(src);
            const auto q = mx::quantize_matrix(matrix_from(x, s), mx::mx_format(fmt),
                                               mx::parse_axis(axis));
            const auto back = mx::dequantize_matrix(q, s);
            py::array_t<float> out({back.rows, back.cols});
            float* p = out.mutable_data();
            for (std::size_t i = 0; i < back.bits.size(); ++i) {
                p[i] = mx::float_from_bits(back.bits[i], s);
            }
            return out;
        },
        py::arg("x"), py::arg("fmt") = "MX6", py::arg("axis") = "row", py::arg("src") = "BF16",
        "Quantize a float32 matrix to MX and decode it back.");

    m.def(
        "quantize_to_bytes",
        [](const F32Array& x, const std::string& fmt, const std::string& axis,
           const std::string& src) {
            const auto q = mx::quantize_matrix(matrix_from(x, mx::scalar_format(src)),
                                               mx::mx_format(fmt), mx::parse_axis(axis));
            const auto bytes = io::encode_mx(q);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("x"), py::arg("fmt") = "MX6", py::arg("axis") = "row", py::arg("src") = "BF16",
        "Quantize and return the MX tensor file contents.");

    m.def(
        "verify",
        [](std::size_t rows, std::size_t cols, const std::string& src, const std::string& to,
           const std::string& variant, const std::string& axis, uint64_t seed, int count,
           const std::optional<std::string>& hw_json) {
            const auto spec = spec_of(rows, cols, src, to, variant, axis, hw_of(hw_json));
            py::list results;
            bool all = true;
            for (int i = 0; i < count; ++i) {
                const auto r = kernelgen::verify_kernel(
                    spec, io::random_matrix(rows, cols, spec.src, seed + uint64_t(i)));
                all = all && r.pass;
                results.append(json_to_py(kernelgen::verify_json(spec, r)));
            }
            py::dict d;
            d["pass"] = all;
            d["results"] = results;
            return d;
        },
        py::arg("rows") = 64, py::arg("cols") = 64, py::arg("src") = "BF16", py::arg("to") = "MX6",
        py::arg("variant") = "strided-opt", py::arg("axis") = "row", py::arg("seed") = 0,
        py::arg("count") = 1, py::arg("hw_json") = py::none(),
        "Run the PIM kernel on seeded random tensors and compare with the reference.");

    m.def(
        "simulate",
        [](std::size_t rows, std::size_t cols, const std::string& src, const std::string& to,
           const std::string& variant, const std::string& axis,
           const std::optional<std::string>& hw_json) {
            const auto t =
                kernelgen::quant_time(spec_of(rows, cols, src, to, variant, axis, hw_of(hw_json)));
            py::dict d;
            d["total_ps"] = t.total_ps;
            d["commands"] = t.commands;
            d["row_switches"] = t.row_switches;
            d["lane_shift_cmds"] = t.histogram.lane_shift;
            d["bit_shift_cmds"] = t.histogram.bit_shift;
            d["other_cmds"] = t.histogram.other;
            return d;
        },
        py::arg("rows"), py::arg("cols"), py::arg("src") = "BF16", py::arg("to") = "MX6",
        py::arg("variant") = "strided-opt", py::arg("axis") = "row",
        py::arg("hw_json") = py::none(), "Time the quantization of one tensor.");

    m.def(
        "kernel_text",
        [](std::size_t rows, std::size_t cols, const std::string& src, const std::string& to,
           const std::string& variant, const std::string& axis,
           const std::optional<std::string>& hw_json) {
            std::ostringstream os;
            kernelgen::emit_quant_kernel(
                spec_of(rows, cols, src, to, variant, axis, hw_of(hw_json)),
                [&](const pim::PimCommand& c) { os << pim::format_command(c) << '\n'; });
            return os.str();
        },
        py::arg("rows"), py::arg("cols"), py::arg("src") = "BF16", py::arg("to") = "MX6",
        py::arg("variant") = "strided-opt", py::arg("axis") = "row",
        py::arg("hw_json") = py::none(), "Command stream in the line-oriented text form.");

    m.def(
        "sweep",
        [](const std::vector<std::string>& models, const std::vector<std::string>& formats,
           const std::vector<std::string>& variants, const std::string& master,
           const std::string& out_format, const std::optional<std::string>& gpu_json,
           const std::optional<std::string>& hw_json) {
            perf::SweepSpec s{models, formats, variants, master};
            const auto gpu = gpu_json ? perf::gpu_from_json(*gpu_json) : perf::GpuConfig::defaults();
            std::string text;
            {
                py::gil_scoped_release release;
                const auto rep = perf::run_sweep(s, catalog::Catalog::builtin(), gpu, hw_of(hw_json));
                text = out_format == "csv" ? rep.to_csv() : rep.to_json();
            }
            return text;
        },
        py::arg("models"), py::arg("formats") = std::vector<std::string>{"MX6"},
        py::arg("variants") = std::vector<std::string>{"strided-opt"}, py::arg("master") = "BF16",
        py::arg("out_format") = "json", py::arg("gpu_json") = py::none(),
        py::arg("hw_json") = py::none(), "Metrics report text for a sweep.");

    m.def(
        "capacity_limit_pct",
        [](const std::string& master, const std::string& fmt, int copies) {
            auto s = perf::TrainingSetup::with(mx::scalar_format(master), mx::mx_format(fmt));
            s.weight_copies = copies;
            return perf::capacity_limit_pct(s);
        },
        py::arg("master") = "BF16", py::arg("fmt") = "MX6", py::arg("copies") = 2,
        "Activation-free capacity savings limit in percent.");

    m.def("catalog_json", [] { return catalog::Catalog::builtin().to_json(); },
          "Built-in model catalog as JSON.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"pimjitq"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(int(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run the command-line tool in-process; returns (code, stdout, stderr).");
}
