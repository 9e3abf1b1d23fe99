// SPDX-License-Identifier: Apache-2.0
//
// PIM command-stream generation for MX (and narrowing scalar) quantization,
// plus oracle verification against the reference quantizer and timing.
//
// Every PIM unit runs the same broadcast stream on its own tiles, so the
// generator works in unit-relative addresses and one stream serves all units.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pimjitq/mxfmt.hpp"
#include "pimjitq/pim.hpp"
#include "pimjitq/placement.hpp"

namespace pimjitq::kernelgen {

enum class Variant { Tiled, Strided, StridedOpt };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
placement::Scheme scheme_for(Variant v);

struct KernelSpec {
    Variant variant = Variant::StridedOpt;
    mx::ScalarFormat src = mx::kBF16;
    mx::MxFormat dst = mx::kMX6;
    // Set for the scalar-to-scalar conversion path; `dst` is then ignored.
    std::optional<mx::ScalarFormat> scalar_dst;
    mx::QuantAxis axis = mx::QuantAxis::Row;
    placement::Layout layout;

    bool is_scalar() const { return scalar_dst.has_value(); }
};

// Builds the spec together with the layout its variant requires.
KernelSpec make_spec(Variant v, const mx::ScalarFormat& src, const mx::MxFormat& dst,
                     mx::QuantAxis axis, std::size_t rows, std::size_t cols,
                     const pim::HwConfig& cfg);
KernelSpec make_scalar_spec(Variant v, const mx::ScalarFormat& src,
                            const mx::ScalarFormat& dst, std::size_t rows, std::size_t cols,
                            const pim::HwConfig& cfg);

// Per-bit iterations of the mantissa alignment loop.
int shift_loop_trips(const mx::ScalarFormat& src);

// Where one quantized block ends up, relative to its unit.
struct BlockSlots {
    placement::Slot e1;                     // lane holds e1 << src mantissa bits
    bool d_packed = true;                   // lane holds d0..d7, d0 in bit 7
    std::array<placement::Slot, mx::kSubblocks> d{};  // unpacked: lane holds d_k
    std::array<placement::Slot, mx::kBlockSize> elem{};  // sign in top bit, mantissa low
};

struct OutputMap {
    std::size_t tiles_per_unit = 0;
    // Indexed by local_tile * 16 + block_in_tile.
    std::vector<BlockSlots> blocks;
    // Scalar path: output word for each data word, keyed by packed bank address.
    std::vector<std::pair<pim::BankAddr, pim::BankAddr>> scalar_words;
};

using Sink = std::function<void(const pim::PimCommand&)>;

// Streams the kernel into `sink`. When `map` is given it receives the output map.
void emit_quant_kernel(const KernelSpec& spec, const Sink& sink, OutputMap* map = nullptr);

struct GeneratedKernel {
    pim::CommandStream stream;
    OutputMap map;
};

GeneratedKernel gen_quant_kernel(const KernelSpec& spec);

// Writes the tensor and the constant words the kernels expect.
void place_tensor(const mx::Matrix& m, const placement::Layout& l, pim::MemoryImage& mem);
pim::MemoryImage place_tensor(const mx::Matrix& m, const placement::Layout& l);

// Reads quantized blocks back out of an executed memory image.
mx::QuantizedMatrix unpack_output(const KernelSpec& spec, const OutputMap& map,
                                  const pim::MemoryImage& mem);
mx::Matrix unpack_scalar_output(const KernelSpec& spec, const OutputMap& map,
                                const pim::MemoryImage& mem);

struct Mismatch {
    std::size_t block = 0;  // block index (element index for the scalar path)
    std::string field;      // e1, d, sign, mantissa, value
    int element = -1;
    uint32_t expected = 0;
    uint32_t actual = 0;
};

struct VerifyResult {
    bool pass = false;
    std::size_t checked = 0;
    std::optional<Mismatch> first;
    std::size_t commands = 0;
};

// `mem` must hold the tensor placed per spec.layout; `ref` is the same tensor.
VerifyResult verify_kernel(const KernelSpec& spec, const pim::MemoryImage& mem,
                           const mx::Matrix& ref);
// Places `ref`, runs the kernel, compares.
VerifyResult verify_kernel(const KernelSpec& spec, const mx::Matrix& ref);

std::string verify_json(const KernelSpec& spec, const VerifyResult& r);

struct QuantTime {
    int64_t total_ps = 0;
    uint64_t commands = 0;
    uint64_t row_switches = 0;
    int64_t stall_ps = 0;
    int64_t lane_shift_ps = 0;
    int64_t bit_shift_ps = 0;
    int64_t other_ps = 0;
    pim::Histogram histogram;

    double total_ns() const { return double(total_ps) / 1000.0; }
};

// Duration of the full tensor: every unit runs the stream in parallel, so the
// slowest (and every) unit takes the single-unit stream time.
QuantTime quant_time(const KernelSpec& spec);

}  // namespace pimjitq::kernelgen
