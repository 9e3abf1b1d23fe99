// SPDX-License-Identifier: Apache-2.0
//
// Scalar floating-point formats and the bit-exact reference MX quantizer.
// Everything here is the golden model that PIM kernels are checked against.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pimjitq::mx {

struct ScalarFormat {
    std::string_view name;
    int exp_bits;
    int mantissa_bits;  // stored fraction bits, no implicit one
    int bias;
    // false for FP8-E4M3: only S.1111.111 is special (NaN), no infinities.
    bool ieee_specials = true;

    constexpr int width() const { return 1 + exp_bits + mantissa_bits; }
    constexpr uint32_t exp_field_max() const { return (1u << exp_bits) - 1u; }
    constexpr uint32_t frac_mask() const { return (1u << mantissa_bits) - 1u; }
    constexpr uint32_t exp_mask() const { return exp_field_max() << mantissa_bits; }
    constexpr uint32_t sign_mask() const { return 1u << (width() - 1); }
    constexpr uint32_t bits_mask() const {
        return width() == 32 ? 0xFFFFFFFFu : ((1u << width()) - 1u);
    }
    // Significand width including the implicit leading one.
    constexpr int significand_bits() const { return mantissa_bits + 1; }

    bool operator==(const ScalarFormat& o) const { return name == o.name; }
};

inline constexpr ScalarFormat kFP32{"FP32", 8, 23, 127, true};
inline constexpr ScalarFormat kBF16{"BF16", 8, 7, 127, true};
inline constexpr ScalarFormat kFP8E4M3{"FP8-E4M3", 4, 3, 7, false};
inline constexpr ScalarFormat kFP8E5M2{"FP8-E5M2", 5, 2, 15, true};

const ScalarFormat& scalar_format(std::string_view name);

struct MxFormat {
    std::string_view name;
    int mantissa_bits;
    int block_size = 16;
    int level1_exp_bits = 8;
    int subblock_size = 2;
    int level2_exp_bits = 1;

    constexpr int subblocks() const { return block_size / subblock_size; }
    // m + 1 sign bit + amortized shared exponents; equals m + 2 for all MX types.
    constexpr double bits_per_element() const {
        return 1.0 + mantissa_bits +
               double(level1_exp_bits + subblocks() * level2_exp_bits) / block_size;
    }
    // e1 byte, d byte, two sign bytes, packed mantissas.
    constexpr std::size_t serialized_bytes() const {
        return 4 + (std::size_t(block_size) * mantissa_bits + 7) / 8;
    }

    bool operator==(const MxFormat& o) const { return name == o.name; }
};

inline constexpr MxFormat kMX9{"MX9", 7};
inline constexpr MxFormat kMX6{"MX6", 4};
inline constexpr MxFormat kMX4{"MX4", 2};

const MxFormat& mx_format(std::string_view name);

inline constexpr int kBlockSize = 16;
inline constexpr int kSubblocks = 8;

struct MxBlock {
    uint8_t e1 = 0;                       // biased level-1 exponent
    std::array<uint8_t, kSubblocks> d{};  // level-2 decrement per subblock, 0 or 1
    std::array<uint8_t, kBlockSize> sign{};
    std::array<uint8_t, kBlockSize> mantissa{};  // m-bit magnitude, explicit leading one

    bool operator==(const MxBlock&) const = default;
};

enum class QuantAxis { Row, Column };

std::string_view to_string(QuantAxis axis);
QuantAxis parse_axis(std::string_view s);

// Raw biased exponent field. Sign is ignored, subnormals and zero give 0.
uint32_t extract_exponent(uint32_t bits, const ScalarFormat& fmt);

bool is_finite(uint32_t bits, const ScalarFormat& fmt);

// Exact value of a bit pattern (finite patterns only).
double decode_value(uint32_t bits, const ScalarFormat& fmt);
// Round-to-nearest-even encode; overflow saturates to max finite.
uint32_t encode_value(double value, const ScalarFormat& fmt);
uint32_t max_finite(const ScalarFormat& fmt);

MxBlock quantize_block(std::span<const uint32_t> x, const MxFormat& fmt,
                       const ScalarFormat& src);

// Reconstructs values at the block's scale (bias of `src`), rounded into `dst`.
std::array<uint32_t, kBlockSize> dequantize_block(const MxBlock& b, const MxFormat& fmt,
                                                  const ScalarFormat& src,
                                                  const ScalarFormat& dst);
inline std::array<uint32_t, kBlockSize> dequantize_block(const MxBlock& b,
                                                         const MxFormat& fmt,
                                                         const ScalarFormat& src) {
    return dequantize_block(b, fmt, src, src);
}

// Truncating scalar-to-scalar conversion. Subnormal results flush to zero,
// out-of-range exponents saturate to the destination's max finite value.
uint32_t scalar_convert(uint32_t bits, const ScalarFormat& src, const ScalarFormat& dst);

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    ScalarFormat fmt = kBF16;
    std::vector<uint32_t> bits;  // row-major bit patterns

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, const ScalarFormat& f)
        : rows(r), cols(c), fmt(f), bits(r * c, 0u) {}

    uint32_t at(std::size_t r, std::size_t c) const { return bits[r * cols + c]; }
    uint32_t& at(std::size_t r, std::size_t c) { return bits[r * cols + c]; }
};

// Block b covers a run of kBlockSize elements along the axis. Row blocks are
// numbered row-major (row, col-block); column blocks column-major (col, row-block).
struct BlockIndexMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantAxis axis = QuantAxis::Row;

    std::size_t block_count() const { return rows * cols / kBlockSize; }
    // (block, element-in-block) for a matrix coordinate.
    std::pair<std::size_t, int> locate(std::size_t r, std::size_t c) const;
    // Matrix coordinate of element j of block b.
    std::pair<std::size_t, std::size_t> coord(std::size_t block, int j) const;
};

struct QuantizedMatrix {
    MxFormat fmt = kMX6;
    ScalarFormat src = kBF16;
    BlockIndexMap map;
    std::vector<MxBlock> blocks;
};

QuantizedMatrix quantize_matrix(const Matrix& mat, const MxFormat& fmt, QuantAxis axis);
Matrix dequantize_matrix(const QuantizedMatrix& q, const ScalarFormat& dst);

// Fixed-layout block serialization: e1, d bits (LE), 16 sign bits (LE),
// then m-bit mantissas packed LSB-first.
void serialize_block(const MxBlock& b, const MxFormat& fmt, std::vector<uint8_t>& out);
MxBlock deserialize_block(std::span<const uint8_t> bytes, const MxFormat& fmt);

// Convenience for tests and bindings.
uint32_t bf16_from_float(float f);  // truncating
uint32_t fp32_from_float(float f);
float float_from_bits(uint32_t bits, const ScalarFormat& fmt);

}  // namespace pimjitq::mx
