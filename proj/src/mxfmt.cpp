// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/mxfmt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "pimjitq/error.hpp"

namespace pimjitq::mx {

const ScalarFormat& scalar_format(std::string_view name) {
    for (const ScalarFormat* f : {&kFP32, &kBF16, &kFP8E4M3, &kFP8E5M2}) {
        if (f->name == name) return *f;
    }
    throw Error("unknown scalar format: " + std::string(name));
}

const MxFormat& mx_format(std::string_view name) {
    for (const MxFormat* f : {&kMX9, &kMX6, &kMX4}) {
        if (f->name == name) return *f;
    }
    throw Error("unknown MX format: " + std::string(name));
}

std::string_view to_string(QuantAxis axis) {
    return axis == QuantAxis::Row ? "row" : "column";
}

QuantAxis parse_axis(std::string_view s) {
    if (s == "row") return QuantAxis::Row;
    if (s == "column" || s == "col") return QuantAxis::Column;
    throw Error("unknown axis: " + std::string(s));
}

uint32_t extract_exponent(uint32_t bits, const ScalarFormat& fmt) {
    return (bits >> fmt.mantissa_bits) & fmt.exp_field_max();
}

bool is_finite(uint32_t bits, const ScalarFormat& fmt) {
    const uint32_t e = extract_exponent(bits, fmt);
    if (fmt.ieee_specials) return e != fmt.exp_field_max();
    return !(e == fmt.exp_field_max() && (bits & fmt.frac_mask()) == fmt.frac_mask());
}

uint32_t max_finite(const ScalarFormat& fmt) {
    if (fmt.ieee_specials) {
        return ((fmt.exp_field_max() - 1u) << fmt.mantissa_bits) | fmt.frac_mask();
    }
    return (fmt.exp_field_max() << fmt.mantissa_bits) | (fmt.frac_mask() - 1u);
}

double decode_value(uint32_t bits, const ScalarFormat& fmt) {
    const bool neg = (bits & fmt.sign_mask()) != 0;
    const uint32_t e = extract_exponent(bits, fmt);
    const uint32_t f = bits & fmt.frac_mask();
    double v;
    if (e == 0) {
        v = std::ldexp(double(f), 1 - fmt.bias - fmt.mantissa_bits);
    } else {
        v = std::ldexp(double(f | (1u << fmt.mantissa_bits)),
                       int(e) - fmt.bias - fmt.mantissa_bits);
    }
    return neg ? -v : v;
}

uint32_t encode_value(double value, const ScalarFormat& fmt) {
    const uint32_t sign = std::signbit(value) ? fmt.sign_mask() : 0u;
    const double mag = std::fabs(value);
    if (mag == 0.0) return sign;
    if (!std::isfinite(mag)) throw Error("non-finite input");

    int e2 = 0;
    std::frexp(mag, &e2);  // mag = f * 2^e2, f in [0.5, 1)
    int biased = e2 - 1 + fmt.bias;
    const int mb = fmt.mantissa_bits;
    if (biased <= 0) {
        // Subnormal range: quantum is 2^(1 - bias - mb).
        const double q = std::nearbyint(std::ldexp(mag, fmt.bias - 1 + mb));
        const uint32_t field = uint32_t(q);
        if (field >> mb) return sign | (1u << mb);  // rounded up to min normal
        return sign | field;
    }
    double sig = std::nearbyint(std::ldexp(mag, mb - (e2 - 1)));
    if (sig >= std::ldexp(1.0, mb + 1)) {
        sig = std::ldexp(sig, -1);
        ++biased;
    }
    const uint32_t bits =
        (uint32_t(biased) << mb) | (uint32_t(sig) & fmt.frac_mask());
    const uint32_t maxf = max_finite(fmt);
    if (uint32_t(biased) > fmt.exp_field_max() || bits > maxf) return sign | maxf;
    return sign | bits;
}

MxBlock quantize_block(std::span<const uint32_t> x, const MxFormat& fmt,
                       const ScalarFormat& src) {
    if (x.size() != std::size_t(kBlockSize)) throw Error("block must hold 16 elements");
    std::array<uint32_t, kBlockSize> exps{};
    for (int i = 0; i < kBlockSize; ++i) {
        if (!is_finite(x[i], src)) throw Error("non-finite input");
        exps[i] = extract_exponent(x[i], src);
    }
    MxBlock b;
    const uint32_t e1 = *std::max_element(exps.begin(), exps.end());
    b.e1 = uint8_t(e1);

    const int m = fmt.mantissa_bits;
    const int sig_bits = src.significand_bits();
    for (int k = 0; k < kSubblocks; ++k) {
        const uint32_t em = std::max(exps[2 * k], exps[2 * k + 1]);
        // Subblocks holding only zeros/subnormals always take the decrement.
        b.d[k] = (em == 0 || em < e1) ? 1 : 0;
        const int scale = int(e1) - b.d[k];
        for (int j = 2 * k; j < 2 * k + 2; ++j) {
            b.sign[j] = (x[j] & src.sign_mask()) ? 1 : 0;
            if (exps[j] == 0) continue;  // zero or flushed subnormal
            const uint32_t sig = (x[j] & src.frac_mask()) | (1u << src.mantissa_bits);
            const uint32_t top = sig_bits >= m ? sig >> (sig_bits - m) : sig << (m - sig_bits);
            const int s = scale - int(exps[j]);
            b.mantissa[j] = s >= m ? 0 : uint8_t(top >> s);
        }
    }
    return b;
}

std::array<uint32_t, kBlockSize> dequantize_block(const MxBlock& b, const MxFormat& fmt,
                                                  const ScalarFormat& src,
                                                  const ScalarFormat& dst) {
    std::array<uint32_t, kBlockSize> out{};
    const int m = fmt.mantissa_bits;
    for (int i = 0; i < kBlockSize; ++i) {
        const int scale = int(b.e1) - b.d[i / 2];
        double v = std::ldexp(double(b.mantissa[i]), scale - src.bias - (m - 1));
        if (b.sign[i]) v = -v;
        out[i] = encode_value(v, dst);
    }
    return out;
}

uint32_t scalar_convert(uint32_t bits, const ScalarFormat& src, const ScalarFormat& dst) {
    if (!is_finite(bits, src)) throw Error("non-finite input");
    const uint32_t sign = (bits & src.sign_mask()) ? dst.sign_mask() : 0u;
    const uint32_t e = extract_exponent(bits, src);
    if (e == 0) return sign;
    uint32_t frac = bits & src.frac_mask();
    if (dst.mantissa_bits <= src.mantissa_bits) {
        frac >>= (src.mantissa_bits - dst.mantissa_bits);
    } else {
        frac <<= (dst.mantissa_bits - src.mantissa_bits);
    }
    const int ed = int(e) - src.bias + dst.bias;
    if (ed <= 0) return sign;
    const uint32_t cand = (uint64_t(ed) > dst.exp_field_max())
                              ? 0xFFFFFFFFu
                              : ((uint32_t(ed) << dst.mantissa_bits) | frac);
    const uint32_t maxf = max_finite(dst);
    return sign | std::min(cand, maxf);
}

std::pair<std::size_t, int> BlockIndexMap::locate(std::size_t r, std::size_t c) const {
    if (axis == QuantAxis::Row) {
        return {r * (cols / kBlockSize) + c / kBlockSize, int(c % kBlockSize)};
    }
    return {c * (rows / kBlockSize) + r / kBlockSize, int(r % kBlockSize)};
}

std::pair<std::size_t, std::size_t> BlockIndexMap::coord(std::size_t block, int j) const {
    if (axis == QuantAxis::Row) {
        const std::size_t per_row = cols / kBlockSize;
        return {block / per_row, (block % per_row) * kBlockSize + std::size_t(j)};
    }
    const std::size_t per_col = rows / kBlockSize;
    return {(block % per_col) * kBlockSize + std::size_t(j), block / per_col};
}

QuantizedMatrix quantize_matrix(const Matrix& mat, const MxFormat& fmt, QuantAxis axis) {
    const std::size_t along = axis == QuantAxis::Row ? mat.cols : mat.rows;
    if (along == 0 || along % kBlockSize != 0) {
        throw Error("dimension along the quantization axis must be a multiple of 16");
    }
    if (mat.bits.size() != mat.rows * mat.cols) throw Error("matrix size mismatch");
    QuantizedMatrix q;
    q.fmt = fmt;
    q.src = mat.fmt;
    q.map = BlockIndexMap{mat.rows, mat.cols, axis};
    q.blocks.resize(q.map.block_count());
    std::array<uint32_t, kBlockSize> x{};
    for (std::size_t b = 0; b < q.blocks.size(); ++b) {
        for (int j = 0; j < kBlockSize; ++j) {
            const auto [r, c] = q.map.coord(b, j);
            x[j] = mat.at(r, c);
        }
        q.blocks[b] = quantize_block(x, fmt, mat.fmt);
    }
    return q;
}

Matrix dequantize_matrix(const QuantizedMatrix& q, const ScalarFormat& dst) {
    Matrix out(q.map.rows, q.map.cols, dst);
    for (std::size_t b = 0; b < q.blocks.size(); ++b) {
        const auto vals = dequantize_block(q.blocks[b], q.fmt, q.src, dst);
        for (int j = 0; j < kBlockSize; ++j) {
            const auto [r, c] = q.map.coord(b, j);
            out.at(r, c) = vals[j];
        }
    }
    return out;
}

void serialize_block(const MxBlock& b, const MxFormat& fmt, std::vector<uint8_t>& out) {
    out.push_back(b.e1);
    uint8_t dbits = 0;
    for (int k = 0; k < kSubblocks; ++k) dbits |= uint8_t((b.d[k] & 1u) << k);
    out.push_back(dbits);
    uint16_t signs = 0;
    for (int i = 0; i < kBlockSize; ++i) signs |= uint16_t((b.sign[i] & 1u) << i);
    out.push_back(uint8_t(signs & 0xFF));
    out.push_back(uint8_t(signs >> 8));
    const int m = fmt.mantissa_bits;
    const std::size_t base = out.size();
    out.resize(base + (std::size_t(kBlockSize) * m + 7) / 8, 0);
    for (int i = 0; i < kBlockSize; ++i) {
        for (int bit = 0; bit < m; ++bit) {
            if ((b.mantissa[i] >> bit) & 1u) {
                const std::size_t pos = std::size_t(i) * m + bit;
                out[base + pos / 8] |= uint8_t(1u << (pos % 8));
            }
        }
    }
}

MxBlock deserialize_block(std::span<const uint8_t> bytes, const MxFormat& fmt) {
    if (bytes.size() < fmt.serialized_bytes()) throw Error("truncated MX block");
    MxBlock b;
    b.e1 = bytes[0];
    for (int k = 0; k < kSubblocks; ++k) b.d[k] = (bytes[1] >> k) & 1u;
    const uint16_t signs = uint16_t(bytes[2] | (bytes[3] << 8));
    for (int i = 0; i < kBlockSize; ++i) b.sign[i] = (signs >> i) & 1u;
    const int m = fmt.mantissa_bits;
    for (int i = 0; i < kBlockSize; ++i) {
        uint8_t v = 0;
        for (int bit = 0; bit < m; ++bit) {
            const std::size_t pos = std::size_t(i) * m + bit;
            if ((bytes[4 + pos / 8] >> (pos % 8)) & 1u) v |= uint8_t(1u << bit);
        }
        b.mantissa[i] = v;
    }
    return b;
}

uint32_t fp32_from_float(float f) { return std::bit_cast<uint32_t>(f); }

uint32_t bf16_from_float(float f) { return std::bit_cast<uint32_t>(f) >> 16; }

float float_from_bits(uint32_t bits, const ScalarFormat& fmt) {
    return float(decode_value(bits, fmt));
}

}  // namespace pimjitq::mx
