// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "pimjitq/error.hpp"
#include "pimjitq/mxfmt.hpp"
#include "test_util.hpp"

using namespace pimjitq;
using namespace pimjitq::mx;

namespace {

constexpr MxFormat kAllMx[] = {kMX4, kMX6, kMX9};

std::array<uint32_t, 16> bf16_block(std::initializer_list<float> vals) {
    std::array<uint32_t, 16> x{};
    int i = 0;
    for (float v : vals) x[std::size_t(i++)] = bf16_from_float(v);
    return x;
}

// Arithmetic oracle: exponents from the decoded value, mantissas by division.
MxBlock oracle_block(const std::array<uint32_t, 16>& x, const MxFormat& fmt,
                     const ScalarFormat& src) {
    std::array<int, 16> e{};
    std::array<double, 16> v{};
    for (int i = 0; i < 16; ++i) {
        const bool normal = ((x[i] & src.exp_mask()) != 0);
        v[i] = normal ? std::fabs(decode_value(x[i], src)) : 0.0;
        e[i] = v[i] == 0.0 ? 0 : std::ilogb(v[i]) + src.bias;
    }
    MxBlock b;
    int e1 = 0;
    for (int i = 0; i < 16; ++i) e1 = std::max(e1, e[i]);
    b.e1 = uint8_t(e1);
    for (int k = 0; k < 8; ++k) {
        const int em = std::max(e[2 * k], e[2 * k + 1]);
        b.d[k] = (em == 0 || em < e1) ? 1 : 0;
        const double step = std::ldexp(1.0, e1 - b.d[k] - src.bias - (fmt.mantissa_bits - 1));
        for (int j = 2 * k; j < 2 * k + 2; ++j) {
            b.sign[j] = (x[j] >> (src.width() - 1)) & 1u;
            b.mantissa[j] = uint8_t(std::floor(v[j] / step));
        }
    }
    return b;
}

}  // namespace

TEST_CASE("scalar format descriptors") {
    CHECK(kFP32.width() == 32);
    CHECK(kBF16.width() == 16);
    CHECK(kFP8E4M3.width() == 8);
    CHECK(kFP8E5M2.width() == 8);
    CHECK(kFP8E4M3.bias == 7);
    CHECK(kFP8E5M2.bias == 15);
    CHECK(scalar_format("BF16") == kBF16);
    CHECK_THROWS_AS(scalar_format("FP64"), Error);
}

TEST_CASE("MX format descriptors") {
    for (const auto& f : kAllMx) {
        CHECK(f.block_size == 16);
        CHECK(f.level1_exp_bits == 8);
        CHECK(f.subblock_size == 2);
        CHECK(f.level2_exp_bits == 1);
        CHECK(f.bits_per_element() == doctest::Approx(f.mantissa_bits + 2));
    }
    CHECK(kMX9.mantissa_bits == 7);
    CHECK(kMX6.mantissa_bits == 4);
    CHECK(kMX4.mantissa_bits == 2);
    CHECK(mx_format("MX4") == kMX4);
    CHECK_THROWS_AS(mx_format("MX8"), Error);
}

TEST_CASE("extract_exponent examples") {
    CHECK(extract_exponent(0x3F80, kBF16) == 127);
    CHECK(extract_exponent(0x0000, kBF16) == 0);
    CHECK(extract_exponent(0x4080, kBF16) == 129);
    CHECK(extract_exponent(0xBF80, kBF16) == 127);  // sign ignored
    CHECK(extract_exponent(0x0001, kBF16) == 0);    // subnormal
}

TEST_CASE("quantize_block: all zeros") {
    const auto b = quantize_block(bf16_block({}), kMX6, kBF16);
    CHECK(b.e1 == 0);
    for (int k = 0; k < 8; ++k) CHECK(b.d[std::size_t(k)] == 1);
    for (int i = 0; i < 16; ++i) CHECK(b.mantissa[std::size_t(i)] == 0);
    for (uint32_t v : dequantize_block(b, kMX6, kBF16)) CHECK(v == 0);
}

TEST_CASE("quantize_block: constant ones") {
    std::array<uint32_t, 16> x{};
    x.fill(0x3F80);
    const auto b = quantize_block(x, kMX6, kBF16);
    CHECK(b.e1 == 127);
    for (int k = 0; k < 8; ++k) CHECK(b.d[std::size_t(k)] == 0);
    for (int i = 0; i < 16; ++i) CHECK(b.mantissa[std::size_t(i)] == 0b1000);
    CHECK(dequantize_block(b, kMX6, kBF16) == x);
}

TEST_CASE("quantize_block: 4.0 and 1.0 share a subblock") {
    const auto x = bf16_block({4.0f, 1.0f});
    const auto b = quantize_block(x, kMX6, kBF16);
    CHECK(b.e1 == 129);
    CHECK(b.d[0] == 0);
    CHECK(b.mantissa[0] == 0b1000);
    CHECK(b.mantissa[1] == 0b0010);
    for (int k = 1; k < 8; ++k) CHECK(b.d[std::size_t(k)] == 1);
    CHECK(dequantize_block(b, kMX6, kBF16) == x);
    CHECK(b == oracle_block(x, kMX6, kBF16));
}

TEST_CASE("quantize_block: an outlier flushes a small subblock") {
    const auto x = bf16_block({256.0f, 0, 1.0f, 1.25f});
    const auto b = quantize_block(x, kMX4, kBF16);
    CHECK(b.e1 == 127 + 8);
    CHECK(b.d[1] == 1);
    CHECK(b.mantissa[2] == 0);
    CHECK(b.mantissa[3] == 0);
}

TEST_CASE("quantize_block rejects non-finite input") {
    auto x = bf16_block({1.0f});
    x[3] = 0x7F80;  // +inf
    CHECK_THROWS_WITH_AS(quantize_block(x, kMX6, kBF16), "non-finite input", Error);
    x[3] = 0x7FC0;  // NaN
    CHECK_THROWS_AS(quantize_block(x, kMX6, kBF16), Error);
    std::array<uint32_t, 16> f8{};
    f8[0] = 0x7F;  // E4M3 NaN
    CHECK_THROWS_AS(quantize_block(f8, kMX6, kFP8E4M3), Error);
    std::array<uint32_t, 15> short_block{};
    CHECK_THROWS_AS(quantize_block(short_block, kMX6, kBF16), Error);
}

TEST_CASE("quantize_block flushes subnormals") {
    auto x = bf16_block({1.0f});
    x[1] = 0x0040;  // BF16 subnormal
    const auto b = quantize_block(x, kMX9, kBF16);
    CHECK(b.mantissa[1] == 0);
    CHECK(b.mantissa[0] == 0x40);
}

TEST_CASE("quantize_block matches the arithmetic oracle on random blocks") {
    std::mt19937_64 rng(7);
    for (const auto* src : {&kBF16, &kFP32, &kFP8E5M2, &kFP8E4M3}) {
        for (const auto& f : kAllMx) {
            for (int n = 0; n < 20000; ++n) {
                const auto x = testutil::random_block(rng, *src, src->exp_bits == 8 ? 12 : 4);
                const auto got = quantize_block(x, f, *src);
                const auto want = oracle_block(x, f, *src);
                if (!(got == want)) {
                    FAIL_CHECK("mismatch for " << src->name << " -> " << f.name);
                    break;
                }
            }
        }
    }
}

TEST_CASE("block invariants hold") {
    std::mt19937_64 rng(11);
    for (const auto& f : kAllMx) {
        for (int n = 0; n < 5000; ++n) {
            const auto x = testutil::random_block(rng, kBF16);
            const auto b = quantize_block(x, f, kBF16);
            for (int i = 0; i < 16; ++i) {
                CHECK(b.d[std::size_t(i / 2)] <= 1);
                CHECK(b.mantissa[std::size_t(i)] < (1u << f.mantissa_bits));
                const uint32_t e = extract_exponent(x[std::size_t(i)], kBF16);
                if (e != 0 && int(e) == int(b.e1) - b.d[std::size_t(i / 2)]) {
                    CHECK((b.mantissa[std::size_t(i)] >> (f.mantissa_bits - 1)) == 1);
                }
            }
        }
    }
}

TEST_CASE("round-trip error bound on 1e5 blocks per format") {
    std::mt19937_64 rng(2024);
    for (const auto& f : kAllMx) {
        std::size_t violations = 0;
        for (int n = 0; n < 100000; ++n) {
            const auto x = testutil::random_block(rng, kBF16);
            const auto b = quantize_block(x, f, kBF16);
            // Decode into FP32 so the reconstruction itself is exact.
            const auto y = dequantize_block(b, f, kBF16, kFP32);
            for (int i = 0; i < 16; ++i) {
                const double xv = (x[std::size_t(i)] & kBF16.exp_mask())
                                      ? decode_value(x[std::size_t(i)], kBF16)
                                      : 0.0;
                const double yv = decode_value(y[std::size_t(i)], kFP32);
                const int k = i / 2;
                const double bound =
                    std::ldexp(1.0, int(b.e1) - b.d[std::size_t(k)] - kBF16.bias - (f.mantissa_bits - 1));
                if (std::fabs(yv - xv) > bound) ++violations;
                if (std::fabs(yv) > std::fabs(xv)) ++violations;  // truncation toward zero
            }
        }
        CHECK_MESSAGE(violations == 0, f.name);
    }
}

TEST_CASE("idempotence: requantizing a dequantized block is the identity") {
    std::mt19937_64 rng(5);
    for (const auto& f : kAllMx) {
        for (int n = 0; n < 20000; ++n) {
            const auto b = quantize_block(testutil::random_block(rng, kBF16), f, kBF16);
            const auto y = dequantize_block(b, f, kBF16, kFP32);
            auto b2 = quantize_block(y, f, kFP32);
            // Sign of a zero mantissa is not recoverable from a value that flushed.
            for (int i = 0; i < 16; ++i) {
                if (b.mantissa[std::size_t(i)] == 0) b2.sign[std::size_t(i)] = b.sign[std::size_t(i)];
            }
            if (std::any_of(b.mantissa.begin(), b.mantissa.end(), [](uint8_t m) { return m != 0; })) {
                REQUIRE(b2 == b);
            }
        }
    }
}

TEST_CASE("scaling by a power of two moves only e1") {
    std::mt19937_64 rng(9);
    for (const auto& f : kAllMx) {
        for (int n = 0; n < 5000; ++n) {
            auto x = testutil::random_block(rng, kBF16, 6);
            const auto b = quantize_block(x, f, kBF16);
            if (b.e1 == 0) continue;
            const int j = int(rng() % 9) - 4;
            auto y = x;
            for (auto& v : y) {
                if (v & kBF16.exp_mask()) v = uint32_t(int(v) + j * (1 << kBF16.mantissa_bits));
            }
            const auto b2 = quantize_block(y, f, kBF16);
            CHECK(int(b2.e1) == int(b.e1) + j);
            CHECK(b2.d == b.d);
            CHECK(b2.mantissa == b.mantissa);
        }
    }
}

TEST_CASE("quantize_matrix block counts and index map") {
    Matrix m(16, 16, kBF16);
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 16; ++c) m.at(r, c) = bf16_from_float(float(r * 16 + c + 1));
    }
    const auto row = quantize_matrix(m, kMX6, QuantAxis::Row);
    REQUIRE(row.blocks.size() == 16);
    for (int j = 0; j < 16; ++j) CHECK(row.map.coord(3, j) == std::pair<std::size_t, std::size_t>{3, std::size_t(j)});
    const auto col = quantize_matrix(m, kMX6, QuantAxis::Column);
    REQUIRE(col.blocks.size() == 16);
    for (int j = 0; j < 16; ++j) CHECK(col.map.coord(5, j) == std::pair<std::size_t, std::size_t>{std::size_t(j), 5});

    Matrix big(32, 48, kBF16);
    CHECK(quantize_matrix(big, kMX4, QuantAxis::Row).blocks.size() == 96);
    CHECK(quantize_matrix(big, kMX4, QuantAxis::Column).blocks.size() == 96);
}

TEST_CASE("block index map is a bijection") {
    for (auto axis : {QuantAxis::Row, QuantAxis::Column}) {
        const BlockIndexMap map{48, 32, axis};
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t b = 0; b < map.block_count(); ++b) {
            for (int j = 0; j < 16; ++j) {
                const auto rc = map.coord(b, j);
                CHECK(map.locate(rc.first, rc.second) == std::pair<std::size_t, int>{b, j});
                seen.insert(rc);
            }
        }
        CHECK(seen.size() == 48 * 32);
    }
}

TEST_CASE("quantize_matrix rejects dims off the block grid") {
    CHECK_THROWS_AS(quantize_matrix(Matrix(16, 24, kBF16), kMX6, QuantAxis::Row), Error);
    CHECK_THROWS_AS(quantize_matrix(Matrix(24, 16, kBF16), kMX6, QuantAxis::Column), Error);
}

TEST_CASE("dequantize_matrix inverts representable matrices") {
    Matrix m(32, 32, kBF16);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = bf16_from_float(float(1 << (i % 4)));
    for (auto axis : {QuantAxis::Row, QuantAxis::Column}) {
        // Every block spans 1..8 (MX6 keeps four bits at the block scale).
        const auto back = dequantize_matrix(quantize_matrix(m, kMX6, axis), kBF16);
        CHECK(back.bits == m.bits);
    }
}

TEST_CASE("scalar_convert examples") {
    CHECK(scalar_convert(0x3F800000, kFP32, kBF16) == 0x3F80);
    CHECK(scalar_convert(0x3FC00001, kFP32, kBF16) == 0x3FC0);
    CHECK(scalar_convert(fp32_from_float(1e30f), kFP32, kFP8E4M3) == max_finite(kFP8E4M3));
    CHECK(decode_value(max_finite(kFP8E4M3), kFP8E4M3) == 448.0);
    CHECK(scalar_convert(fp32_from_float(-1e30f), kFP32, kFP8E4M3) == (0x80u | max_finite(kFP8E4M3)));
    CHECK_THROWS_AS(scalar_convert(0x7F800000, kFP32, kBF16), Error);
    // Too small for the destination: flushed.
    CHECK(scalar_convert(fp32_from_float(1e-30f), kFP32, kFP8E5M2) == 0);
}

TEST_CASE("scalar_convert truncates like the bit-shift routine") {
    std::mt19937_64 rng(3);
    for (int n = 0; n < 20000; ++n) {
        const uint32_t x = testutil::random_normal(rng, kFP32, -30, 30, 0);
        const uint32_t y = scalar_convert(x, kFP32, kBF16);
        CHECK(y == (x >> 16));
    }
}

TEST_CASE("serialized block layout") {
    MxBlock b;
    b.e1 = 0x81;
    b.d = {1, 0, 0, 0, 0, 0, 0, 1};
    b.sign[0] = 1;
    b.sign[15] = 1;
    for (int i = 0; i < 16; ++i) b.mantissa[std::size_t(i)] = uint8_t(i % 4);
    std::vector<uint8_t> out;
    serialize_block(b, kMX4, out);
    REQUIRE(out.size() == kMX4.serialized_bytes());
    CHECK(out[0] == 0x81);
    CHECK(out[1] == 0x81);
    CHECK(out[2] == 0x01);
    CHECK(out[3] == 0x80);
    CHECK(out[4] == 0b11100100);  // mantissas 0,1,2,3 LSB-first
    CHECK(deserialize_block(out, kMX4) == b);
}

TEST_CASE("serialization round-trips random blocks") {
    std::mt19937_64 rng(13);
    for (const auto& f : kAllMx) {
        for (int n = 0; n < 2000; ++n) {
            const auto b = quantize_block(testutil::random_block(rng, kBF16), f, kBF16);
            std::vector<uint8_t> out;
            serialize_block(b, f, out);
            CHECK(out.size() == f.serialized_bytes());
            CHECK(deserialize_block(out, f) == b);
        }
    }
}
