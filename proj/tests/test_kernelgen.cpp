// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "pimjitq/error.hpp"
#include "pimjitq/io.hpp"
#include "pimjitq/kernelgen.hpp"
#include "test_util.hpp"

using namespace pimjitq;
using namespace pimjitq::kernelgen;
using mx::QuantAxis;

namespace {

constexpr Variant kVariants[] = {Variant::Tiled, Variant::Strided, Variant::StridedOpt};
constexpr QuantAxis kAxes[] = {QuantAxis::Row, QuantAxis::Column};
const mx::MxFormat* const kMx[] = {&mx::kMX4, &mx::kMX6, &mx::kMX9};
const mx::ScalarFormat* const kSrc[] = {&mx::kBF16, &mx::kFP32};

std::string describe(const KernelSpec& s) {
    return std::string(to_string(s.variant)) + " " + std::string(s.src.name) + "->" +
           std::string(s.dst.name) + " " + std::string(mx::to_string(s.axis));
}

}  // namespace

TEST_CASE("shift loop trips track the source mantissa") {
    CHECK(shift_loop_trips(mx::kBF16) == 8);
    CHECK(shift_loop_trips(mx::kFP32) == 24);
}

TEST_CASE("variant names") {
    for (auto v : kVariants) CHECK(parse_variant(to_string(v)) == v);
    CHECK(scheme_for(Variant::Tiled) == placement::Scheme::Tiled);
    CHECK(scheme_for(Variant::StridedOpt) == placement::Scheme::Strided);
    CHECK_THROWS_AS(parse_variant("packed"), Error);
}

TEST_CASE("zero and constant tensors") {
    const auto cfg = testutil::small_hw();
    for (auto v : kVariants) {
        for (auto axis : kAxes) {
            const auto spec = make_spec(v, mx::kBF16, mx::kMX6, axis, 64, 64, cfg);
            mx::Matrix zero(64, 64, mx::kBF16);
            const auto rz = verify_kernel(spec, zero);
            CHECK(rz.pass);
            CHECK(rz.checked == 256);

            mx::Matrix ones(64, 64, mx::kBF16);
            for (auto& b : ones.bits) b = mx::bf16_from_float(-3.0f);
            const auto g = gen_quant_kernel(spec);
            const auto mem = place_tensor(ones, spec.layout);
            const auto out = unpack_output(spec, g.map, pim::execute_stream(g.stream, mem));
            for (const auto& blk : out.blocks) {
                CHECK(blk == out.blocks.front());
                CHECK(blk.sign[0] == 1);
            }
            CHECK(verify_kernel(spec, ones).pass);
        }
    }
}

TEST_CASE("random tensors match the reference for every combination") {
    const auto cfg = testutil::small_hw();
    uint64_t seed = 100;
    for (const auto* src : kSrc) {
        for (auto v : kVariants) {
            for (const auto* f : kMx) {
                for (auto axis : kAxes) {
                    const auto spec = make_spec(v, *src, *f, axis, 64, 64, cfg);
                    for (int n = 0; n < 8; ++n) {
                        const auto r = verify_kernel(spec, io::random_matrix(64, 64, *src, seed++));
                        INFO(describe(spec));
                        if (r.first) INFO("first mismatch in block " << r.first->block << " field "
                                                                     << r.first->field);
                        REQUIRE(r.pass);
                    }
                }
            }
        }
    }
}

TEST_CASE("non-square and multi-pack tensors") {
    const auto cfg = testutil::small_hw();
    const std::pair<std::size_t, std::size_t> dims[] = {{16, 16}, {48, 160}, {256, 64}, {128, 128}};
    uint64_t seed = 7;
    for (auto [r, c] : dims) {
        for (auto v : kVariants) {
            for (auto axis : kAxes) {
                const auto spec = make_spec(v, mx::kBF16, mx::kMX4, axis, r, c, cfg);
                INFO(describe(spec) << " " << r << "x" << c);
                REQUIRE(verify_kernel(spec, io::random_matrix(r, c, mx::kBF16, seed++)).pass);
            }
        }
    }
}

TEST_CASE("all variants produce the same quantized tensor") {
    const auto cfg = testutil::small_hw();
    const auto m = io::random_matrix(64, 128, mx::kBF16, 42);
    for (auto axis : kAxes) {
        std::optional<mx::QuantizedMatrix> first;
        for (auto v : kVariants) {
            const auto spec = make_spec(v, mx::kBF16, mx::kMX9, axis, 64, 128, cfg);
            const auto g = gen_quant_kernel(spec);
            const auto out =
                unpack_output(spec, g.map, pim::execute_stream(g.stream, place_tensor(m, spec.layout)));
            if (!first) {
                first = out;
            } else {
                CHECK(out.blocks == first->blocks);
            }
        }
        CHECK(first->blocks == mx::quantize_matrix(m, mx::kMX9, axis).blocks);
    }
}

TEST_CASE("command histograms") {
    const pim::HwConfig cfg;
    // 1024 x 4096 gives 16 tiles per unit: one full pack for BF16.
    for (auto axis : kAxes) {
        auto hist = [&](Variant v) {
            return quant_time(make_spec(v, mx::kBF16, mx::kMX6, axis, 1024, 4096, cfg)).histogram;
        };
        const auto tiled = hist(Variant::Tiled);
        const auto strided = hist(Variant::Strided);
        const auto opt = hist(Variant::StridedOpt);
        CHECK(strided.lane_shift == 0);
        CHECK(opt.lane_shift == 0);
        CHECK(opt.bit_shift < strided.bit_shift);
        CHECK(strided.bit_shift <= tiled.bit_shift);
        CHECK(3 * opt.bit_shift == strided.bit_shift);
        CHECK(opt.other == strided.other);
    }
}

TEST_CASE("quantization time is deterministic and ordered by variant") {
    const pim::HwConfig cfg;
    auto t = [&](Variant v) {
        return quant_time(make_spec(v, mx::kBF16, mx::kMX6, QuantAxis::Row, 1024, 4096, cfg));
    };
    const auto a = t(Variant::Strided), b = t(Variant::Strided);
    CHECK(a.total_ps == b.total_ps);
    CHECK(a.histogram == b.histogram);
    CHECK(t(Variant::StridedOpt).total_ps < a.total_ps);
    CHECK(a.total_ps < t(Variant::Tiled).total_ps);
    CHECK(a.total_ps == a.lane_shift_ps + a.bit_shift_ps + a.other_ps);
    CHECK(a.commands == a.histogram.total());
}

TEST_CASE("PIM time does not depend on the MX format") {
    const pim::HwConfig cfg;
    for (auto v : kVariants) {
        const auto t4 = quant_time(make_spec(v, mx::kBF16, mx::kMX4, QuantAxis::Row, 512, 512, cfg));
        const auto t9 = quant_time(make_spec(v, mx::kBF16, mx::kMX9, QuantAxis::Row, 512, 512, cfg));
        CHECK(t4.total_ps == t9.total_ps);
    }
}

TEST_CASE("scalar narrowing kernels") {
    const auto cfg = testutil::small_hw();
    const std::pair<const mx::ScalarFormat*, const mx::ScalarFormat*> pairs[] = {
        {&mx::kFP32, &mx::kBF16}, {&mx::kBF16, &mx::kFP8E4M3}, {&mx::kBF16, &mx::kFP8E5M2}};
    uint64_t seed = 900;
    for (auto [src, dst] : pairs) {
        for (auto v : {Variant::Tiled, Variant::Strided}) {
            const auto spec = make_scalar_spec(v, *src, *dst, 64, 64, cfg);
            CHECK(spec.is_scalar());
            for (int n = 0; n < 4; ++n) {
                INFO(src->name << "->" << dst->name);
                REQUIRE(verify_kernel(spec, io::random_matrix(64, 64, *src, seed++)).pass);
            }
        }
    }
    CHECK_THROWS_AS(gen_quant_kernel(make_scalar_spec(Variant::Tiled, mx::kBF16, mx::kFP32, 64, 64, cfg)),
                    Error);
}

TEST_CASE("verification report") {
    const auto cfg = testutil::small_hw();
    const auto spec = make_spec(Variant::StridedOpt, mx::kBF16, mx::kMX6, QuantAxis::Row, 32, 32, cfg);
    const auto r = verify_kernel(spec, io::random_matrix(32, 32, mx::kBF16, 1));
    const auto j = nlohmann::json::parse(verify_json(spec, r));
    CHECK(j["pass"] == true);
    CHECK(j["checked"] == 64);

    // A tampered memory image must be caught with a located mismatch.
    auto m = io::random_matrix(32, 32, mx::kBF16, 2);
    auto mem = place_tensor(m, spec.layout);
    m.bits[5] ^= 0x0100;  // the reference now differs in one exponent
    const auto bad = verify_kernel(spec, mem, m);
    CHECK_FALSE(bad.pass);
    REQUIRE(bad.first.has_value());
    CHECK(bad.first->block == 0);
}

TEST_CASE("generation errors") {
    auto cfg = testutil::small_hw();
    CHECK_THROWS_AS(make_spec(Variant::Tiled, mx::kBF16, mx::kMX6, QuantAxis::Row, 20, 16, cfg),
                    Error);
    CHECK_THROWS_AS(
        make_spec(Variant::Tiled, mx::kFP8E4M3, mx::kMX6, QuantAxis::Row, 16, 16, cfg), Error);
    auto no_cond = cfg;
    no_cond.cond_shift_support = false;
    CHECK_THROWS_AS(gen_quant_kernel(make_spec(Variant::StridedOpt, mx::kBF16, mx::kMX6,
                                               QuantAxis::Row, 16, 16, no_cond)),
                    Error);
    CHECK_NOTHROW(gen_quant_kernel(
        make_spec(Variant::Strided, mx::kBF16, mx::kMX6, QuantAxis::Row, 16, 16, no_cond)));
    auto few_regs = cfg;
    few_regs.regs_per_alu = 8;
    CHECK_THROWS_AS(gen_quant_kernel(make_spec(Variant::Strided, mx::kBF16, mx::kMX6,
                                               QuantAxis::Row, 16, 16, few_regs)),
                    Error);
}
