// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "json.hpp"
#include "pimjitq/error.hpp"

namespace pimjitq::io {

namespace {

constexpr char kMagic[4] = {'P', 'J', 'M', 'X'};

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::string& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(static_cast<const char*>(data), std::streamsize(n));
    if (!out) throw Error("write failed: " + path);
}

void check_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw Error("tensor dims must be non-zero");
}

}  // namespace

std::string sidecar_path(const std::string& path) { return path + ".json"; }

int storage_bytes(const mx::ScalarFormat& fmt) {
    const int bits = 1 + fmt.exp_bits + fmt.mantissa_bits;
    return bits <= 8 ? 1 : bits <= 16 ? 2 : 4;
}

void write_tensor(const std::string& path, const mx::Matrix& m) {
    check_dims(m.rows, m.cols);
    if (m.bits.size() != m.rows * m.cols) throw Error("matrix storage does not match dims");
    const int w = storage_bytes(m.fmt);
    std::vector<uint8_t> raw(m.bits.size() * std::size_t(w));
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        for (int b = 0; b < w; ++b) raw[i * std::size_t(w) + std::size_t(b)] = uint8_t(m.bits[i] >> (8 * b));
    }
    spill(path, raw.data(), raw.size());
    nlohmann::ordered_json side;
    side["rows"] = m.rows;
    side["cols"] = m.cols;
    side["format"] = std::string(m.fmt.name);
    const std::string text = side.dump() + "\n";
    spill(sidecar_path(path), text.data(), text.size());
}

mx::Matrix read_tensor(const std::string& path) {
    const auto side_bytes = slurp(sidecar_path(path));
    nlohmann::json side;
    std::size_t rows = 0, cols = 0;
    std::string fmt_name;
    try {
        side = nlohmann::json::parse(side_bytes.begin(), side_bytes.end());
        rows = side.at("rows").get<std::size_t>();
        cols = side.at("cols").get<std::size_t>();
        fmt_name = side.at("format").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed tensor sidecar: " + std::string(e.what()));
    }
    check_dims(rows, cols);
    mx::Matrix m(rows, cols, mx::scalar_format(fmt_name));
    const auto raw = slurp(path);
    const std::size_t w = std::size_t(storage_bytes(m.fmt));
    if (raw.size() != rows * cols * w) {
        throw Error("tensor file size " + std::to_string(raw.size()) + " does not match " +
                    std::to_string(rows) + "x" + std::to_string(cols) + " " + fmt_name);
    }
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        uint32_t v = 0;
        for (std::size_t b = 0; b < w; ++b) v |= uint32_t(raw[i * w + b]) << (8 * b);
        m.bits[i] = v;
    }
    return m;
}

std::size_t mx_block_bytes(const mx::MxFormat& fmt) {
    return 1 + 1 + 2 + (std::size_t(mx::kBlockSize) * std::size_t(fmt.mantissa_bits) + 7) / 8;
}

std::vector<uint8_t> encode_mx(const mx::QuantizedMatrix& q) {
    if (q.blocks.size() != q.map.block_count()) throw Error("block count does not match dims");
    nlohmann::ordered_json h;
    h["format"] = std::string(q.fmt.name);
    h["src"] = std::string(q.src.name);
    h["axis"] = std::string(mx::to_string(q.map.axis));
    h["rows"] = q.map.rows;
    h["cols"] = q.map.cols;
    h["block_bytes"] = mx_block_bytes(q.fmt);
    const std::string header = h.dump();

    std::vector<uint8_t> out(kMagic, kMagic + 4);
    const uint32_t n = uint32_t(header.size());
    for (int b = 0; b < 4; ++b) out.push_back(uint8_t(n >> (8 * b)));
    out.insert(out.end(), header.begin(), header.end());
    for (const auto& blk : q.blocks) mx::serialize_block(blk, q.fmt, out);
    return out;
}

mx::QuantizedMatrix decode_mx(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error("not an MX tensor file");
    }
    uint32_t n = 0;
    for (int b = 0; b < 4; ++b) n |= uint32_t(bytes[4 + std::size_t(b)]) << (8 * b);
    if (bytes.size() < 8 + std::size_t(n)) throw Error("truncated MX header");

    mx::QuantizedMatrix q;
    std::size_t block_bytes = 0;
    try {
        const auto h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + n);
        q.fmt = mx::mx_format(h.at("format").get<std::string>());
        q.src = mx::scalar_format(h.value("src", std::string("BF16")));
        const auto axis = mx::parse_axis(h.at("axis").get<std::string>());
        const auto rows = h.at("rows").get<std::size_t>();
        const auto cols = h.at("cols").get<std::size_t>();
        if (rows == 0 || cols == 0 || rows % 16 != 0 || cols % 16 != 0) {
            throw Error("MX tensor dims must be non-zero multiples of 16");
        }
        q.map = mx::BlockIndexMap{rows, cols, axis};
        block_bytes = h.at("block_bytes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed MX header: " + std::string(e.what()));
    }
    if (block_bytes != mx_block_bytes(q.fmt)) throw Error("block size does not match format");
    const std::size_t body = bytes.size() - 8 - n;
    if (body != q.map.block_count() * block_bytes) throw Error("MX payload size does not match dims");
    q.blocks.reserve(q.map.block_count());
    for (std::size_t i = 0; i < q.map.block_count(); ++i) {
        const uint8_t* p = bytes.data() + 8 + n + i * block_bytes;
        q.blocks.push_back(mx::deserialize_block({p, block_bytes}, q.fmt));
    }
    return q;
}

void write_mx(const std::string& path, const mx::QuantizedMatrix& q) {
    const auto bytes = encode_mx(q);
    spill(path, bytes.data(), bytes.size());
}

mx::QuantizedMatrix read_mx(const std::string& path) { return decode_mx(slurp(path)); }

mx::Matrix random_matrix(std::size_t rows, std::size_t cols, const mx::ScalarFormat& fmt,
                         uint64_t seed, const RandomTensorOptions& opt) {
    if (opt.min_scale > opt.max_scale) throw Error("min_scale exceeds max_scale");
    mx::Matrix m(rows, cols, fmt);
    // Raw engine output only, so the sequence is the same on every standard library.
    std::mt19937_64 rng(seed);
    const uint64_t span = uint64_t(opt.max_scale - opt.min_scale + 1);
    const uint64_t zero_cut = uint64_t(std::clamp(opt.zero_fraction, 0.0, 1.0) * 1e6);
    const int max_exp = (1 << fmt.exp_bits) - (fmt.ieee_specials ? 2 : 1);
    const uint32_t frac_mask = (1u << fmt.mantissa_bits) - 1u;
    for (auto& b : m.bits) {
        const uint64_t r0 = rng(), r1 = rng();
        if (r0 % 1000000 < zero_cut) {
            b = 0;
            continue;
        }
        const int k = opt.min_scale + int((r0 >> 20) % span);
        const int e = std::clamp(int(fmt.bias) + k, 1, max_exp);
        uint32_t frac = uint32_t(r1) & frac_mask;
        const uint32_t sign = uint32_t(r1 >> 63);
        uint32_t bits = (sign << (fmt.exp_bits + fmt.mantissa_bits)) |
                        (uint32_t(e) << fmt.mantissa_bits) | frac;
        if (!mx::is_finite(bits, fmt)) bits &= ~1u;  // E4M3 keeps S.1111.111 for NaN
        b = bits;
    }
    return m;
}

}  // namespace pimjitq::io
