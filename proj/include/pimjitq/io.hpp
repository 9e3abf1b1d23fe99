// SPDX-License-Identifier: Apache-2.0
//
// Tensor files and seeded test tensors.
//
// Binary tensor: raw little-endian element bit patterns, row-major, at the
// storage width of the format (1, 2 or 4 bytes), plus a JSON sidecar
// `<path>.json` holding {rows, cols, format}.
//
// MX tensor: "PJMX" magic, u32 LE header length, JSON header
// {format, src, axis, rows, cols, block_bytes}, then serialized blocks in
// block-index order.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pimjitq/mxfmt.hpp"

namespace pimjitq::io {

std::string sidecar_path(const std::string& path);
int storage_bytes(const mx::ScalarFormat& fmt);

void write_tensor(const std::string& path, const mx::Matrix& m);
mx::Matrix read_tensor(const std::string& path);

std::size_t mx_block_bytes(const mx::MxFormat& fmt);
std::vector<uint8_t> encode_mx(const mx::QuantizedMatrix& q);
mx::QuantizedMatrix decode_mx(const std::vector<uint8_t>& bytes);
void write_mx(const std::string& path, const mx::QuantizedMatrix& q);
mx::QuantizedMatrix read_mx(const std::string& path);

struct RandomTensorOptions {
    int min_scale = -20;  // values are N(0,1) * 2^k with k uniform in [min, max]
    int max_scale = 20;
    double zero_fraction = 0.1;
};

// Deterministic for a given (shape, format, seed, options).
mx::Matrix random_matrix(std::size_t rows, std::size_t cols, const mx::ScalarFormat& fmt,
                         uint64_t seed, const RandomTensorOptions& opt = {});

}  // namespace pimjitq::io
