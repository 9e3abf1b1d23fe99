// SPDX-License-Identifier: Apache-2.0
//
// Registry of LLM training configurations and the per-block GEMM shapes
// derived from them (GPT-style block: QKV, attention scores and context,
// attention output, two MLP GEMMs).
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pimjitq::catalog {

struct LlmConfig {
    std::string name;
    int64_t L = 0;   // layers
    int64_t H = 0;   // hidden size
    int64_t A = 0;   // attention heads
    int64_t SL = 0;  // sequence length
    int64_t B = 1;   // per-device micro-batch (sequences)
    int64_t TP = 1;
    int64_t PP = 1;
    int64_t microbatches = 1;  // per iteration and pipeline
    int64_t vocab = 0;
    double params = 0;  // published parameter count
    std::string source;

    int64_t tokens() const { return B * SL; }
    // Weight elements of one block held by one device.
    int64_t block_weights() const { return 12 * H * H / TP; }
    int64_t layers_per_stage() const { return (L + PP - 1) / PP; }
    // 12 L H^2 plus the embedding table.
    double param_estimate() const;
    // Throws pimjitq::Error on violated shape constraints.
    void validate() const;
};

struct Gemm {
    std::string name;
    int64_t M = 0;
    int64_t N = 0;
    int64_t K = 0;
    bool weights = false;  // B operand is a weight tensor (quantized by JIT-Q)
};

// Six TP-sharded GEMMs of one block on one device.
std::vector<Gemm> block_gemms(const LlmConfig& m);

class Catalog {
public:
    static Catalog builtin();
    static Catalog from_json(std::string_view text);
    static Catalog load(const std::string& path);

    // Entries of `other` replace same-named entries; new names are appended.
    void merge(const Catalog& other);

    const LlmConfig& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;
    const std::vector<LlmConfig>& models() const { return models_; }

    std::string to_json() const;

private:
    std::vector<LlmConfig> models_;
};

// Lookup in the built-in catalog.
const LlmConfig& get_model(std::string_view name);

}  // namespace pimjitq::catalog
