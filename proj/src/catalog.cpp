// SPDX-License-Identifier: Apache-2.0
#include "pimjitq/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pimjitq/error.hpp"

namespace pimjitq::catalog {

namespace detail {
extern const std::string_view kBuiltinCatalog;
}

double LlmConfig::param_estimate() const {
    return 12.0 * double(L) * double(H) * double(H) + double(vocab) * double(H);
}

void LlmConfig::validate() const {
    auto fail = [&](const std::string& why) { throw Error("model " + name + ": " + why); };
    if (name.empty()) throw Error("model without a name");
    if (L <= 0 || H <= 0 || A <= 0 || SL <= 0 || B <= 0 || TP <= 0 || PP <= 0 ||
        microbatches <= 0) {
        fail("all sizes must be positive");
    }
    if (H % A != 0) fail("H must be divisible by A");
    if (H % 16 != 0) fail("H must be a multiple of 16");
    if (H % TP != 0 || (H / TP) % 16 != 0) fail("H/TP must be a multiple of 16");
    if (SL % 16 != 0) fail("SL must be a multiple of 16");
}

std::vector<Gemm> block_gemms(const LlmConfig& m) {
    const int64_t t = m.tokens(), h = m.H, tp = m.TP;
    return {
        {"qkv", t, 3 * h / tp, h, true},
        {"scores", t, m.SL, h / tp, false},
        {"context", t, h / tp, m.SL, false},
        {"attn_out", t, h, h / tp, true},
        {"fc1", t, 4 * h / tp, h, true},
        {"fc2", t, h, 4 * h / tp, true},
    };
}

namespace {

LlmConfig parse_model(const nlohmann::json& j) {
    LlmConfig m;
    try {
        m.name = j.at("name").get<std::string>();
        m.L = j.at("L").get<int64_t>();
        m.H = j.at("H").get<int64_t>();
        m.A = j.at("A").get<int64_t>();
        m.SL = j.at("SL").get<int64_t>();
        m.B = j.value("B", int64_t{1});
        m.TP = j.value("TP", int64_t{1});
        m.PP = j.value("PP", int64_t{1});
        m.microbatches = j.value("microbatches", int64_t{1});
        m.vocab = j.value("vocab", int64_t{0});
        m.params = j.value("params", 0.0);
        m.source = j.value("source", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("catalog entry: ") + e.what());
    }
    m.validate();
    return m;
}

}  // namespace

Catalog Catalog::from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("catalog is not valid JSON: ") + e.what());
    }
    const nlohmann::json* list = &j;
    if (j.is_object()) {
        if (!j.contains("models")) throw Error("catalog object without \"models\"");
        list = &j["models"];
    }
    if (!list->is_array()) throw Error("catalog models must be a list");
    Catalog c;
    for (const auto& e : *list) {
        LlmConfig m = parse_model(e);
        if (c.contains(m.name)) throw Error("duplicate model in catalog: " + m.name);
        c.models_.push_back(std::move(m));
    }
    return c;
}

Catalog Catalog::builtin() {
    static const Catalog c = from_json(detail::kBuiltinCatalog);
    return c;
}

Catalog Catalog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open catalog file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void Catalog::merge(const Catalog& other) {
    for (const auto& m : other.models_) {
        auto it = std::find_if(models_.begin(), models_.end(),
                               [&](const LlmConfig& x) { return x.name == m.name; });
        if (it != models_.end()) {
            *it = m;
        } else {
            models_.push_back(m);
        }
    }
}

bool Catalog::contains(std::string_view name) const {
    return std::any_of(models_.begin(), models_.end(),
                       [&](const LlmConfig& m) { return m.name == name; });
}

const LlmConfig& Catalog::get(std::string_view name) const {
    for (const auto& m : models_) {
        if (m.name == name) return m;
    }
    throw Error("unknown model: " + std::string(name));
}

std::vector<std::string> Catalog::names() const {
    std::vector<std::string> out;
    for (const auto& m : models_) out.push_back(m.name);
    return out;
}

std::string Catalog::to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "pimjitq.catalog/1";
    j["models"] = nlohmann::ordered_json::array();
    for (const auto& m : models_) {
        nlohmann::ordered_json e;
        e["name"] = m.name;
        e["L"] = m.L;
        e["H"] = m.H;
        e["A"] = m.A;
        e["SL"] = m.SL;
        e["B"] = m.B;
        e["TP"] = m.TP;
        e["PP"] = m.PP;
        e["microbatches"] = m.microbatches;
        e["vocab"] = m.vocab;
        e["params"] = m.params;
        e["source"] = m.source;
        j["models"].push_back(e);
    }
    return j.dump(2);
}

const LlmConfig& get_model(std::string_view name) {
    static const Catalog c = Catalog::builtin();
    return c.get(name);
}

}  // namespace pimjitq::catalog
