#ifndef LONGATTN_MODEL_HPP
#define LONGATTN_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"
#include "longattn/safetensors.hpp"

namespace longattn {

/// Architecture parameters of the scoring model's first decoder layer.
struct ModelConfig {
    uint32_t hidden_dim = 0;
    uint32_t n_query_heads = 0;
    uint32_t n_kv_heads = 0;
    uint32_t head_dim = 0;
    double rope_theta = 500000.0;
    double norm_eps = 1e-5;
    uint32_t vocab_size = 0;

    uint32_t group_size() const { return n_query_heads / n_kv_heads; }
};

inline void validate(const ModelConfig& c) {
    if (c.hidden_dim == 0 || c.n_query_heads == 0 || c.n_kv_heads == 0 || c.head_dim == 0 ||
        c.vocab_size == 0)
        throw ModelError("model config: all dimensions must be positive");
    if (c.n_query_heads % c.n_kv_heads != 0)
        throw ModelError("model config: n_kv_heads (" + std::to_string(c.n_kv_heads) +
                         ") must divide n_query_heads (" + std::to_string(c.n_query_heads) + ")");
    if (c.n_query_heads * c.head_dim != c.hidden_dim)
        throw ModelError("model config: n_query_heads * head_dim (" +
                         std::to_string(c.n_query_heads * c.head_dim) +
                         ") must equal hidden_dim (" + std::to_string(c.hidden_dim) + ")");
    if (c.rope_theta <= 0.0) throw ModelError("model config: rope_theta must be positive");
    if (c.norm_eps <= 0.0) throw ModelError("model config: norm_eps must be positive");
}

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("malformed model config " + path + ": " + e.what());
    }
    ModelConfig c;
    try {
        c.hidden_dim = j.at("hidden_dim").get<uint32_t>();
        c.n_query_heads = j.at("n_query_heads").get<uint32_t>();
        c.n_kv_heads = j.at("n_kv_heads").get<uint32_t>();
        c.head_dim = j.at("head_dim").get<uint32_t>();
        c.vocab_size = j.at("vocab_size").get<uint32_t>();
        c.rope_theta = j.value("rope_theta", 500000.0);
        c.norm_eps = j.value("norm_eps", 1e-5);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("model config " + path + " is missing fields: " + e.what());
    }
    validate(c);
    return c;
}

inline void save_model_config(const ModelConfig& c, const std::string& path) {
    nlohmann::ordered_json j;
    j["hidden_dim"] = c.hidden_dim;
    j["n_query_heads"] = c.n_query_heads;
    j["n_kv_heads"] = c.n_kv_heads;
    j["head_dim"] = c.head_dim;
    j["rope_theta"] = c.rope_theta;
    j["norm_eps"] = c.norm_eps;
    j["vocab_size"] = c.vocab_size;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ModelError("cannot write model config: " + path);
    out << j.dump(2) << "\n";
}

// Tensor names follow the LLaMA checkpoint convention so a layer-0 slice of
// a real model drops in unchanged.
constexpr const char* kEmbeddingTensor = "model.embed_tokens.weight";
constexpr const char* kNormGainTensor = "model.layers.0.input_layernorm.weight";
constexpr const char* kQueryProjTensor = "model.layers.0.self_attn.q_proj.weight";
constexpr const char* kKeyProjTensor = "model.layers.0.self_attn.k_proj.weight";

/// Everything needed to produce first-layer attention scores. Value and
/// output projections are never loaded; only the score path exists.
struct LayerWeights {
    std::vector<float> token_embedding;  // [vocab_size, hidden_dim], row-major
    std::vector<float> attn_norm_gain;   // [hidden_dim]
    std::vector<float> w_q;              // [n_query_heads*head_dim, hidden_dim]
    std::vector<float> w_k;              // [n_kv_heads*head_dim, hidden_dim]
    uint64_t checksum = 0;               // fnv-1a over the loaded tensor bytes
};

namespace detail {

inline void check_shape(const SafetensorsFile& file, const std::string& name,
                        const std::vector<uint64_t>& expected) {
    const TensorInfo& t = file.info(name);
    if (t.shape != expected) {
        auto fmt = [](const std::vector<uint64_t>& v) {
            std::string s = "[";
            for (size_t i = 0; i < v.size(); ++i)
                s += (i ? ", " : "") + std::to_string(v[i]);
            return s + "]";
        };
        throw ModelError("tensor '" + name + "' has shape " + fmt(t.shape) + " but " +
                         fmt(expected) + " is required by the model config");
    }
}

}  // namespace detail

/// Loads the four scoring tensors from a safetensors container, checking
/// shapes against the config. The checksum covers the raw loaded bytes in
/// fixed tensor order and is reported for provenance.
inline LayerWeights load_weights(const std::string& container_path, const ModelConfig& config) {
    validate(config);
    SafetensorsFile file{std::filesystem::path(container_path)};

    const char* required[] = {kEmbeddingTensor, kNormGainTensor, kQueryProjTensor,
                              kKeyProjTensor};
    std::string missing;
    for (const char* name : required) {
        if (!file.contains(name)) missing += std::string(missing.empty() ? "" : ", ") + name;
    }
    if (!missing.empty()) {
        std::string expected;
        for (const char* name : required)
            expected += std::string(expected.empty() ? "" : ", ") + name;
        throw ModelError("weight container " + container_path + " is missing tensors: " +
                         missing + " (expected: " + expected + ")");
    }

    detail::check_shape(file, kEmbeddingTensor, {config.vocab_size, config.hidden_dim});
    detail::check_shape(file, kNormGainTensor, {config.hidden_dim});
    detail::check_shape(file, kQueryProjTensor,
                        {static_cast<uint64_t>(config.n_query_heads) * config.head_dim,
                         config.hidden_dim});
    detail::check_shape(file, kKeyProjTensor,
                        {static_cast<uint64_t>(config.n_kv_heads) * config.head_dim,
                         config.hidden_dim});

    LayerWeights w;
    uint64_t checksum = kFnvOffset;
    for (const char* name : required) {
        const std::vector<uint8_t> raw = file.read_raw(name);
        checksum = fnv1a64(raw.data(), raw.size(), checksum);
    }
    w.token_embedding = file.read_f32(kEmbeddingTensor);
    w.attn_norm_gain = file.read_f32(kNormGainTensor);
    w.w_q = file.read_f32(kQueryProjTensor);
    w.w_k = file.read_f32(kKeyProjTensor);
    w.checksum = checksum;
    return w;
}

/// Deterministic synthetic weights for fixtures and smoke tests. Scales are
/// chosen so RMS-normalized states and unit-variance logits come out of the
/// projections, giving non-degenerate attention patterns.
inline LayerWeights synthesize_weights(const ModelConfig& config, uint64_t seed) {
    validate(config);
    SplitMix64 rng(seed);
    LayerWeights w;
    w.token_embedding.resize(static_cast<size_t>(config.vocab_size) * config.hidden_dim);
    for (float& v : w.token_embedding) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    w.attn_norm_gain.resize(config.hidden_dim);
    for (float& v : w.attn_norm_gain) v = static_cast<float>(rng.uniform(0.9, 1.1));
    const double proj_scale = std::sqrt(3.0 / config.hidden_dim);
    w.w_q.resize(static_cast<size_t>(config.n_query_heads) * config.head_dim * config.hidden_dim);
    for (float& v : w.w_q) v = static_cast<float>(rng.uniform(-proj_scale, proj_scale));
    w.w_k.resize(static_cast<size_t>(config.n_kv_heads) * config.head_dim * config.hidden_dim);
    for (float& v : w.w_k) v = static_cast<float>(rng.uniform(-proj_scale, proj_scale));

    uint64_t checksum = kFnvOffset;
    for (const auto* vec : {&w.token_embedding, &w.attn_norm_gain, &w.w_q, &w.w_k})
        checksum = fnv1a64(vec->data(), vec->size() * sizeof(float), checksum);
    w.checksum = checksum;
    return w;
}

/// Writes synthesized weights as an F32 container loadable by load_weights.
inline void save_weights(const LayerWeights& w, const ModelConfig& config,
                         const std::string& path) {
    write_safetensors(
        std::filesystem::path(path),
        {{kEmbeddingTensor, {{config.vocab_size, config.hidden_dim}, w.token_embedding}},
         {kNormGainTensor, {{config.hidden_dim}, w.attn_norm_gain}},
         {kQueryProjTensor,
          {{static_cast<uint64_t>(config.n_query_heads) * config.head_dim, config.hidden_dim},
           w.w_q}},
         {kKeyProjTensor,
          {{static_cast<uint64_t>(config.n_kv_heads) * config.head_dim, config.hidden_dim},
           w.w_k}}});
}

}  // namespace longattn

#endif  // LONGATTN_MODEL_HPP
