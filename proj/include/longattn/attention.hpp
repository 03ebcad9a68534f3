#ifndef LONGATTN_ATTENTION_HPP
#define LONGATTN_ATTENTION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longattn/common.hpp"
#include "longattn/model.hpp"

namespace longattn {

// ---------------------------------------------------------------------------
// Attention sources. Either first-layer weights of a real model, or a
// synthetic closed-form pattern used to exercise the scoring math.
// ---------------------------------------------------------------------------

enum class SyntheticKind { Uniform, Sink, Local, Banded };

struct SyntheticSource {
    SyntheticKind kind = SyntheticKind::Uniform;
    uint32_t band_width = 0;  // Banded only

    std::string name() const {
        switch (kind) {
            case SyntheticKind::Uniform: return "uniform";
            case SyntheticKind::Sink: return "sink";
            case SyntheticKind::Local: return "local";
            case SyntheticKind::Banded: return "banded:" + std::to_string(band_width);
        }
        return "uniform";
    }
};

/// Parses "uniform" | "sink" | "local" | "banded:<width>".
inline SyntheticSource parse_synthetic(const std::string& s) {
    if (s == "uniform") return {SyntheticKind::Uniform, 0};
    if (s == "sink") return {SyntheticKind::Sink, 0};
    if (s == "local") return {SyntheticKind::Local, 0};
    if (s.rfind("banded:", 0) == 0) {
        const std::string width = s.substr(7);
        uint32_t w = 0;
        try {
            w = static_cast<uint32_t>(std::stoul(width));
        } catch (...) {
            throw ConfigError("bad banded width '" + width + "'");
        }
        if (w == 0) throw ConfigError("banded width must be positive");
        return {SyntheticKind::Banded, w};
    }
    throw ConfigError("unknown synthetic pattern '" + s +
                      "' (expected uniform|sink|local|banded:<w>)");
}

struct RealModel {
    ModelConfig config;
    LayerWeights weights;
    std::vector<double> rope_inv_freq;  // theta^(-2j/head_dim), j < head_dim/2
};

struct AttentionSource {
    std::optional<SyntheticSource> synthetic;
    std::shared_ptr<const RealModel> real;

    static AttentionSource make_synthetic(SyntheticSource s) {
        AttentionSource src;
        src.synthetic = s;
        return src;
    }

    static AttentionSource make_real(ModelConfig config, LayerWeights weights) {
        AttentionSource src;
        std::vector<double> inv_freq(config.head_dim / 2);
        for (uint32_t j = 0; j < inv_freq.size(); ++j)
            inv_freq[j] = std::pow(config.rope_theta, -2.0 * j / config.head_dim);
        src.real = std::make_shared<RealModel>(
            RealModel{config, std::move(weights), std::move(inv_freq)});
        return src;
    }

    bool is_synthetic() const { return synthetic.has_value(); }

    std::string fingerprint() const {
        if (synthetic) return "synthetic:" + synthetic->name();
        return "fnv1a64:" + hex64(real->weights.checksum);
    }
};

// ---------------------------------------------------------------------------
// Synthetic patterns. Rows are stochastic and causal by construction.
// Positions q, p are 1-based with p <= q.
// ---------------------------------------------------------------------------

inline double synthetic_entry(const SyntheticSource& s, uint64_t q, uint64_t p) {
    switch (s.kind) {
        case SyntheticKind::Uniform:
            return 1.0 / static_cast<double>(q);
        case SyntheticKind::Sink:
            return p == 1 ? 1.0 : 0.0;
        case SyntheticKind::Local:
            if (q == 1) return p == 1 ? 1.0 : 0.0;
            return p == q - 1 ? 1.0 : 0.0;
        case SyntheticKind::Banded: {
            const uint64_t b = std::min<uint64_t>(s.band_width, q);
            return p > q - b ? 1.0 / static_cast<double>(b) : 0.0;
        }
    }
    return 0.0;
}

/// Causal matrix in lower-triangular storage: row q (1-based) holds
/// exactly q entries for keys 1..q.
using CausalMatrix = std::vector<std::vector<double>>;

inline CausalMatrix synthetic_matrix(const SyntheticSource& s, uint32_t window) {
    if (window == 0) throw ConfigError("synthetic matrix needs window >= 1");
    CausalMatrix m(window);
    for (uint32_t q = 1; q <= window; ++q) {
        m[q - 1].resize(q);
        for (uint32_t p = 1; p <= q; ++p) m[q - 1][p - 1] = synthetic_entry(s, q, p);
    }
    return m;
}

inline CausalMatrix synthetic_matrix(SyntheticKind kind, uint32_t window,
                                     uint32_t band_width = 0) {
    return synthetic_matrix(SyntheticSource{kind, band_width}, window);
}

// ---------------------------------------------------------------------------
// Online softmax. Maintains the running maximum, the rescaled normalizer
// S = sum exp(x - m), and the rescaled squared accumulator
// S2 = sum exp(2 (x - m)). When the maximum moves, S picks up a factor
// exp(m_old - m_new) and S2 the square of that factor.
// ---------------------------------------------------------------------------

struct OnlineSoftmax {
    double running_max = -std::numeric_limits<double>::infinity();
    double denom = 0.0;
    double sq_denom = 0.0;

    void update(double logit) {
        const double m = std::max(running_max, logit);
        const double scale = std::exp(running_max - m);  // exp(-inf) == 0 on first use
        const double e = std::exp(logit - m);
        denom = denom * scale + e;
        sq_denom = sq_denom * scale * scale + e * e;
        running_max = m;
    }

    /// Probability of an element with the given logit, once all logits seen.
    double prob(double logit) const { return std::exp(logit - running_max) / denom; }
};

// ---------------------------------------------------------------------------
// Streaming row statistics: everything depscore needs from one query row.
// ---------------------------------------------------------------------------

struct AttentionRowStats {
    uint32_t q = 0;               // 1-based query position
    double distant_mass = 0.0;    // sum of M[q][p] over p <= q-k
    double distant_sq_mass = 0.0; // sum of M[q][p]^2 over the same region
    uint32_t distant_count = 0;   // max(q-k, 0)
};

enum class Precision { Float32Logits, Float64Full };

namespace detail {

template <typename T>
struct Projected {
    std::vector<T> q;  // [rows][n_query_heads][head_dim]
    std::vector<T> k;  // [rows][n_kv_heads][head_dim]
};

/// Embedding lookup + RMS normalization with gain. The RMS factor is
/// computed in double for both precisions; only the products round to T.
template <typename T>
inline void hidden_state(const ModelConfig& c, const LayerWeights& w, uint32_t token, T* out) {
    const float* emb = &w.token_embedding[static_cast<size_t>(token) * c.hidden_dim];
    double ss = 0.0;
    for (uint32_t i = 0; i < c.hidden_dim; ++i) ss += static_cast<double>(emb[i]) * emb[i];
    const double inv_rms = 1.0 / std::sqrt(ss / c.hidden_dim + c.norm_eps);
    for (uint32_t i = 0; i < c.hidden_dim; ++i)
        out[i] = static_cast<T>(static_cast<T>(emb[i]) * static_cast<T>(inv_rms) *
                                static_cast<T>(w.attn_norm_gain[i]));
}

/// Rotary rotation in half-split pairs (j, j + head_dim/2); angles and trig
/// in double regardless of T, since large positions lose too many bits in
/// float argument reduction.
template <typename T>
inline void apply_rope(T* vec, uint32_t head_dim, uint64_t pos, const double* inv_freq) {
    const uint32_t half = head_dim / 2;
    for (uint32_t j = 0; j < half; ++j) {
        const double angle = static_cast<double>(pos) * inv_freq[j];
        const T c = static_cast<T>(std::cos(angle));
        const T s = static_cast<T>(std::sin(angle));
        const T x0 = vec[j];
        const T x1 = vec[j + half];
        vec[j] = x0 * c - x1 * s;
        vec[j + half] = x1 * c + x0 * s;
    }
}

template <typename T>
inline void project_rows(const std::vector<float>& weight, uint32_t out_rows, uint32_t hidden,
                         const T* in, T* out) {
    for (uint32_t r = 0; r < out_rows; ++r) {
        const float* row = &weight[static_cast<size_t>(r) * hidden];
        T acc = T(0);
        for (uint32_t i = 0; i < hidden; ++i) acc += static_cast<T>(row[i]) * in[i];
        out[r] = acc;
    }
}

/// Projects tokens [start, start+rows) into rotated query/key head spaces.
template <typename T>
inline void project_tile(const RealModel& model, std::span<const uint32_t> tokens,
                         uint64_t start, uint32_t rows, bool queries, bool keys,
                         Projected<T>& out) {
    const ModelConfig& c = model.config;
    const uint32_t q_dim = c.n_query_heads * c.head_dim;
    const uint32_t k_dim = c.n_kv_heads * c.head_dim;
    if (queries) out.q.resize(static_cast<size_t>(rows) * q_dim);
    if (keys) out.k.resize(static_cast<size_t>(rows) * k_dim);
    std::vector<T> hidden(c.hidden_dim);
    for (uint32_t r = 0; r < rows; ++r) {
        const uint64_t pos = start + r;
        hidden_state(c, model.weights, tokens[pos], hidden.data());
        if (queries) {
            T* q = &out.q[static_cast<size_t>(r) * q_dim];
            project_rows(model.weights.w_q, q_dim, c.hidden_dim, hidden.data(), q);
            for (uint32_t h = 0; h < c.n_query_heads; ++h)
                apply_rope(q + static_cast<size_t>(h) * c.head_dim, c.head_dim, pos,
                           model.rope_inv_freq.data());
        }
        if (keys) {
            T* k = &out.k[static_cast<size_t>(r) * k_dim];
            project_rows(model.weights.w_k, k_dim, c.hidden_dim, hidden.data(), k);
            for (uint32_t h = 0; h < c.n_kv_heads; ++h)
                apply_rope(k + static_cast<size_t>(h) * c.head_dim, c.head_dim, pos,
                           model.rope_inv_freq.data());
        }
    }
}

template <typename T>
inline T dot(const T* a, const T* b, uint32_t n) {
    T acc = T(0);
    for (uint32_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline void check_tokens(const ModelConfig& c, std::span<const uint32_t> tokens) {
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= c.vocab_size)
            throw DataError("token ID " + std::to_string(tokens[i]) + " at position " +
                            std::to_string(i) + " exceeds the scoring model's vocab size " +
                            std::to_string(c.vocab_size));
    }
}

/// Full probability row for query position q0 (0-based): per-head causal
/// softmax, then the arithmetic mean of per-head rows.
template <typename T>
inline std::vector<double> real_attention_row(const RealModel& model,
                                              std::span<const uint32_t> tokens, uint64_t q0) {
    const ModelConfig& c = model.config;
    const uint32_t heads = c.n_query_heads;
    const uint32_t group = c.group_size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.head_dim));
    const uint64_t keys = q0 + 1;

    Projected<T> qp;
    project_tile<T>(model, tokens, q0, 1, /*queries=*/true, /*keys=*/false, qp);

    // Logits for all keys, per head; key tiles keep the working set small.
    std::vector<std::vector<double>> logits(heads, std::vector<double>(keys));
    constexpr uint64_t kKeyBlock = 512;
    Projected<T> kp;
    for (uint64_t p0 = 0; p0 < keys; p0 += kKeyBlock) {
        const uint32_t rows = static_cast<uint32_t>(std::min(kKeyBlock, keys - p0));
        project_tile<T>(model, tokens, p0, rows, /*queries=*/false, /*keys=*/true, kp);
        for (uint32_t h = 0; h < heads; ++h) {
            const T* qv = &qp.q[static_cast<size_t>(h) * c.head_dim];
            const uint32_t kv = h / group;
            for (uint32_t r = 0; r < rows; ++r) {
                const T* kvp =
                    &kp.k[(static_cast<size_t>(r) * c.n_kv_heads + kv) * c.head_dim];
                logits[h][p0 + r] =
                    static_cast<double>(dot(qv, kvp, c.head_dim)) * inv_sqrt_d;
            }
        }
    }

    std::vector<double> row(keys, 0.0);
    for (uint32_t h = 0; h < heads; ++h) {
        double m = -std::numeric_limits<double>::infinity();
        for (double l : logits[h]) m = std::max(m, l);
        double denom = 0.0;
        for (double l : logits[h]) denom += std::exp(l - m);
        for (uint64_t p = 0; p < keys; ++p) row[p] += std::exp(logits[h][p] - m) / denom;
    }
    for (double& v : row) v /= heads;
    return row;
}

inline AttentionRowStats synthetic_row_stats(const SyntheticSource& s, uint64_t q, uint32_t k) {
    AttentionRowStats st;
    st.q = static_cast<uint32_t>(q);
    st.distant_count = q > k ? static_cast<uint32_t>(q - k) : 0;
    if (st.distant_count == 0) return st;
    const uint64_t cnt = st.distant_count;
    switch (s.kind) {
        case SyntheticKind::Uniform:
            st.distant_mass = static_cast<double>(cnt) / static_cast<double>(q);
            st.distant_sq_mass =
                static_cast<double>(cnt) / (static_cast<double>(q) * static_cast<double>(q));
            break;
        case SyntheticKind::Sink:
            st.distant_mass = 1.0;
            st.distant_sq_mass = 1.0;
            break;
        case SyntheticKind::Local:
            if (k == 1 && q >= 2) {
                st.distant_mass = 1.0;
                st.distant_sq_mass = 1.0;
            }
            break;
        case SyntheticKind::Banded: {
            const uint64_t b = std::min<uint64_t>(s.band_width, q);
            const uint64_t in_band = b > k ? std::min<uint64_t>(b - k, cnt) : 0;
            st.distant_mass = static_cast<double>(in_band) / static_cast<double>(b);
            st.distant_sq_mass =
                static_cast<double>(in_band) / (static_cast<double>(b) * static_cast<double>(b));
            break;
        }
    }
    return st;
}

/// The tiled two-pass kernel for one query tile. Pass 1 establishes the
/// per-head online-softmax max and normalizer across key tiles; pass 2
/// re-forms per-key-tile probabilities for all heads jointly, averages the
/// heads, and accumulates distant mass and squared mass. The head-averaged
/// entry must exist before squaring, which is why a single rescaled pass
/// cannot produce the squared term.
template <typename T>
inline void real_tile_row_stats(const RealModel& model, std::span<const uint32_t> tokens,
                                uint32_t k, uint32_t tile, uint64_t tile_start,
                                uint32_t tile_rows, std::vector<AttentionRowStats>& out) {
    const ModelConfig& c = model.config;
    const uint32_t heads = c.n_query_heads;
    const uint32_t group = c.group_size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.head_dim));
    const uint64_t last_key = tile_start + tile_rows;  // keys < last_key are needed

    Projected<T> qp;
    project_tile<T>(model, tokens, tile_start, tile_rows, true, false, qp);

    // Pass 1: per-(row, head) running max and normalizer over key tiles in
    // ascending position order (the reduction order is fixed, so results are
    // bit-stable for a fixed tile size).
    std::vector<OnlineSoftmax> softmax(static_cast<size_t>(tile_rows) * heads);
    Projected<T> kp;
    for (uint64_t p0 = 0; p0 < last_key; p0 += tile) {
        const uint32_t krows = static_cast<uint32_t>(std::min<uint64_t>(tile, last_key - p0));
        project_tile<T>(model, tokens, p0, krows, false, true, kp);
        // rows below the key tile's start attend no keys in it
        const uint32_t r_begin =
            p0 > tile_start ? static_cast<uint32_t>(p0 - tile_start) : 0;
        for (uint32_t r = r_begin; r < tile_rows; ++r) {
            const uint64_t qpos = tile_start + r;
            const uint32_t limit =
                static_cast<uint32_t>(std::min<uint64_t>(krows, qpos - p0 + 1));
            for (uint32_t h = 0; h < heads; ++h) {
                const T* qv = &qp.q[(static_cast<size_t>(r) * heads + h) * c.head_dim];
                const uint32_t kv = h / group;
                OnlineSoftmax& os = softmax[static_cast<size_t>(r) * heads + h];
                for (uint32_t p = 0; p < limit; ++p) {
                    const T* kvp =
                        &kp.k[(static_cast<size_t>(p) * c.n_kv_heads + kv) * c.head_dim];
                    os.update(static_cast<double>(dot(qv, kvp, c.head_dim)) * inv_sqrt_d);
                }
            }
        }
    }

    // Pass 2: head-averaged probabilities, accumulated into the distant
    // region p <= q - k (1-based). Also validates row stochasticity.
    std::vector<double> row_sum(tile_rows, 0.0);
    std::vector<double> mass(tile_rows, 0.0);
    std::vector<double> sq_mass(tile_rows, 0.0);
    for (uint64_t p0 = 0; p0 < last_key; p0 += tile) {
        const uint32_t krows = static_cast<uint32_t>(std::min<uint64_t>(tile, last_key - p0));
        project_tile<T>(model, tokens, p0, krows, false, true, kp);
        const uint32_t r_begin =
            p0 > tile_start ? static_cast<uint32_t>(p0 - tile_start) : 0;
        for (uint32_t r = r_begin; r < tile_rows; ++r) {
            const uint64_t qpos = tile_start + r;
            const uint32_t limit =
                static_cast<uint32_t>(std::min<uint64_t>(krows, qpos - p0 + 1));
            const OnlineSoftmax* os = &softmax[static_cast<size_t>(r) * heads];
            for (uint32_t p = 0; p < limit; ++p) {
                double prob = 0.0;
                for (uint32_t h = 0; h < heads; ++h) {
                    const T* qv = &qp.q[(static_cast<size_t>(r) * heads + h) * c.head_dim];
                    const T* kvp =
                        &kp.k[(static_cast<size_t>(p) * c.n_kv_heads + h / group) * c.head_dim];
                    prob += os[h].prob(static_cast<double>(dot(qv, kvp, c.head_dim)) *
                                       inv_sqrt_d);
                }
                prob /= heads;
                row_sum[r] += prob;
                // 0-based distant region: key position <= qpos - k
                if (qpos >= k && p0 + p <= qpos - k) {
                    mass[r] += prob;
                    sq_mass[r] += prob * prob;
                }
            }
        }
    }

    for (uint32_t r = 0; r < tile_rows; ++r) {
        const uint64_t q = tile_start + r + 1;  // 1-based
        if (!std::isfinite(row_sum[r]) || std::abs(row_sum[r] - 1.0) > 1e-4)
            throw DataError("attention row " + std::to_string(q) + " sums to " +
                            std::to_string(row_sum[r]) + " (expected 1 within 1e-4); chunk rejected");
        AttentionRowStats st;
        st.q = static_cast<uint32_t>(q);
        st.distant_count = q > k ? static_cast<uint32_t>(q - k) : 0;
        st.distant_mass = mass[r];
        st.distant_sq_mass = sq_mass[r];
        out[tile_start + r] = st;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Oracle path: the full probability row for 1-based query position q.
/// Materializes O(q) per call; intended for windows up to a few thousand.
inline std::vector<double> attention_row(std::span<const uint32_t> tokens,
                                         const AttentionSource& source, uint32_t q,
                                         Precision precision = Precision::Float32Logits) {
    const uint64_t window = tokens.size();
    if (q == 0 || q > window)
        throw DataError("query position " + std::to_string(q) + " out of range [1, " +
                        std::to_string(window) + "]");
    if (source.is_synthetic()) {
        std::vector<double> row(q);
        for (uint32_t p = 1; p <= q; ++p) row[p - 1] = synthetic_entry(*source.synthetic, q, p);
        return row;
    }
    detail::check_tokens(source.real->config, tokens);
    if (precision == Precision::Float64Full)
        return detail::real_attention_row<double>(*source.real, tokens, q - 1);
    return detail::real_attention_row<float>(*source.real, tokens, q - 1);
}

/// Full causal matrix from any source (oracle path).
inline CausalMatrix full_matrix(std::span<const uint32_t> tokens, const AttentionSource& source,
                                Precision precision = Precision::Float32Logits) {
    if (source.is_synthetic())
        return synthetic_matrix(*source.synthetic, static_cast<uint32_t>(tokens.size()));
    CausalMatrix m(tokens.size());
    for (uint32_t q = 1; q <= tokens.size(); ++q)
        m[q - 1] = attention_row(tokens, source, q, precision);
    return m;
}

/// Streaming statistics for every query row of one chunk, never holding more
/// than one query tile and one key tile of projections in memory. Results
/// are invariant to the tile size within float tolerance, and bit-stable
/// run-to-run for a fixed tile size.
inline std::vector<AttentionRowStats> stream_row_stats(std::span<const uint32_t> tokens,
                                                       const AttentionSource& source, uint32_t k,
                                                       uint32_t tile, unsigned workers = 1) {
    const uint64_t window = tokens.size();
    if (window == 0) throw DataError("empty chunk");
    if (k == 0) throw ConfigError("minimum token distance k must be positive");
    if (k >= window)
        throw ConfigError("minimum token distance k=" + std::to_string(k) +
                          " >= window size " + std::to_string(window) +
                          ": no token has sufficient context");
    if (tile == 0) throw ConfigError("tile size must be >= 1");

    std::vector<AttentionRowStats> stats(window);
    if (source.is_synthetic()) {
        for (uint64_t q = 1; q <= window; ++q)
            stats[q - 1] = detail::synthetic_row_stats(*source.synthetic, q, k);
        return stats;
    }

    detail::check_tokens(source.real->config, tokens);
    const RealModel& model = *source.real;
    const uint64_t n_tiles = (window + tile - 1) / tile;
    parallel_for(n_tiles, workers, [&](size_t t) {
        const uint64_t start = static_cast<uint64_t>(t) * tile;
        const uint32_t rows = static_cast<uint32_t>(std::min<uint64_t>(tile, window - start));
        detail::real_tile_row_stats<float>(model, tokens, k, tile, start, rows, stats);
    });
    return stats;
}

}  // namespace longattn

#endif  // LONGATTN_ATTENTION_HPP
