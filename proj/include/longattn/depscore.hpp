#ifndef LONGATTN_DEPSCORE_HPP
#define LONGATTN_DEPSCORE_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "longattn/attention.hpp"
#include "longattn/common.hpp"
#include "longattn/document.hpp"

namespace longattn {

/// The variance population for the distribution-uniformity score.
/// valid-only counts the (L-k)(L-k+1)/2 entries that actually exist in the
/// distant region; full-triangle counts the (L-k) x (L-k) rectangular block
/// including its structural zeros.
enum class PopulationMode { ValidOnly, FullTriangle };

inline const char* to_string(PopulationMode m) {
    return m == PopulationMode::ValidOnly ? "valid-only" : "full-triangle";
}

inline PopulationMode population_mode_from_string(const std::string& s) {
    if (s == "valid-only") return PopulationMode::ValidOnly;
    if (s == "full-triangle") return PopulationMode::FullTriangle;
    throw ConfigError("unknown population mode '" + s +
                      "' (expected valid-only|full-triangle)");
}

/// Number of entries in the distant region {(q, p) : q >= k+1, p <= q-k}.
inline uint64_t m_t_entry_count(uint64_t window, uint64_t k) {
    if (k == 0 || k >= window)
        throw ConfigError("m_t_entry_count requires 0 < k < L (got k=" + std::to_string(k) +
                          ", L=" + std::to_string(window) + ")");
    const uint64_t span = window - k;
    return span * (span + 1) / 2;
}

namespace detail {

inline void check_region_args(const CausalMatrix& m, uint32_t k) {
    const uint64_t window = m.size();
    if (window == 0) throw DataError("empty matrix");
    if (k == 0 || k >= window)
        throw ConfigError("dependency scores require 0 < k < L (got k=" + std::to_string(k) +
                          ", L=" + std::to_string(window) + ")");
    for (uint64_t q = 0; q < window; ++q) {
        if (m[q].size() != q + 1)
            throw DataError("row " + std::to_string(q + 1) + " has " +
                            std::to_string(m[q].size()) + " entries, expected " +
                            std::to_string(q + 1) + " (causal lower-triangular storage)");
    }
}

inline void check_row_stochastic(const CausalMatrix& m) {
    for (uint64_t q = 0; q < m.size(); ++q) {
        double sum = 0.0;
        for (double v : m[q]) sum += v;
        if (!std::isfinite(sum) || std::abs(sum - 1.0) > 1e-4)
            throw DataError("attention row " + std::to_string(q + 1) + " sums to " +
                            std::to_string(sum) + " (expected 1 within 1e-4); chunk rejected");
    }
}

}  // namespace detail

/// Dependency strength from a full matrix: the mean over all L tokens of the
/// attention mass each places at distance >= k. Rows q <= k contribute zero.
inline double ds_t_from_matrix(const CausalMatrix& m, uint32_t k) {
    detail::check_region_args(m, k);
    detail::check_row_stochastic(m);
    const uint64_t window = m.size();
    double total = 0.0;
    for (uint64_t q = k + 1; q <= window; ++q) {
        const std::vector<double>& row = m[q - 1];
        for (uint64_t p = 1; p + k <= q; ++p) total += row[p - 1];
    }
    return total / static_cast<double>(window);
}

/// Distribution uniformity: the negated population variance of the distant
/// region entries. Throws when the population has fewer than 2 entries.
inline double du_t_from_matrix(const CausalMatrix& m, uint32_t k,
                               PopulationMode mode = PopulationMode::ValidOnly) {
    detail::check_region_args(m, k);
    detail::check_row_stochastic(m);
    const uint64_t window = m.size();
    const uint64_t span = window - k;
    const uint64_t n = mode == PopulationMode::ValidOnly ? m_t_entry_count(window, k)
                                                         : span * span;
    if (n < 2)
        throw DataError("variance undefined: the distant region has " + std::to_string(n) +
                        " entries (need at least 2)");
    double sum = 0.0;
    double sq_sum = 0.0;
    for (uint64_t q = k + 1; q <= window; ++q) {
        const std::vector<double>& row = m[q - 1];
        for (uint64_t p = 1; p + k <= q; ++p) {
            sum += row[p - 1];
            sq_sum += row[p - 1] * row[p - 1];
        }
    }
    const double mean = sum / static_cast<double>(n);
    return -(sq_sum / static_cast<double>(n) - mean * mean);
}

/// Raw scores for one chunk, with the parameters that produced them.
struct ChunkScore {
    std::string doc_id;
    uint32_t chunk_index = 0;
    Category category = Category::Other;
    uint32_t window = 0;  // L
    uint32_t k = 0;
    double ds_t = 0.0;
    double du_t = 0.0;
    PopulationMode population_mode = PopulationMode::ValidOnly;
    std::string source_fingerprint;
};

/// Folds streaming row statistics into the two raw scores.
inline ChunkScore fold_row_stats(std::span<const AttentionRowStats> stats, uint32_t k,
                                 PopulationMode mode) {
    const uint64_t window = stats.size();
    if (window == 0) throw DataError("no row statistics to fold");
    const uint64_t span = window - k;
    const uint64_t n = mode == PopulationMode::ValidOnly ? m_t_entry_count(window, k)
                                                         : span * span;
    if (n < 2)
        throw DataError("variance undefined: the distant region has " + std::to_string(n) +
                        " entries (need at least 2)");
    double mass = 0.0;
    double sq_mass = 0.0;
    for (const AttentionRowStats& st : stats) {
        mass += st.distant_mass;
        sq_mass += st.distant_sq_mass;
    }
    ChunkScore score;
    score.window = static_cast<uint32_t>(window);
    score.k = k;
    score.population_mode = mode;
    score.ds_t = mass / static_cast<double>(window);
    const double mean = mass / static_cast<double>(n);
    score.du_t = -(sq_mass / static_cast<double>(n) - mean * mean);
    return score;
}

/// Scores one chunk without ever materializing an L x L matrix.
inline ChunkScore score_chunk_streaming(const TokenChunk& chunk, const AttentionSource& source,
                                        uint32_t k, uint32_t tile,
                                        PopulationMode mode = PopulationMode::ValidOnly,
                                        unsigned workers = 1) {
    const std::vector<AttentionRowStats> stats =
        stream_row_stats(chunk.token_ids, source, k, tile, workers);
    ChunkScore score = fold_row_stats(stats, k, mode);
    score.doc_id = chunk.doc_id;
    score.chunk_index = chunk.chunk_index;
    score.category = chunk.category;
    score.source_fingerprint = source.fingerprint();
    return score;
}

}  // namespace longattn

#endif  // LONGATTN_DEPSCORE_HPP
