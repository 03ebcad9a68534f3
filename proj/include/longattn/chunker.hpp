#ifndef LONGATTN_CHUNKER_HPP
#define LONGATTN_CHUNKER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "longattn/common.hpp"
#include "longattn/document.hpp"

namespace longattn {

/// `literal` reproduces the sampling algorithm bit-for-bit, which emits
/// nothing for a document of exactly W tokens. `keep-exact` (default)
/// additionally keeps such documents as their single exact window.
enum class LengthPolicy { Literal, KeepExact };

inline const char* to_string(LengthPolicy p) {
    return p == LengthPolicy::Literal ? "literal" : "keep-exact";
}

inline LengthPolicy length_policy_from_string(const std::string& s) {
    if (s == "literal") return LengthPolicy::Literal;
    if (s == "keep-exact") return LengthPolicy::KeepExact;
    throw ConfigError("unknown length policy '" + s + "' (expected literal|keep-exact)");
}

struct Window {
    uint64_t start = 0;
    uint64_t end = 0;  // half-open; end - start == W

    bool operator==(const Window&) const = default;
};

struct WindowPlan {
    std::vector<Window> windows;  // in emission order
    LengthPolicy policy = LengthPolicy::KeepExact;
};

/// Fixed-width sliding-window sampling over a sequence of n tokens:
/// while more than 3W tokens remain unclaimed, peel a front and a back
/// window; then cover the remainder delta with two windows (W < delta <= 2W)
/// or three (2W < delta <= 3W, middle window centered). Windows are emitted
/// in append order: front, back, front, back, ..., then the final phase.
inline WindowPlan sliding_window_sample(uint64_t n, uint64_t window,
                                        LengthPolicy policy = LengthPolicy::KeepExact) {
    if (window == 0) throw ConfigError("window size must be positive");
    WindowPlan plan;
    plan.policy = policy;
    if (n < window) return plan;
    if (n == window) {
        if (policy == LengthPolicy::KeepExact) plan.windows.push_back({0, window});
        return plan;
    }

    uint64_t l = 0;
    uint64_t r = n;
    while (r - l > 3 * window) {
        plan.windows.push_back({l, l + window});
        l += window;
        plan.windows.push_back({r - window, r});
        r -= window;
    }
    const uint64_t delta = r - l;
    if (delta > window && delta <= 2 * window) {
        plan.windows.push_back({l, l + window});
        plan.windows.push_back({r - window, r});
    } else if (delta > 2 * window && delta <= 3 * window) {
        const uint64_t mid = l + (delta - window) / 2;
        plan.windows.push_back({l, l + window});
        plan.windows.push_back({mid, mid + window});
        plan.windows.push_back({r - window, r});
    }
    return plan;
}

/// Materializes a plan into chunks; chunk_index records emission order.
inline std::vector<TokenChunk> plan_to_chunks(const WindowPlan& plan,
                                              const TokenSequence& seq,
                                              Category category) {
    std::vector<TokenChunk> chunks;
    chunks.reserve(plan.windows.size());
    uint32_t index = 0;
    for (const Window& w : plan.windows) {
        if (w.end > seq.token_ids.size() || w.start >= w.end)
            throw DataError("window plan [" + std::to_string(w.start) + ", " +
                            std::to_string(w.end) + ") does not fit sequence '" +
                            seq.doc_id + "' of length " +
                            std::to_string(seq.token_ids.size()));
        TokenChunk chunk;
        chunk.doc_id = seq.doc_id;
        chunk.category = category;
        chunk.chunk_index = index++;
        chunk.window_start = w.start;
        chunk.token_ids.assign(seq.token_ids.begin() + static_cast<ptrdiff_t>(w.start),
                               seq.token_ids.begin() + static_cast<ptrdiff_t>(w.end));
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

}  // namespace longattn

#endif  // LONGATTN_CHUNKER_HPP
