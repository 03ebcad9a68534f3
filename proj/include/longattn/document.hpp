#ifndef LONGATTN_DOCUMENT_HPP
#define LONGATTN_DOCUMENT_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "longattn/common.hpp"

namespace longattn {

/// One source document. The payload is either raw text (to be tokenized)
/// or a pre-tokenized ID sequence produced by an external tokenizer.
struct Document {
    std::string doc_id;
    Category category = Category::Other;
    std::variant<std::string, std::vector<uint32_t>> payload;

    bool pretokenized() const { return payload.index() == 1; }
};

struct TokenSequence {
    std::string doc_id;
    std::vector<uint32_t> token_ids;

    uint64_t length() const { return token_ids.size(); }
};

/// A fixed-length window of token IDs, traceable to its source document.
/// token_ids.size() is exactly the configured window size.
struct TokenChunk {
    std::string doc_id;
    Category category = Category::Other;
    uint32_t chunk_index = 0;     // ordinal within the document, plan order
    uint64_t window_start = 0;    // token offset into the source sequence
    std::vector<uint32_t> token_ids;

    bool operator==(const TokenChunk&) const = default;
};

}  // namespace longattn

#endif  // LONGATTN_DOCUMENT_HPP
