#ifndef LONGATTN_TOKENIZER_HPP
#define LONGATTN_TOKENIZER_HPP

#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"
#include "longattn/document.hpp"

namespace longattn {

enum class TokenizerKind { Byte, Whitespace, Bpe };

/// Tokenization is pluggable and the chunk store holds raw token IDs, so
/// the scoring math never depends on a particular tokenizer.
///
///  - byte:       vocab 256, identity over the UTF-8 bytes of the text.
///  - whitespace: test-only; whitespace-separated words hashed into a
///                fixed-size ID space.
///  - bpe:        declares an external BPE vocabulary; raw text must be
///                pre-tokenized externally and fed in as "tokens" arrays.
///                We only validate IDs against the declared vocab.
struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::Byte;
    uint32_t vocab_size = 256;
    std::string vocab_path;
    std::string merges_path;

    static TokenizerSpec byte_level() { return TokenizerSpec{}; }

    static TokenizerSpec whitespace(uint32_t vocab = 65536) {
        return TokenizerSpec{TokenizerKind::Whitespace, vocab, "", ""};
    }
};

/// Loads a tokenizer spec JSON: {"kind": "byte"|"whitespace"|"bpe", ...}.
/// For kind=bpe the vocab file (a JSON object mapping token -> id) sets the
/// declared vocabulary size.
inline TokenizerSpec load_tokenizer_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tokenizer spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed tokenizer spec " + path + ": " + e.what());
    }
    const std::string kind = j.value("kind", "");
    TokenizerSpec spec;
    if (kind == "byte") {
        spec.kind = TokenizerKind::Byte;
        spec.vocab_size = 256;
    } else if (kind == "whitespace") {
        spec.kind = TokenizerKind::Whitespace;
        spec.vocab_size = j.value("vocab_size", 65536u);
        if (spec.vocab_size == 0)
            throw ConfigError("tokenizer spec: vocab_size must be positive");
    } else if (kind == "bpe") {
        spec.kind = TokenizerKind::Bpe;
        if (!j.contains("vocab"))
            throw ConfigError("tokenizer spec: kind=bpe requires a \"vocab\" path");
        spec.vocab_path = j["vocab"].get<std::string>();
        spec.merges_path = j.value("merges", "");
        std::ifstream vf(spec.vocab_path);
        if (!vf)
            throw ConfigError("cannot open BPE vocab file: " + spec.vocab_path);
        nlohmann::json vocab;
        try {
            vf >> vocab;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed BPE vocab " + spec.vocab_path + ": " + e.what());
        }
        uint32_t max_id = 0;
        for (const auto& [tok, id] : vocab.items())
            max_id = std::max(max_id, id.get<uint32_t>());
        spec.vocab_size = vocab.empty() ? 0 : max_id + 1;
        if (spec.vocab_size == 0)
            throw ConfigError("BPE vocab is empty: " + spec.vocab_path);
    } else {
        throw ConfigError("tokenizer spec: unknown kind '" + kind +
                          "' (expected byte|whitespace|bpe)");
    }
    return spec;
}

namespace detail {

inline void check_vocab(const std::vector<uint32_t>& ids, uint32_t vocab_size,
                        const std::string& doc_id) {
    for (uint32_t id : ids) {
        if (id >= vocab_size)
            throw DataError("token ID " + std::to_string(id) + " in document '" +
                            doc_id + "' exceeds declared vocab size " +
                            std::to_string(vocab_size));
    }
}

}  // namespace detail

/// Deterministic: the same document and spec always yield the same sequence.
inline TokenSequence tokenize(const Document& doc, const TokenizerSpec& spec) {
    TokenSequence seq;
    seq.doc_id = doc.doc_id;

    if (doc.pretokenized()) {
        seq.token_ids = std::get<std::vector<uint32_t>>(doc.payload);
        detail::check_vocab(seq.token_ids, spec.vocab_size, doc.doc_id);
        return seq;
    }

    const std::string& text = std::get<std::string>(doc.payload);
    switch (spec.kind) {
        case TokenizerKind::Byte:
            seq.token_ids.reserve(text.size());
            for (unsigned char c : text) seq.token_ids.push_back(c);
            break;
        case TokenizerKind::Whitespace: {
            size_t i = 0;
            while (i < text.size()) {
                while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
                size_t start = i;
                while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
                if (i > start) {
                    uint64_t h = fnv1a64(text.data() + start, i - start);
                    seq.token_ids.push_back(static_cast<uint32_t>(h % spec.vocab_size));
                }
            }
            break;
        }
        case TokenizerKind::Bpe:
            throw DataError("document '" + doc.doc_id +
                            "' carries raw text but the BPE tokenizer only accepts "
                            "pre-tokenized input; run the external tokenizer and feed "
                            "\"tokens\" arrays instead");
    }
    return seq;
}

}  // namespace longattn

#endif  // LONGATTN_TOKENIZER_HPP
