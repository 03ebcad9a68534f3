#ifndef LONGATTN_CHUNK_STORE_HPP
#define LONGATTN_CHUNK_STORE_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "longattn/common.hpp"
#include "longattn/document.hpp"

namespace longattn {

// Binary chunk store. Little-endian throughout.
//
//   header (32 bytes):
//     0   char[8]  magic "LACHNK01"
//     8   u32      format version (1)
//     12  u32      window size L
//     16  u32      token width in bytes (4)
//     20  u32      reserved (0)
//     24  u64      chunk count
//   record (272 + 4*L bytes each):
//     0    char[256]  doc_id, NUL padded (doc_id length <= 255)
//     256  u8         category
//     257  u8[3]      padding (0)
//     260  u32        chunk_index
//     264  u64        window_start
//     272  u32[L]     token ids
//
// Fixed-size records give O(1) random access by chunk index, so scoring
// workers can read the same file concurrently without coordination.

namespace chunk_store {

constexpr char kMagic[8] = {'L', 'A', 'C', 'H', 'N', 'K', '0', '1'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kTokenWidth = 4;
constexpr size_t kHeaderSize = 32;
constexpr size_t kDocIdField = 256;
constexpr size_t kRecordMetaSize = kDocIdField + 16;

inline size_t record_size(uint32_t window) {
    return kRecordMetaSize + static_cast<size_t>(kTokenWidth) * window;
}

}  // namespace chunk_store

class ChunkStoreWriter {
public:
    /// Single-writer sink: exclusive access to the file for its lifetime.
    ChunkStoreWriter(const std::filesystem::path& path, uint32_t window)
        : path_(path), window_(window) {
        if (window == 0) throw ConfigError("chunk store window size must be positive");
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw DataError("cannot open chunk store for writing: " + path.string());
        write_header(0);
    }

    ~ChunkStoreWriter() {
        if (out_.is_open()) {
            try {
                finish();
            } catch (...) {
                // unwinding already; the partial store stays readable
            }
        }
    }

    ChunkStoreWriter(const ChunkStoreWriter&) = delete;
    ChunkStoreWriter& operator=(const ChunkStoreWriter&) = delete;

    void append(const TokenChunk& chunk) {
        if (chunk.token_ids.size() != window_)
            throw DataError("chunk '" + chunk.doc_id + "' #" +
                            std::to_string(chunk.chunk_index) + " has " +
                            std::to_string(chunk.token_ids.size()) +
                            " tokens but the store window size is " +
                            std::to_string(window_));
        if (chunk.doc_id.size() >= chunk_store::kDocIdField)
            throw DataError("doc_id '" + chunk.doc_id + "' exceeds " +
                            std::to_string(chunk_store::kDocIdField - 1) + " bytes");
        std::vector<unsigned char> rec;
        rec.reserve(chunk_store::record_size(window_));
        rec.resize(chunk_store::kDocIdField, 0);
        std::memcpy(rec.data(), chunk.doc_id.data(), chunk.doc_id.size());
        rec.push_back(static_cast<unsigned char>(chunk.category));
        rec.push_back(0);
        rec.push_back(0);
        rec.push_back(0);
        put_u32le(rec, chunk.chunk_index);
        put_u64le(rec, chunk.window_start);
        for (uint32_t id : chunk.token_ids) put_u32le(rec, id);
        out_.write(reinterpret_cast<const char*>(rec.data()),
                   static_cast<std::streamsize>(rec.size()));
        if (!out_) throw DataError("write failure on chunk store: " + path_.string());
        ++count_;
    }

    /// Patches the chunk count into the header and closes the file.
    void finish() {
        out_.seekp(24);
        std::vector<unsigned char> buf;
        put_u64le(buf, count_);
        out_.write(reinterpret_cast<const char*>(buf.data()), 8);
        out_.close();
        if (out_.fail()) throw DataError("failed to finalize chunk store: " + path_.string());
    }

    uint64_t count() const { return count_; }
    uint32_t window() const { return window_; }

private:
    void write_header(uint64_t count) {
        std::vector<unsigned char> h;
        h.insert(h.end(), chunk_store::kMagic, chunk_store::kMagic + 8);
        put_u32le(h, chunk_store::kVersion);
        put_u32le(h, window_);
        put_u32le(h, chunk_store::kTokenWidth);
        put_u32le(h, 0);
        put_u64le(h, count);
        out_.write(reinterpret_cast<const char*>(h.data()),
                   static_cast<std::streamsize>(h.size()));
    }

    std::filesystem::path path_;
    uint32_t window_;
    uint64_t count_ = 0;
    std::ofstream out_;
};

class ChunkStoreReader {
public:
    /// Readers are independent; open one per thread to share a store file.
    /// expected_window > 0 asserts the store was built with that L.
    explicit ChunkStoreReader(const std::filesystem::path& path, uint32_t expected_window = 0)
        : path_(path) {
        in_.open(path, std::ios::binary);
        if (!in_) throw DataError("cannot open chunk store: " + path.string());

        std::array<unsigned char, chunk_store::kHeaderSize> h{};
        in_.read(reinterpret_cast<char*>(h.data()), h.size());
        if (in_.gcount() != static_cast<std::streamsize>(h.size()))
            throw DataError("chunk store too short for header: " + path.string());
        if (std::memcmp(h.data(), chunk_store::kMagic, 8) != 0)
            throw DataError("not a chunk store (bad magic): " + path.string());
        const uint32_t version = get_u32le(h.data() + 8);
        if (version != chunk_store::kVersion)
            throw DataError("unsupported chunk store version " + std::to_string(version) +
                            " (expected " + std::to_string(chunk_store::kVersion) + ")");
        window_ = get_u32le(h.data() + 12);
        const uint32_t token_width = get_u32le(h.data() + 16);
        if (token_width != chunk_store::kTokenWidth)
            throw DataError("unsupported token width " + std::to_string(token_width) +
                            " (expected " + std::to_string(chunk_store::kTokenWidth) + ")");
        if (window_ == 0) throw DataError("chunk store declares window size 0: " + path.string());
        if (expected_window != 0 && window_ != expected_window)
            throw ConfigError("chunk store " + path.string() + " was built with window size " +
                              std::to_string(window_) + " but the configuration expects " +
                              std::to_string(expected_window));
        count_ = get_u64le(h.data() + 24);

        in_.seekg(0, std::ios::end);
        const uint64_t file_size = static_cast<uint64_t>(in_.tellg());
        const uint64_t expected_size =
            chunk_store::kHeaderSize + count_ * chunk_store::record_size(window_);
        if (file_size != expected_size)
            throw DataError("chunk store " + path.string() + " is corrupt: header declares " +
                            std::to_string(count_) + " chunks (" + std::to_string(expected_size) +
                            " bytes expected) but the file holds " + std::to_string(file_size) +
                            " bytes");
    }

    uint64_t count() const { return count_; }
    uint32_t window() const { return window_; }

    /// Reads only the metadata block of a record (no token payload).
    TokenChunk read_meta(uint64_t index) {
        if (index >= count_)
            throw DataError("chunk index " + std::to_string(index) + " out of range (store has " +
                            std::to_string(count_) + " chunks)");
        std::vector<unsigned char> rec(chunk_store::kRecordMetaSize);
        in_.seekg(static_cast<std::streamoff>(chunk_store::kHeaderSize +
                                              index * chunk_store::record_size(window_)));
        in_.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (in_.gcount() != static_cast<std::streamsize>(rec.size()))
            throw DataError("short read in chunk store: " + path_.string());
        TokenChunk chunk;
        const char* id = reinterpret_cast<const char*>(rec.data());
        chunk.doc_id.assign(id, strnlen(id, chunk_store::kDocIdField));
        chunk.category = static_cast<Category>(
            std::min<uint8_t>(rec[chunk_store::kDocIdField], static_cast<uint8_t>(Category::Other)));
        chunk.chunk_index = get_u32le(rec.data() + chunk_store::kDocIdField + 4);
        chunk.window_start = get_u64le(rec.data() + chunk_store::kDocIdField + 8);
        return chunk;
    }

    TokenChunk read_chunk(uint64_t index) {
        if (index >= count_)
            throw DataError("chunk index " + std::to_string(index) + " out of range (store has " +
                            std::to_string(count_) + " chunks)");
        const size_t rec_size = chunk_store::record_size(window_);
        std::vector<unsigned char> rec(rec_size);
        in_.seekg(static_cast<std::streamoff>(chunk_store::kHeaderSize + index * rec_size));
        in_.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec_size));
        if (in_.gcount() != static_cast<std::streamsize>(rec_size))
            throw DataError("short read in chunk store: " + path_.string());

        TokenChunk chunk;
        const char* id = reinterpret_cast<const char*>(rec.data());
        chunk.doc_id.assign(id, strnlen(id, chunk_store::kDocIdField));
        const uint8_t cat = rec[chunk_store::kDocIdField];
        if (cat > static_cast<uint8_t>(Category::Other))
            throw DataError("corrupt category byte " + std::to_string(cat) + " in chunk " +
                            std::to_string(index));
        chunk.category = static_cast<Category>(cat);
        chunk.chunk_index = get_u32le(rec.data() + chunk_store::kDocIdField + 4);
        chunk.window_start = get_u64le(rec.data() + chunk_store::kDocIdField + 8);
        chunk.token_ids.resize(window_);
        const unsigned char* tok = rec.data() + chunk_store::kRecordMetaSize;
        for (uint32_t i = 0; i < window_; ++i) chunk.token_ids[i] = get_u32le(tok + 4 * i);
        return chunk;
    }

    std::vector<TokenChunk> read_all() {
        std::vector<TokenChunk> chunks;
        chunks.reserve(count_);
        for (uint64_t i = 0; i < count_; ++i) chunks.push_back(read_chunk(i));
        return chunks;
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    uint32_t window_ = 0;
    uint64_t count_ = 0;
};

/// Convenience one-shot writer: all chunks must share one window size.
inline void write_chunks(const std::vector<TokenChunk>& chunks, uint32_t window,
                         const std::filesystem::path& path) {
    ChunkStoreWriter writer(path, window);
    for (const TokenChunk& c : chunks) writer.append(c);
    writer.finish();
}

inline std::vector<TokenChunk> read_chunks(const std::filesystem::path& path,
                                           uint32_t expected_window = 0) {
    ChunkStoreReader reader(path, expected_window);
    return reader.read_all();
}

}  // namespace longattn

#endif  // LONGATTN_CHUNK_STORE_HPP
