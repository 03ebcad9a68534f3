#ifndef LONGATTN_INGEST_HPP
#define LONGATTN_INGEST_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"
#include "longattn/document.hpp"

namespace longattn {

enum class IngestFormat { Jsonl, PlainDir };

inline IngestFormat ingest_format_from_string(const std::string& s) {
    if (s == "jsonl") return IngestFormat::Jsonl;
    if (s == "plain-dir") return IngestFormat::PlainDir;
    throw ConfigError("unknown input format '" + s + "' (expected jsonl|plain-dir)");
}

struct IngestStats {
    uint64_t records_in = 0;
    uint64_t documents_out = 0;
    uint64_t warnings = 0;
};

using DocumentSink = std::function<void(Document&&)>;

namespace detail {

// One JSONL record: {"id": optional string, "text": string} or
// {"id": ..., "tokens": [uint, ...]}. Returns false on malformed input.
inline bool parse_jsonl_record(const std::string& line, const std::string& fallback_id,
                               Category category, Document& out) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return false;

    out.category = category;
    if (j.contains("id")) {
        if (!j["id"].is_string()) return false;
        out.doc_id = j["id"].get<std::string>();
    } else {
        out.doc_id = fallback_id;
    }

    if (j.contains("text")) {
        if (!j["text"].is_string()) return false;
        out.payload = j["text"].get<std::string>();
        return true;
    }
    if (j.contains("tokens")) {
        if (!j["tokens"].is_array()) return false;
        std::vector<uint32_t> ids;
        ids.reserve(j["tokens"].size());
        for (const auto& t : j["tokens"]) {
            if (!t.is_number_unsigned()) return false;
            ids.push_back(t.get<uint32_t>());
        }
        out.payload = std::move(ids);
        return true;
    }
    return false;
}

}  // namespace detail

/// Streams Documents out of a JSONL file or a directory of plain-text files.
/// Malformed records are skipped and counted; unreadable inputs are fatal.
/// documents_out + warnings == records_in always holds.
inline IngestStats ingest_documents(const std::filesystem::path& path, Category category,
                                    IngestFormat format, const DocumentSink& sink) {
    IngestStats stats;

    if (format == IngestFormat::Jsonl) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open input file: " + path.string());
        const std::string filename = path.filename().string();
        std::string line;
        uint64_t record_index = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;  // blank lines are not records
            ++stats.records_in;
            Document doc;
            const std::string fallback = filename + ":" + std::to_string(record_index);
            if (detail::parse_jsonl_record(line, fallback, category, doc)) {
                ++stats.documents_out;
                sink(std::move(doc));
            } else {
                ++stats.warnings;
                std::cerr << "warning: skipping malformed record " << record_index
                          << " in " << path.string() << "\n";
            }
            ++record_index;
        }
        return stats;
    }

    // plain-dir: every regular file below the directory is one document,
    // doc_id is its path relative to the input root. Sorted for determinism.
    std::error_code ec;
    if (!std::filesystem::is_directory(path, ec))
        throw DataError("input is not a readable directory: " + path.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        ++stats.records_in;
        std::ifstream in(file, std::ios::binary);
        if (!in) throw DataError("cannot open input file: " + file.string());
        std::ostringstream body;
        body << in.rdbuf();
        Document doc;
        doc.doc_id = std::filesystem::relative(file, path).generic_string();
        doc.category = category;
        doc.payload = std::move(body).str();
        ++stats.documents_out;
        sink(std::move(doc));
    }
    return stats;
}

}  // namespace longattn

#endif  // LONGATTN_INGEST_HPP
