#ifndef LONGATTN_SCORE_IO_HPP
#define LONGATTN_SCORE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"
#include "longattn/depscore.hpp"

namespace longattn {

// Score records travel as JSONL, one object per line, fixed key order,
// ds_t/du_t at 17 significant digits so parsing reproduces the exact
// doubles. Lines are hand-formatted to keep the bytes reproducible.

inline std::string format_score_record(const ChunkScore& s) {
    std::string line = "{\"doc_id\":\"" + json_escape(s.doc_id) + "\"";
    line += ",\"chunk_index\":" + std::to_string(s.chunk_index);
    line += ",\"category\":\"" + std::string(to_string(s.category)) + "\"";
    line += ",\"L\":" + std::to_string(s.window);
    line += ",\"k\":" + std::to_string(s.k);
    line += ",\"ds_t\":" + format_score(s.ds_t);
    line += ",\"du_t\":" + format_score(s.du_t);
    line += ",\"population_mode\":\"" + std::string(to_string(s.population_mode)) + "\"";
    line += ",\"source_fingerprint\":\"" + json_escape(s.source_fingerprint) + "\"}";
    return line;
}

inline ChunkScore parse_score_record(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError("malformed score record: " + line.substr(0, 120));
    ChunkScore s;
    try {
        s.doc_id = j.at("doc_id").get<std::string>();
        s.chunk_index = j.at("chunk_index").get<uint32_t>();
        s.category = category_from_string(j.at("category").get<std::string>());
        s.window = j.at("L").get<uint32_t>();
        s.k = j.at("k").get<uint32_t>();
        s.ds_t = j.at("ds_t").get<double>();
        s.du_t = j.at("du_t").get<double>();
        s.population_mode =
            population_mode_from_string(j.at("population_mode").get<std::string>());
        s.source_fingerprint = j.value("source_fingerprint", "");
    } catch (const nlohmann::json::exception& e) {
        throw DataError("score record missing fields: " + std::string(e.what()));
    }
    return s;
}

inline std::vector<ChunkScore> read_score_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file: " + path.string());
    std::vector<ChunkScore> scores;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        scores.push_back(parse_score_record(line));
    }
    return scores;
}

/// Scan of an existing (possibly interrupted) score file for resume: returns
/// the refs already present and the byte offset after the last complete
/// record. A trailing partial line is dropped by truncating to that offset.
struct ResumeState {
    std::set<std::pair<std::string, uint32_t>> present;
    uint64_t valid_bytes = 0;
    // scoring parameters shared by the existing records, for consistency
    // checks before appending more
    bool have_params = false;
    uint32_t window = 0;
    uint32_t k = 0;
    std::string population_mode;
    std::string source_fingerprint;
};

inline ResumeState scan_score_file(const std::filesystem::path& path) {
    ResumeState state;
    std::ifstream in(path, std::ios::binary);
    if (!in) return state;
    std::string line;
    while (std::getline(in, line)) {
        const bool complete = !in.eof();  // getline hit a newline, not EOF
        if (line.empty()) {
            if (complete) state.valid_bytes += 1;
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (!complete || j.is_discarded() || !j.is_object() || !j.contains("doc_id") ||
            !j.contains("chunk_index"))
            break;  // truncated tail from an interrupted run
        state.present.emplace(j["doc_id"].get<std::string>(),
                              j["chunk_index"].get<uint32_t>());
        if (!state.have_params) {
            state.have_params = true;
            state.window = j.value("L", 0u);
            state.k = j.value("k", 0u);
            state.population_mode = j.value("population_mode", "");
            state.source_fingerprint = j.value("source_fingerprint", "");
        }
        state.valid_bytes += line.size() + 1;
    }
    return state;
}

}  // namespace longattn

#endif  // LONGATTN_SCORE_IO_HPP
