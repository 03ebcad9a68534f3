#ifndef LONGATTN_PIPELINE_HPP
#define LONGATTN_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/attention.hpp"
#include "longattn/chunk_store.hpp"
#include "longattn/chunker.hpp"
#include "longattn/common.hpp"
#include "longattn/depscore.hpp"
#include "longattn/ingest.hpp"
#include "longattn/model.hpp"
#include "longattn/score_io.hpp"
#include "longattn/selector.hpp"
#include "longattn/tokenizer.hpp"

namespace longattn {

/// One configuration drives every stage. Defaults follow the reference
/// setup: 32k windows, k = L/4, alpha = 0.5.
struct PipelineConfig {
    // shared
    uint32_t window_size = 32768;
    bool window_size_explicit = false;
    uint32_t min_token_distance = 0;  // 0 derives L/4
    double alpha = 0.5;
    uint32_t tile = 256;
    PopulationMode population_mode = PopulationMode::ValidOnly;
    LengthPolicy policy = LengthPolicy::KeepExact;
    unsigned workers = default_workers();
    uint64_t seed = 0;

    // chunk stage
    std::string input_path;
    Category category = Category::Other;
    IngestFormat format = IngestFormat::Jsonl;
    std::string tokenizer_spec_path;  // empty selects the byte-level tokenizer
    std::string chunk_store_path;

    // score stage
    std::string synthetic;  // empty selects the real-weights source
    std::string weights_path;
    std::string model_config_path;
    std::string scores_path;

    // select stage
    std::map<Category, Budget> budgets;  // empty selects everything (fraction 1)
    bool global_zscore = false;
    std::string manifest_path;
    std::string stats_sidecar_path;  // defaults to manifest + ".stats.json"

    uint32_t effective_k(uint32_t window) const {
        return min_token_distance != 0 ? min_token_distance : window / 4;
    }
};

inline void validate_common(const PipelineConfig& c) {
    if (c.window_size == 0) throw ConfigError("window-size must be positive");
    if (c.tile == 0) throw ConfigError("tile must be >= 1");
    if (c.alpha < 0.0) throw ConfigError("alpha must be >= 0");
    const uint32_t k = c.effective_k(c.window_size);
    if (k == 0)
        throw ConfigError("min-distance is 0 (window too small to derive k = L/4); "
                          "set --min-distance explicitly");
    if (k >= c.window_size)
        throw ConfigError("min-distance k=" + std::to_string(k) +
                          " must be smaller than window-size " + std::to_string(c.window_size));
}

inline void validate_for_chunk(const PipelineConfig& c) {
    validate_common(c);
    if (c.input_path.empty()) throw ConfigError("chunk stage requires --input");
    if (c.chunk_store_path.empty()) throw ConfigError("chunk stage requires --chunks");
}

inline void validate_for_score(const PipelineConfig& c) {
    validate_common(c);
    if (c.chunk_store_path.empty()) throw ConfigError("score stage requires --chunks");
    if (c.scores_path.empty()) throw ConfigError("score stage requires --scores");
    if (c.synthetic.empty()) {
        if (c.weights_path.empty() || c.model_config_path.empty())
            throw ConfigError("score stage requires either --synthetic or both --weights "
                              "and --model-config");
    } else {
        parse_synthetic(c.synthetic);  // validates the spelling
    }
}

inline void validate_for_select(const PipelineConfig& c) {
    if (c.alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (c.scores_path.empty()) throw ConfigError("select stage requires --scores");
    if (c.manifest_path.empty()) throw ConfigError("select stage requires --manifest");
}

namespace detail {

inline std::string fingerprint_input(const std::filesystem::path& path, IngestFormat format) {
    if (format == IngestFormat::Jsonl) return "fnv1a64:" + hex64(fnv1a64_file(path));
    // Directory: combine per-file fingerprints over sorted relative paths.
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    if (!std::filesystem::is_directory(path, ec))
        throw DataError("input is not a readable directory: " + path.string());
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    uint64_t h = kFnvOffset;
    for (const auto& f : files) {
        const std::string rel = std::filesystem::relative(f, path).generic_string();
        h = fnv1a64(rel.data(), rel.size(), h);
        const uint64_t fh = fnv1a64_file(f);
        h = fnv1a64(&fh, sizeof(fh), h);
    }
    return "fnv1a64:" + hex64(h);
}

inline void write_summary(const std::filesystem::path& output,
                          const nlohmann::ordered_json& summary) {
    std::ofstream out(output.string() + ".summary.json", std::ios::trunc);
    if (!out) throw DataError("cannot write summary next to " + output.string());
    out << summary.dump(2) << "\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// chunk: ingest -> tokenize -> window plan -> chunk store
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_chunk(const PipelineConfig& config) {
    validate_for_chunk(config);
    const TokenizerSpec tokenizer = config.tokenizer_spec_path.empty()
                                        ? TokenizerSpec::byte_level()
                                        : load_tokenizer_spec(config.tokenizer_spec_path);

    ChunkStoreWriter writer(config.chunk_store_path, config.window_size);
    uint64_t documents_in = 0;
    uint64_t discarded_short = 0;
    uint64_t duplicate_ids = 0;
    uint64_t chunks_out = 0;
    std::set<std::string> seen_ids;

    // Tokenization and planning are independent per document, so documents
    // are batched and processed in parallel; the store writer stays a
    // single-writer sink consuming batches in order.
    std::vector<Document> batch;
    const size_t batch_size = std::max<size_t>(1, static_cast<size_t>(config.workers) * 4);
    std::vector<std::vector<TokenChunk>> batch_chunks;

    auto flush_batch = [&] {
        if (batch.empty()) return;
        batch_chunks.assign(batch.size(), {});
        parallel_for(batch.size(), config.workers, [&](size_t i) {
            const TokenSequence seq = tokenize(batch[i], tokenizer);
            const WindowPlan plan =
                sliding_window_sample(seq.length(), config.window_size, config.policy);
            batch_chunks[i] = plan_to_chunks(plan, seq, batch[i].category);
        });
        for (size_t i = 0; i < batch.size(); ++i) {
            if (batch_chunks[i].empty()) ++discarded_short;
            for (const TokenChunk& chunk : batch_chunks[i]) {
                writer.append(chunk);
                ++chunks_out;
            }
        }
        batch.clear();
    };

    const IngestStats stats = ingest_documents(
        config.input_path, config.category, config.format, [&](Document&& doc) {
            ++documents_in;
            // duplicate ids would make score-file resume bookkeeping ambiguous
            if (!seen_ids.insert(doc.doc_id).second) {
                ++duplicate_ids;
                std::cerr << "warning: skipping document with duplicate id '" << doc.doc_id
                          << "'\n";
                return;
            }
            batch.push_back(std::move(doc));
            if (batch.size() >= batch_size) flush_batch();
        });
    flush_batch();
    writer.finish();

    nlohmann::ordered_json summary;
    summary["documents_in"] = documents_in;
    summary["documents_discarded_short"] = discarded_short;
    summary["chunks_out"] = chunks_out;
    summary["policy"] = to_string(config.policy);
    summary["window_size"] = config.window_size;
    summary["ingest_warnings"] = stats.warnings;
    summary["documents_duplicate_id"] = duplicate_ids;
    summary["input"] = {{"path", config.input_path},
                        {"fingerprint", detail::fingerprint_input(config.input_path,
                                                                  config.format)}};
    detail::write_summary(config.chunk_store_path, summary);
    return summary;
}

// ---------------------------------------------------------------------------
// score: chunk store -> attention statistics -> score JSONL (resumable)
// ---------------------------------------------------------------------------

inline AttentionSource resolve_source(const PipelineConfig& config) {
    if (!config.synthetic.empty())
        return AttentionSource::make_synthetic(parse_synthetic(config.synthetic));
    const ModelConfig model_config = load_model_config(config.model_config_path);
    LayerWeights weights = load_weights(config.weights_path, model_config);
    return AttentionSource::make_real(model_config, std::move(weights));
}

inline nlohmann::ordered_json run_score(const PipelineConfig& config,
                                        bool enforce_window = false) {
    validate_for_score(config);
    const uint32_t expected_window =
        (enforce_window || config.window_size_explicit) ? config.window_size : 0;
    ChunkStoreReader store(config.chunk_store_path, expected_window);
    const uint32_t window = store.window();
    const uint32_t k = config.effective_k(window);
    if (k == 0 || k >= window)
        throw ConfigError("min-distance k=" + std::to_string(k) +
                          " is invalid for window size " + std::to_string(window));

    const AttentionSource source = resolve_source(config);

    // Resume: skip refs already present; drop a partial trailing line left
    // by an interrupted run. Existing records must have been scored with the
    // same k and population mode, or the pooled z-scores would be garbage.
    // (Different sources/stores appending into one file is fine.)
    const ResumeState resume = scan_score_file(config.scores_path);
    if (resume.have_params) {
        if (resume.k != k)
            throw ConfigError("score file " + config.scores_path +
                              " holds records scored with k=" + std::to_string(resume.k) +
                              " but this run uses k=" + std::to_string(k));
        if (resume.population_mode != to_string(config.population_mode))
            throw ConfigError("score file " + config.scores_path +
                              " holds records with population_mode=" + resume.population_mode +
                              " but this run uses " + to_string(config.population_mode));
    }
    if (std::filesystem::exists(config.scores_path)) {
        const uint64_t size = std::filesystem::file_size(config.scores_path);
        if (resume.valid_bytes < size)
            std::filesystem::resize_file(config.scores_path, resume.valid_bytes);
    }

    std::vector<uint64_t> todo;
    for (uint64_t i = 0; i < store.count(); ++i) {
        const TokenChunk meta = store.read_meta(i);
        if (!resume.present.count({meta.doc_id, meta.chunk_index})) todo.push_back(i);
    }

    const unsigned across = std::max<unsigned>(
        1, std::min<unsigned>(config.workers, static_cast<unsigned>(todo.size())));
    const unsigned within = std::max<unsigned>(1, config.workers / across);

    std::vector<std::optional<ChunkScore>> results(todo.size());
    std::vector<std::string> rejections(todo.size());
    parallel_for(todo.size(), across, [&](size_t i) {
        ChunkStoreReader local(config.chunk_store_path);
        const TokenChunk chunk = local.read_chunk(todo[i]);
        try {
            results[i] = score_chunk_streaming(chunk, source, k, config.tile,
                                               config.population_mode, within);
        } catch (const DataError& e) {
            rejections[i] = e.what();
        }
    });

    std::ofstream out(config.scores_path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot open score file for writing: " + config.scores_path);
    uint64_t scored = 0;
    uint64_t rejected = 0;
    for (size_t i = 0; i < results.size(); ++i) {
        if (results[i]) {
            out << format_score_record(*results[i]) << "\n";
            ++scored;
        } else {
            ++rejected;
            std::cerr << "warning: chunk " << todo[i] << " rejected: " << rejections[i] << "\n";
        }
    }
    out.close();
    if (out.fail()) throw DataError("write failure on score file: " + config.scores_path);

    nlohmann::ordered_json summary;
    summary["chunks_in"] = store.count();
    summary["scored_new"] = scored;
    summary["skipped_existing"] = resume.present.size();
    summary["rejected"] = rejected;
    summary["window_size"] = window;
    summary["k"] = k;
    summary["tile"] = config.tile;
    summary["population_mode"] = to_string(config.population_mode);
    summary["source_fingerprint"] = source.fingerprint();
    summary["input"] = {{"path", config.chunk_store_path},
                        {"fingerprint", "fnv1a64:" + hex64(fnv1a64_file(config.chunk_store_path))}};
    detail::write_summary(config.scores_path, summary);
    return summary;
}

// ---------------------------------------------------------------------------
// select: score JSONL -> ranked, budgeted manifest + stats sidecar
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_select(const PipelineConfig& config) {
    validate_for_select(config);
    std::vector<ChunkScore> scores = read_score_file(config.scores_path);
    ScoreTable table = build_score_table(std::move(scores), config.alpha, config.global_zscore);

    std::map<Category, Budget> budgets = config.budgets;
    if (budgets.empty()) {
        for (Category cat : kAllCategories) budgets[cat] = Budget{Budget::Kind::Fraction, 1.0};
    }
    const SelectionManifest manifest = select(table, budgets);
    write_manifest(manifest, config.manifest_path);

    const std::string sidecar_path = config.stats_sidecar_path.empty()
                                         ? config.manifest_path + ".stats.json"
                                         : config.stats_sidecar_path;

    nlohmann::ordered_json categories = nlohmann::ordered_json::object();
    for (const auto& [cat, sel] : manifest.per_category) {
        const CategoryMoments& cm = table.moments.at(cat);
        nlohmann::ordered_json c;
        c["count"] = cm.count;
        c["ds_mean"] = cm.ds.mean;
        c["ds_stdev"] = cm.ds.stdev;
        c["du_mean"] = cm.du.mean;
        c["du_stdev"] = cm.du.stdev;
        c["available_tokens"] = sel.available_tokens;
        c["budget_tokens"] = sel.budget_tokens;
        c["selected_tokens"] = sel.selected_tokens;
        c["selected_count"] = sel.selected_count;
        c["overshoot_tokens"] = sel.overshoot_tokens;
        c["threshold"] = sel.threshold;
        c["budget_exceeds_available"] = sel.budget_exceeds_available;
        if (sel.budget_exceeds_available)
            std::cerr << "warning: category '" << to_string(cat)
                      << "' budget exceeds available tokens; selecting everything\n";
        categories[to_string(cat)] = c;
    }

    nlohmann::ordered_json sidecar;
    sidecar["alpha"] = config.alpha;
    sidecar["standardization"] = config.global_zscore ? "global" : "per-category";
    sidecar["selected_total"] = manifest.selected.size();
    sidecar["categories"] = categories;
    sidecar["input"] = {{"path", config.scores_path},
                        {"fingerprint", "fnv1a64:" + hex64(fnv1a64_file(config.scores_path))}};
    std::ofstream side(sidecar_path, std::ios::trunc);
    if (!side) throw DataError("cannot write stats sidecar: " + sidecar_path);
    side << sidecar.dump(2) << "\n";

    return sidecar;
}

// ---------------------------------------------------------------------------
// stats: score JSONL -> per-category spread report
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_stats(const PipelineConfig& config) {
    if (config.scores_path.empty()) throw ConfigError("stats requires --scores");
    const std::vector<ChunkScore> scores = read_score_file(config.scores_path);
    return stats_report_json(stats_report(scores));
}

// ---------------------------------------------------------------------------
// pipeline: chunk -> score -> select, with stage outputs persisted so a
// rerun resumes instead of recomputing.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_pipeline(const PipelineConfig& config) {
    validate_for_chunk(config);
    validate_for_score(config);
    validate_for_select(config);

    nlohmann::ordered_json result;

    bool reuse_store = false;
    if (std::filesystem::exists(config.chunk_store_path)) {
        // A store left by a previous run is reused only when it matches this
        // configuration; a window-size conflict is a configuration error.
        ChunkStoreReader probe(config.chunk_store_path);
        if (probe.window() != config.window_size)
            throw ConfigError("existing chunk store " + config.chunk_store_path +
                              " has window size " + std::to_string(probe.window()) +
                              " but this pipeline is configured for " +
                              std::to_string(config.window_size));
        const std::string summary_path = config.chunk_store_path + ".summary.json";
        std::ifstream sf(summary_path);
        if (sf) {
            nlohmann::json prev = nlohmann::json::parse(sf, nullptr, false);
            if (!prev.is_discarded() && prev.contains("input") &&
                prev["input"].value("fingerprint", "") ==
                    detail::fingerprint_input(config.input_path, config.format))
                reuse_store = true;
        }
    }
    if (reuse_store) {
        result["chunk"] = {{"skipped", "chunk store is up to date"}};
    } else {
        result["chunk"] = run_chunk(config);
    }
    result["score"] = run_score(config, /*enforce_window=*/true);
    result["select"] = run_select(config);
    return result;
}

}  // namespace longattn

#endif  // LONGATTN_PIPELINE_HPP
