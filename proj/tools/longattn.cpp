// longattn: select long-context pretraining data by scoring token-level
// long-range dependencies with first-layer attention statistics.
//
// Subcommands: chunk, score, select, pipeline, stats. One TOML config file
// can drive everything (flag > file > default); LONGATTN_CONFIG names it.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "longattn/pipeline.hpp"

namespace {

struct RawOptions {
    std::string category = "other";
    std::string format = "jsonl";
    std::string policy = "keep-exact";
    std::string population_mode = "valid-only";
    std::vector<std::string> budgets;
    double budget_fraction = -1.0;
    int64_t budget_tokens = -1;
    std::string stats_output;
};

longattn::Budget parse_budget_spec(const std::string& spec) {
    using longattn::Budget;
    if (spec.rfind("tokens:", 0) == 0) {
        const std::string v = spec.substr(7);
        try {
            return Budget{Budget::Kind::Tokens, static_cast<double>(std::stoull(v))};
        } catch (...) {
            throw longattn::ConfigError("bad token budget '" + v + "'");
        }
    }
    if (spec.rfind("frac:", 0) == 0) {
        const std::string v = spec.substr(5);
        try {
            return Budget{Budget::Kind::Fraction, std::stod(v)};
        } catch (...) {
            throw longattn::ConfigError("bad budget fraction '" + v + "'");
        }
    }
    throw longattn::ConfigError("budget spec '" + spec +
                                "' must look like tokens:<count> or frac:<fraction>");
}

void apply_raw_options(const RawOptions& raw, longattn::PipelineConfig& config) {
    using namespace longattn;
    config.category = category_from_string(raw.category);
    config.format = ingest_format_from_string(raw.format);
    config.policy = length_policy_from_string(raw.policy);
    config.population_mode = population_mode_from_string(raw.population_mode);

    if (raw.budget_fraction >= 0.0 && raw.budget_tokens >= 0)
        throw ConfigError("--budget-fraction and --budget-tokens are mutually exclusive");
    if (raw.budget_fraction >= 0.0)
        for (Category cat : kAllCategories)
            config.budgets[cat] = Budget{Budget::Kind::Fraction, raw.budget_fraction};
    if (raw.budget_tokens >= 0)
        for (Category cat : kAllCategories)
            config.budgets[cat] =
                Budget{Budget::Kind::Tokens, static_cast<double>(raw.budget_tokens)};
    for (const std::string& entry : raw.budgets) {
        const size_t eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("budget entry '" + entry + "' must look like <category>=<spec>");
        const Category cat = category_from_string(entry.substr(0, eq));
        config.budgets[cat] = parse_budget_spec(entry.substr(eq + 1));
    }
}

void print_threshold_table(const nlohmann::ordered_json& sidecar) {
    std::printf("%-8s %10s %14s %14s %22s\n", "category", "selected", "tokens", "budget",
                "threshold");
    for (const auto& [cat, c] : sidecar.at("categories").items()) {
        std::printf("%-8s %10llu %14llu %14llu %22.12g\n", cat.c_str(),
                    static_cast<unsigned long long>(c.at("selected_count").get<uint64_t>()),
                    static_cast<unsigned long long>(c.at("selected_tokens").get<uint64_t>()),
                    static_cast<unsigned long long>(c.at("budget_tokens").get<uint64_t>()),
                    c.at("threshold").get<double>());
    }
}

}  // namespace

int main(int argc, char** argv) {
    longattn::PipelineConfig config;
    RawOptions raw;

    CLI::App app{"LongAttn long-context data selection pipeline"};
    app.set_config("--config", "", "TOML configuration file")->envname("LONGATTN_CONFIG");
    app.option_defaults()->always_capture_default();

    auto* window_opt =
        app.add_option("-W,--window-size", config.window_size, "Window (chunk) size in tokens");
    app.add_option("-k,--min-distance", config.min_token_distance,
                   "Minimum token distance (default: window-size / 4)");
    app.add_option("--alpha", config.alpha, "Uniformity correction factor");
    app.add_option("--tile", config.tile, "Tile (block) size for streaming attention");
    app.add_option("--population-mode", raw.population_mode,
                   "Variance population: valid-only|full-triangle");
    app.add_option("--policy", raw.policy, "Exact-length policy: keep-exact|literal");
    app.add_option("--workers", config.workers, "Worker threads (1 = fully serial)");
    app.add_option("--seed", config.seed, "Seed recorded in summaries");

    app.add_option("--input", config.input_path, "Input corpus (JSONL file or directory)");
    app.add_option("--category", raw.category, "Corpus category: arxiv|book|code|other");
    app.add_option("--format", raw.format, "Input format: jsonl|plain-dir");
    app.add_option("--tokenizer", config.tokenizer_spec_path,
                   "Tokenizer spec JSON (default: byte-level)");
    app.add_option("--chunks", config.chunk_store_path, "Chunk store path");

    app.add_option("--synthetic", config.synthetic,
                   "Synthetic attention pattern: uniform|sink|local|banded:<w>");
    app.add_option("--weights", config.weights_path, "Weight container (safetensors)");
    app.add_option("--model-config", config.model_config_path, "Model config JSON");
    app.add_option("--scores", config.scores_path, "Score JSONL path");

    app.add_option("--manifest", config.manifest_path, "Selection manifest path");
    app.add_option("--stats-out", config.stats_sidecar_path,
                   "Stats sidecar path (default: <manifest>.stats.json)");
    app.add_option("--budget-fraction", raw.budget_fraction,
                   "Per-category budget as a fraction of available tokens");
    app.add_option("--budget-tokens", raw.budget_tokens, "Per-category budget in tokens");
    app.add_option("--budget", raw.budgets,
                   "Per-category budget override: <category>=tokens:<n> or <category>=frac:<x>")
        ->take_all();
    app.add_flag("--global-zscore", config.global_zscore,
                 "Standardize over all categories jointly (ablation)");
    app.add_option("--output", raw.stats_output, "Stats report output path (default: stdout)");

    auto* cmd_chunk = app.add_subcommand("chunk", "Tokenize documents into a chunk store");
    auto* cmd_score = app.add_subcommand("score", "Score chunks with attention statistics");
    auto* cmd_select = app.add_subcommand("select", "Standardize, rank and select chunks");
    auto* cmd_pipeline = app.add_subcommand("pipeline", "Run chunk, score and select");
    auto* cmd_stats = app.add_subcommand("stats", "Report raw score distributions");
    for (auto* sub : {cmd_chunk, cmd_score, cmd_select, cmd_pipeline, cmd_stats})
        sub->fallthrough();
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        config.window_size_explicit = window_opt->count() > 0;
        apply_raw_options(raw, config);

        if (cmd_chunk->parsed()) {
            std::cout << longattn::run_chunk(config).dump(2) << "\n";
        } else if (cmd_score->parsed()) {
            std::cout << longattn::run_score(config).dump(2) << "\n";
        } else if (cmd_select->parsed()) {
            const auto sidecar = longattn::run_select(config);
            print_threshold_table(sidecar);
            std::cout << sidecar.dump(2) << "\n";
        } else if (cmd_pipeline->parsed()) {
            const auto result = longattn::run_pipeline(config);
            print_threshold_table(result.at("select"));
            std::cout << result.dump(2) << "\n";
        } else if (cmd_stats->parsed()) {
            const auto report = longattn::run_stats(config);
            if (raw.stats_output.empty()) {
                std::cout << report.dump(2) << "\n";
            } else {
                std::ofstream out(raw.stats_output, std::ios::trunc);
                if (!out)
                    throw longattn::DataError("cannot write stats report: " + raw.stats_output);
                out << report.dump(2) << "\n";
            }
        } else {
            std::cerr << app.help();
            return 2;
        }
    } catch (const longattn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const longattn::ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const longattn::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
