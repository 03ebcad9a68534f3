#ifndef LONGATTN_SELECTOR_HPP
#define LONGATTN_SELECTOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"
#include "longattn/depscore.hpp"

namespace longattn {

// ---------------------------------------------------------------------------
// Z-score standardization (population statistics).
// ---------------------------------------------------------------------------

struct Moments {
    double mean = 0.0;
    double stdev = 0.0;  // population standard deviation
};

inline Moments population_moments(std::span<const double> values) {
    Moments m;
    const size_t n = values.size();
    for (double v : values) m.mean += v;
    m.mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - m.mean) * (v - m.mean);
    m.stdev = std::sqrt(var / static_cast<double>(n));
    return m;
}

/// (v - mean) / popstdev for every value. Fatal on fewer than 2 values or
/// zero variance: all-identical scores cannot be ranked by z-score.
inline std::vector<double> zscore(std::span<const double> values) {
    if (values.size() < 2)
        throw DataError("z-score standardization requires at least 2 values, got " +
                        std::to_string(values.size()));
    const Moments m = population_moments(values);
    if (m.stdev == 0.0 || !std::isfinite(m.stdev))
        throw DataError("zero variance: all " + std::to_string(values.size()) +
                        " scores are identical and cannot be ranked by z-score");
    std::vector<double> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - m.mean) / m.stdev;
    return out;
}

/// The collaborative ensemble: standardized strength plus alpha times
/// standardized uniformity.
inline double combine(double std_ds, double std_du, double alpha) {
    return std_ds + alpha * std_du;
}

// ---------------------------------------------------------------------------
// Score table: raw scores plus their standardized forms and LDS_T.
// ---------------------------------------------------------------------------

struct ScoredRecord {
    ChunkScore score;
    double std_ds = 0.0;
    double std_du = 0.0;
    double lds_t = 0.0;
};

struct CategoryMoments {
    Moments ds;
    Moments du;
    uint64_t count = 0;
};

struct ScoreTable {
    std::vector<ScoredRecord> records;
    std::map<Category, CategoryMoments> moments;
    double alpha = 0.5;
    bool global_standardization = false;
};

/// Standardizes within each category independently (the default), or over
/// the whole table when global_standardization is set (ablation mode).
inline ScoreTable build_score_table(std::vector<ChunkScore> scores, double alpha,
                                    bool global_standardization = false) {
    if (scores.empty()) throw DataError("empty score table");
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    ScoreTable table;
    table.alpha = alpha;
    table.global_standardization = global_standardization;
    table.records.reserve(scores.size());
    for (ChunkScore& s : scores) table.records.push_back({std::move(s), 0.0, 0.0, 0.0});

    std::map<Category, std::vector<size_t>> groups;
    if (global_standardization) {
        std::vector<size_t>& all = groups[Category::Other];
        all.resize(table.records.size());
        for (size_t i = 0; i < table.records.size(); ++i) all[i] = i;
    } else {
        for (size_t i = 0; i < table.records.size(); ++i)
            groups[table.records[i].score.category].push_back(i);
    }

    for (const auto& [cat, idx] : groups) {
        std::vector<double> ds(idx.size());
        std::vector<double> du(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            ds[i] = table.records[idx[i]].score.ds_t;
            du[i] = table.records[idx[i]].score.du_t;
        }
        const std::string label = global_standardization ? "all categories"
                                                         : std::string("category '") +
                                                               to_string(cat) + "'";
        std::vector<double> zds;
        std::vector<double> zdu;
        try {
            zds = zscore(ds);
            zdu = zscore(du);
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " (in " + label + ")");
        }
        for (size_t i = 0; i < idx.size(); ++i) {
            ScoredRecord& r = table.records[idx[i]];
            r.std_ds = zds[i];
            r.std_du = zdu[i];
            r.lds_t = combine(zds[i], zdu[i], alpha);
        }
    }

    // Per-category raw moments are recorded either way, for the sidecar.
    std::map<Category, std::vector<double>> raw_ds, raw_du;
    for (const ScoredRecord& r : table.records) {
        raw_ds[r.score.category].push_back(r.score.ds_t);
        raw_du[r.score.category].push_back(r.score.du_t);
    }
    for (const auto& [cat, v] : raw_ds) {
        CategoryMoments cm;
        cm.ds = population_moments(v);
        cm.du = population_moments(raw_du[cat]);
        cm.count = v.size();
        table.moments[cat] = cm;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Budget-constrained selection.
// ---------------------------------------------------------------------------

struct Budget {
    enum class Kind { Tokens, Fraction } kind = Kind::Fraction;
    double value = 1.0;
};

struct SelectedEntry {
    std::string doc_id;
    uint32_t chunk_index = 0;
    Category category = Category::Other;
    double lds_t = 0.0;
    uint32_t rank = 0;  // 1-based within category
};

struct CategorySelection {
    uint64_t available_tokens = 0;
    uint64_t budget_tokens = 0;
    uint64_t selected_tokens = 0;
    uint64_t selected_count = 0;
    uint64_t overshoot_tokens = 0;
    double threshold = 0.0;  // lds_t of the last selected record
    bool budget_exceeds_available = false;
};

struct SelectionManifest {
    std::vector<SelectedEntry> selected;  // category order, then rank order
    std::map<Category, CategorySelection> per_category;
    double alpha = 0.5;
};

/// Within each category independently: rank by lds_t descending (ties break
/// by (doc_id, chunk_index) ascending) and take records while the selected
/// token count is below the budget. The chunk that crosses the boundary is
/// kept, so overshoot is at most one chunk and is recorded.
inline SelectionManifest select(const ScoreTable& table,
                                const std::map<Category, Budget>& budgets) {
    SelectionManifest manifest;
    manifest.alpha = table.alpha;

    std::map<Category, std::vector<const ScoredRecord*>> groups;
    for (const ScoredRecord& r : table.records) {
        if (!budgets.count(r.score.category))
            throw ConfigError(std::string("no budget configured for category '") +
                              to_string(r.score.category) + "'");
        groups[r.score.category].push_back(&r);
    }

    for (auto& [cat, records] : groups) {
        std::sort(records.begin(), records.end(),
                  [](const ScoredRecord* a, const ScoredRecord* b) {
                      if (a->lds_t != b->lds_t) return a->lds_t > b->lds_t;
                      if (a->score.doc_id != b->score.doc_id)
                          return a->score.doc_id < b->score.doc_id;
                      return a->score.chunk_index < b->score.chunk_index;
                  });

        uint64_t available = 0;
        for (const ScoredRecord* r : records) available += r->score.window;

        const Budget& budget = budgets.at(cat);
        CategorySelection sel;
        sel.available_tokens = available;
        if (budget.kind == Budget::Kind::Tokens) {
            sel.budget_tokens = static_cast<uint64_t>(budget.value);
        } else {
            if (budget.value < 0.0)
                throw ConfigError("budget fraction must be non-negative");
            sel.budget_tokens =
                static_cast<uint64_t>(budget.value * static_cast<double>(available) + 0.5);
        }
        if (sel.budget_tokens > available) sel.budget_exceeds_available = true;

        for (const ScoredRecord* r : records) {
            if (sel.selected_tokens >= sel.budget_tokens) break;
            SelectedEntry e;
            e.doc_id = r->score.doc_id;
            e.chunk_index = r->score.chunk_index;
            e.category = cat;
            e.lds_t = r->lds_t;
            e.rank = static_cast<uint32_t>(++sel.selected_count);
            sel.selected_tokens += r->score.window;
            sel.threshold = r->lds_t;
            manifest.selected.push_back(std::move(e));
        }
        if (sel.selected_tokens > sel.budget_tokens)
            sel.overshoot_tokens = sel.selected_tokens - sel.budget_tokens;
        manifest.per_category[cat] = sel;
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Stats report: per-category spread of the raw scores (Appendix-style
// min/max/mean table plus 64-bin histograms).
// ---------------------------------------------------------------------------

struct MetricStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::vector<uint64_t> histogram;  // 64 equal-width bins over [min, max]
};

struct CategoryReport {
    uint64_t count = 0;
    MetricStats ds;
    MetricStats du;
};

using StatsReport = std::map<Category, CategoryReport>;

namespace detail {

inline MetricStats metric_stats(std::span<const double> values) {
    MetricStats s;
    s.min = values[0];
    s.max = values[0];
    double sum = 0.0;
    for (double v : values) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    s.mean = sum / static_cast<double>(values.size());
    constexpr int kBins = 64;
    s.histogram.assign(kBins, 0);
    const double width = (s.max - s.min) / kBins;
    for (double v : values) {
        int bin = width > 0.0 ? static_cast<int>((v - s.min) / width) : 0;
        bin = std::clamp(bin, 0, kBins - 1);
        ++s.histogram[static_cast<size_t>(bin)];
    }
    return s;
}

}  // namespace detail

inline StatsReport stats_report(std::span<const ChunkScore> scores) {
    if (scores.empty()) throw DataError("stats report over an empty score table");
    std::map<Category, std::vector<double>> ds, du;
    for (const ChunkScore& s : scores) {
        ds[s.category].push_back(s.ds_t);
        du[s.category].push_back(s.du_t);
    }
    StatsReport report;
    for (const auto& [cat, v] : ds) {
        CategoryReport cr;
        cr.count = v.size();
        cr.ds = detail::metric_stats(v);
        cr.du = detail::metric_stats(du[cat]);
        report[cat] = cr;
    }
    return report;
}

inline nlohmann::ordered_json stats_report_json(const StatsReport& report) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [cat, cr] : report) {
        nlohmann::ordered_json c;
        c["count"] = cr.count;
        for (const auto& [name, m] : {std::pair<const char*, const MetricStats*>{"ds_t", &cr.ds},
                                      {"du_t", &cr.du}}) {
            nlohmann::ordered_json mj;
            mj["min"] = m->min;
            mj["max"] = m->max;
            mj["mean"] = m->mean;
            mj["histogram"] = m->histogram;
            c[name] = mj;
        }
        j[to_string(cat)] = c;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Manifest serialization.
// ---------------------------------------------------------------------------

inline std::string format_manifest_record(const SelectedEntry& e) {
    std::string line = "{\"doc_id\":\"" + json_escape(e.doc_id) + "\"";
    line += ",\"chunk_index\":" + std::to_string(e.chunk_index);
    line += ",\"category\":\"" + std::string(to_string(e.category)) + "\"";
    line += ",\"lds_t\":" + format_score(e.lds_t);
    line += ",\"rank\":" + std::to_string(e.rank) + "}";
    return line;
}

inline void write_manifest(const SelectionManifest& manifest,
                           const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open manifest for writing: " + path.string());
    for (const SelectedEntry& e : manifest.selected) out << format_manifest_record(e) << "\n";
    if (!out) throw DataError("write failure on manifest: " + path.string());
}

inline std::vector<SelectedEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());
    std::vector<SelectedEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("malformed manifest record: " + line);
        SelectedEntry e;
        e.doc_id = j.at("doc_id").get<std::string>();
        e.chunk_index = j.at("chunk_index").get<uint32_t>();
        e.category = category_from_string(j.at("category").get<std::string>());
        e.lds_t = j.at("lds_t").get<double>();
        e.rank = j.at("rank").get<uint32_t>();
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace longattn

#endif  // LONGATTN_SELECTOR_HPP
