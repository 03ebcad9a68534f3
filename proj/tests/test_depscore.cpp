#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "longattn/depscore.hpp"
#include "longattn/score_io.hpp"

using namespace longattn;

namespace {

// Random row-stochastic causal matrix (independent of any attention code).
CausalMatrix random_causal_matrix(uint32_t window, uint64_t seed) {
    SplitMix64 rng(seed);
    CausalMatrix m(window);
    for (uint32_t q = 1; q <= window; ++q) {
        m[q - 1].resize(q);
        double sum = 0.0;
        for (auto& v : m[q - 1]) {
            v = rng.uniform() + 1e-9;
            sum += v;
        }
        for (auto& v : m[q - 1]) v /= sum;
    }
    return m;
}

// Brute-force oracle: explicitly enumerate the distant-region entries and
// take their population mean/variance in a second pass.
struct RegionStats {
    double ds = 0.0;
    double variance_valid = 0.0;
    double variance_full = 0.0;
};

RegionStats brute_force_region(const CausalMatrix& m, uint32_t k) {
    const uint64_t window = m.size();
    std::vector<double> entries;
    for (uint64_t q = k + 1; q <= window; ++q)
        for (uint64_t p = 1; p + k <= q; ++p) entries.push_back(m[q - 1][p - 1]);

    RegionStats out;
    double total = 0.0;
    for (double v : entries) total += v;
    out.ds = total / static_cast<double>(window);

    auto variance_over = [&](uint64_t n) {
        double mean = 0.0;
        for (double v : entries) mean += v;
        mean /= static_cast<double>(n);  // absent entries are structural zeros
        double var = 0.0;
        for (double v : entries) var += (v - mean) * (v - mean);
        // structural zeros contribute (0 - mean)^2 each
        var += static_cast<double>(n - entries.size()) * mean * mean;
        return var / static_cast<double>(n);
    };
    out.variance_valid = variance_over(entries.size());
    const uint64_t span = window - k;
    out.variance_full = variance_over(span * span);
    return out;
}

TokenChunk chunk_of(uint32_t window) {
    TokenChunk c;
    c.doc_id = "chunk";
    c.token_ids.assign(window, 0);
    return c;
}

}  // namespace

TEST_CASE("m_t entry count") {
    CHECK(m_t_entry_count(10, 2) == 36);
    CHECK(m_t_entry_count(5, 4) == 1);      // L = k + 1
    CHECK(m_t_entry_count(32768, 8192) == 302002176ull);  // 24576 * 24577 / 2
    CHECK_THROWS_AS(m_t_entry_count(8, 0), ConfigError);
    CHECK_THROWS_AS(m_t_entry_count(8, 8), ConfigError);
}

TEST_CASE("dependency strength from a matrix") {
    SECTION("uniform pattern, L = 8, k = 2 equals the closed form") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Uniform, 8);
        // (1/8) * sum_{q=3..8} (q-2)/q = 499/1120
        double closed = 0.0;
        for (int q = 3; q <= 8; ++q) closed += double(q - 2) / q;
        closed /= 8.0;
        const double got = ds_t_from_matrix(m, 2);
        CHECK(got == Catch::Approx(closed).margin(1e-15));
        CHECK(got == Catch::Approx(499.0 / 1120.0).margin(1e-12));
    }

    SECTION("local pattern scores zero for k >= 2") {
        for (uint32_t k : {2u, 3u, 7u}) {
            const CausalMatrix m = synthetic_matrix(SyntheticKind::Local, 16);
            CHECK(ds_t_from_matrix(m, k) == 0.0);
        }
    }

    SECTION("sink pattern scores (L-k)/L") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Sink, 256);
        CHECK(ds_t_from_matrix(m, 64) == Catch::Approx(0.75).margin(1e-15));
    }

    SECTION("random matrices match the brute-force oracle") {
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            const CausalMatrix m = random_causal_matrix(16, seed);
            const RegionStats want = brute_force_region(m, 5);
            CHECK(ds_t_from_matrix(m, 5) == Catch::Approx(want.ds).margin(1e-12));
        }
    }

    SECTION("a denormalized row rejects the chunk") {
        CausalMatrix m = random_causal_matrix(16, 4);
        for (auto& v : m[7]) v *= 1.01;  // off by 1e-2
        CHECK_THROWS_AS(ds_t_from_matrix(m, 4), DataError);
        CHECK_THROWS_AS(du_t_from_matrix(m, 4), DataError);
    }

    SECTION("bounds hold on random matrices") {
        for (uint64_t seed = 10; seed < 30; ++seed) {
            const CausalMatrix m = random_causal_matrix(32, seed);
            const uint32_t k = 1 + seed % 30;
            const double ds = ds_t_from_matrix(m, k);
            CHECK(ds >= 0.0);
            CHECK(ds <= double(32 - k) / 32.0);
        }
    }
}

TEST_CASE("distribution uniformity from a matrix") {
    SECTION("constant distant region has zero variance") {
        // all distant entries equal c; remaining row mass parks on the diagonal
        const uint32_t window = 12, k = 3;
        const double c = 0.01;
        CausalMatrix m(window);
        for (uint32_t q = 1; q <= window; ++q) {
            m[q - 1].assign(q, 0.0);
            uint32_t distant = q > k ? q - k : 0;
            for (uint32_t p = 1; p <= distant; ++p) m[q - 1][p - 1] = c;
            m[q - 1][q - 1] = 1.0 - c * distant;
        }
        CHECK(du_t_from_matrix(m, k) == Catch::Approx(0.0).margin(1e-15));
    }

    SECTION("sink pattern, valid-only, L = 10, k = 2: frozen value -14/81") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Sink, 10);
        const double got = du_t_from_matrix(m, 2, PopulationMode::ValidOnly);
        CHECK(got == Catch::Approx(-14.0 / 81.0).margin(1e-15));
        // mu = 2/(L-k+1)
        const double mu = 2.0 / 9.0;
        CHECK(got == Catch::Approx(-(mu - mu * mu)).margin(1e-15));
    }

    SECTION("random 16x16 matrices match the brute-force two-pass variance") {
        for (uint64_t seed : {5ull, 6ull, 7ull}) {
            const CausalMatrix m = random_causal_matrix(16, seed);
            const RegionStats want = brute_force_region(m, 4);
            CHECK(du_t_from_matrix(m, 4, PopulationMode::ValidOnly) ==
                  Catch::Approx(-want.variance_valid).margin(1e-12));
            CHECK(du_t_from_matrix(m, 4, PopulationMode::FullTriangle) ==
                  Catch::Approx(-want.variance_full).margin(1e-12));
        }
    }

    SECTION("population modes coincide only when the region is the full block") {
        // L - k = 1: both modes have the single entry M[L][1]; variance is
        // undefined either way (population of one).
        const CausalMatrix one = random_causal_matrix(8, 8);
        CHECK_THROWS_AS(du_t_from_matrix(one, 7, PopulationMode::ValidOnly), DataError);
        CHECK_THROWS_AS(du_t_from_matrix(one, 7, PopulationMode::FullTriangle), DataError);

        // otherwise the structural zeros make the modes diverge
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Sink, 10);
        const double valid = du_t_from_matrix(m, 2, PopulationMode::ValidOnly);
        const double full = du_t_from_matrix(m, 2, PopulationMode::FullTriangle);
        CHECK(valid != full);
        const RegionStats want = brute_force_region(m, 2);
        CHECK(full == Catch::Approx(-want.variance_full).margin(1e-15));
    }

    SECTION("du is never positive") {
        for (uint64_t seed = 40; seed < 50; ++seed) {
            const CausalMatrix m = random_causal_matrix(24, seed);
            CHECK(du_t_from_matrix(m, 6) <= 0.0);
        }
    }
}

TEST_CASE("k-monotonicity of dependency strength") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const CausalMatrix m = random_causal_matrix(64, 100 + seed);
        double prev = 2.0;
        for (uint32_t k : {8u, 16u, 32u, 48u}) {
            const double ds = ds_t_from_matrix(m, k);
            CHECK(ds <= prev);
            prev = ds;
        }
    }
}

TEST_CASE("streaming scores equal the matrix path") {
    const ModelConfig config = [] {
        ModelConfig c;
        c.vocab_size = 128;
        c.hidden_dim = 32;
        c.n_query_heads = 2;
        c.n_kv_heads = 1;
        c.head_dim = 16;
        c.rope_theta = 10000.0;
        c.norm_eps = 1e-5;
        return c;
    }();
    const AttentionSource source =
        AttentionSource::make_real(config, synthesize_weights(config, 999));

    for (uint32_t window : {64u, 128u}) {
        TokenChunk chunk = chunk_of(window);
        SplitMix64 rng(window);
        for (auto& t : chunk.token_ids) t = uint32_t(rng.next() % config.vocab_size);
        const uint32_t k = window / 4;

        const CausalMatrix m = full_matrix(chunk.token_ids, source);
        const double ds_oracle = ds_t_from_matrix(m, k);
        const double du_oracle = du_t_from_matrix(m, k, PopulationMode::ValidOnly);

        for (uint32_t tile : {1u, 16u, 64u, window}) {
            const ChunkScore s =
                score_chunk_streaming(chunk, source, k, tile, PopulationMode::ValidOnly);
            CHECK(s.ds_t == Catch::Approx(ds_oracle).margin(1e-5));
            CHECK(s.du_t == Catch::Approx(du_oracle).epsilon(1e-4));
            CHECK(s.window == window);
            CHECK(s.k == k);
        }
    }
}

TEST_CASE("score records round-trip exactly through JSONL") {
    SplitMix64 rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        ChunkScore s;
        s.doc_id = "doc/\"weird\"\t" + std::to_string(trial);
        s.chunk_index = static_cast<uint32_t>(rng.next());
        s.category = static_cast<Category>(rng.next() % 4);
        s.window = 1 + static_cast<uint32_t>(rng.next() % 100000);
        s.k = 1 + s.window / 4;
        s.ds_t = rng.uniform(0.0, 0.75);
        s.du_t = -rng.uniform(0.0, 1e-6);
        s.population_mode =
            rng.next() % 2 ? PopulationMode::ValidOnly : PopulationMode::FullTriangle;
        s.source_fingerprint = "synthetic:uniform";
        const ChunkScore back = parse_score_record(format_score_record(s));
        REQUIRE(back.doc_id == s.doc_id);
        REQUIRE(back.ds_t == s.ds_t);  // 17 significant digits reproduce the double
        REQUIRE(back.du_t == s.du_t);
        REQUIRE(back.window == s.window);
        REQUIRE(back.population_mode == s.population_mode);
    }
}

TEST_CASE("streaming closed forms") {
    SECTION("sink chunk at L = 256: ds exactly 0.75, du matches the closed form") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Sink, 0});
        const ChunkScore s = score_chunk_streaming(chunk_of(256), src, 64, 32);
        CHECK(s.ds_t == 0.75);
        const double mu = 2.0 / (256 - 64 + 1);
        CHECK(s.du_t == Catch::Approx(-(mu - mu * mu)).margin(1e-15));
    }

    SECTION("large sink window works in constant memory per row") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Sink, 0});
        const ChunkScore s = score_chunk_streaming(chunk_of(32768), src, 8192, 256);
        CHECK(s.ds_t == 0.75);
    }

    SECTION("k = L-1 leaves a single contributing row") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Uniform, 0});
        std::vector<uint32_t> tokens(16, 0);
        const auto stats = stream_row_stats(tokens, src, 15, 4);
        for (const auto& st : stats) {
            if (st.q == 16) {
                CHECK(st.distant_count == 1);
                CHECK(st.distant_mass == Catch::Approx(1.0 / 16).margin(1e-15));
            } else {
                CHECK(st.distant_count == 0);
                CHECK(st.distant_mass == 0.0);
            }
        }
        // ds via the matrix path: M[L][1] / L
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Uniform, 16);
        CHECK(ds_t_from_matrix(m, 15) == Catch::Approx((1.0 / 16) / 16).margin(1e-15));
        // du is undefined for the single-entry region
        CHECK_THROWS_AS(score_chunk_streaming(chunk_of(16), src, 15, 4), DataError);
    }
}
