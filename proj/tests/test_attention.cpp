#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "longattn/attention.hpp"
#include "longattn/model.hpp"

using namespace longattn;

namespace {

ModelConfig tiny_config(uint32_t n_q = 2, uint32_t n_kv = 2, uint32_t head_dim = 16,
                        uint32_t vocab = 64) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.hidden_dim = n_q * head_dim;
    c.n_query_heads = n_q;
    c.n_kv_heads = n_kv;
    c.head_dim = head_dim;
    c.rope_theta = 10000.0;
    c.norm_eps = 1e-5;
    return c;
}

std::vector<uint32_t> random_tokens(uint64_t n, uint32_t vocab, uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<uint32_t> tokens(n);
    for (auto& t : tokens) t = static_cast<uint32_t>(rng.next() % vocab);
    return tokens;
}

// ---------------------------------------------------------------------------
// Independent reference: a from-scratch recomputation of the forward pass in
// double precision, structured differently from the library (whole-sequence
// arrays, no tiling, no shared helpers).
// ---------------------------------------------------------------------------
std::vector<double> reference_row(const ModelConfig& c, const LayerWeights& w,
                                  const std::vector<uint32_t>& tokens, uint32_t q_1based) {
    const uint32_t n = q_1based;
    const uint32_t half = c.head_dim / 2;
    const uint32_t group = c.n_query_heads / c.n_kv_heads;

    // normalized hidden states for positions 0..q-1
    std::vector<std::vector<double>> h(n, std::vector<double>(c.hidden_dim));
    for (uint32_t t = 0; t < n; ++t) {
        const float* emb = &w.token_embedding[size_t(tokens[t]) * c.hidden_dim];
        double ss = 0.0;
        for (uint32_t i = 0; i < c.hidden_dim; ++i) ss += double(emb[i]) * emb[i];
        const double inv = 1.0 / std::sqrt(ss / c.hidden_dim + c.norm_eps);
        for (uint32_t i = 0; i < c.hidden_dim; ++i)
            h[t][i] = double(emb[i]) * inv * double(w.attn_norm_gain[i]);
    }

    auto project = [&](const std::vector<float>& weight, uint32_t head, uint32_t pos) {
        std::vector<double> v(c.head_dim);
        for (uint32_t j = 0; j < c.head_dim; ++j) {
            const float* row = &weight[size_t(head * c.head_dim + j) * c.hidden_dim];
            double acc = 0.0;
            for (uint32_t i = 0; i < c.hidden_dim; ++i) acc += double(row[i]) * h[pos][i];
            v[j] = acc;
        }
        // rotary, half-split pairs
        std::vector<double> r(c.head_dim);
        for (uint32_t j = 0; j < half; ++j) {
            const double angle = double(pos) * std::pow(c.rope_theta, -2.0 * j / c.head_dim);
            const double cs = std::cos(angle), sn = std::sin(angle);
            r[j] = v[j] * cs - v[j + half] * sn;
            r[j + half] = v[j + half] * cs + v[j] * sn;
        }
        return r;
    };

    std::vector<double> row(n, 0.0);
    for (uint32_t head = 0; head < c.n_query_heads; ++head) {
        const std::vector<double> qv = project(w.w_q, head, n - 1);
        std::vector<double> logits(n);
        for (uint32_t p = 0; p < n; ++p) {
            const std::vector<double> kv = project(w.w_k, head / group, p);
            double dot = 0.0;
            for (uint32_t j = 0; j < c.head_dim; ++j) dot += qv[j] * kv[j];
            logits[p] = dot / std::sqrt(double(c.head_dim));
        }
        double m = logits[0];
        for (double l : logits) m = std::max(m, l);
        double z = 0.0;
        for (double l : logits) z += std::exp(l - m);
        for (uint32_t p = 0; p < n; ++p) row[p] += std::exp(logits[p] - m) / z;
    }
    for (double& v : row) v /= c.n_query_heads;
    return row;
}

}  // namespace

TEST_CASE("synthetic patterns match their definitions") {
    SECTION("uniform, L = 3") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Uniform, 3);
        REQUIRE(m[0] == std::vector<double>{1.0});
        REQUIRE(m[1] == std::vector<double>{0.5, 0.5});
        REQUIRE(m[2] == std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
    }
    SECTION("sink, L = 3") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Sink, 3);
        REQUIRE(m[0] == std::vector<double>{1.0});
        REQUIRE(m[1] == std::vector<double>{1.0, 0.0});
        REQUIRE(m[2] == std::vector<double>{1.0, 0.0, 0.0});
    }
    SECTION("local, L = 3") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Local, 3);
        REQUIRE(m[0] == std::vector<double>{1.0});
        REQUIRE(m[1] == std::vector<double>{1.0, 0.0});
        REQUIRE(m[2] == std::vector<double>{0.0, 1.0, 0.0});
    }
    SECTION("banded(2), L = 3") {
        const CausalMatrix m = synthetic_matrix(SyntheticKind::Banded, 3, 2);
        REQUIRE(m[0] == std::vector<double>{1.0});
        REQUIRE(m[1] == std::vector<double>{0.5, 0.5});
        REQUIRE(m[2] == std::vector<double>{0.0, 0.5, 0.5});
    }
    SECTION("rows are stochastic for every kind") {
        for (auto kind : {SyntheticKind::Uniform, SyntheticKind::Sink, SyntheticKind::Local}) {
            const CausalMatrix m = synthetic_matrix(kind, 17);
            for (const auto& row : m) {
                double s = 0;
                for (double v : row) s += v;
                REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
            }
        }
    }
}

TEST_CASE("online softmax reproduces direct softmax") {
    SplitMix64 rng(4242);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 1 + rng.next() % 300;
        std::vector<double> logits(n);
        for (auto& l : logits) l = rng.uniform(-50.0, 50.0);

        OnlineSoftmax os;
        for (double l : logits) os.update(l);

        double m = logits[0];
        for (double l : logits) m = std::max(m, l);
        double denom = 0.0, sq = 0.0;
        for (double l : logits) {
            denom += std::exp(l - m);
            sq += std::exp(2.0 * (l - m));
        }
        REQUIRE(os.running_max == m);
        REQUIRE(os.denom == Catch::Approx(denom).epsilon(1e-12));
        REQUIRE(os.sq_denom == Catch::Approx(sq).epsilon(1e-12));
        for (double l : logits) {
            const double direct = std::exp(l - m) / denom;
            REQUIRE(os.prob(l) == Catch::Approx(direct).margin(1e-6).epsilon(1e-9));
        }
    }
}

TEST_CASE("attention_row oracle") {
    const ModelConfig config = tiny_config();
    const AttentionSource source =
        AttentionSource::make_real(config, synthesize_weights(config, 77));
    const auto tokens = random_tokens(16, config.vocab_size, 3);

    SECTION("q = 1 is a softmax over a single key") {
        const auto row = attention_row(tokens, source, 1);
        REQUIRE(row.size() == 1);
        REQUIRE(row[0] == Catch::Approx(1.0).margin(1e-9));
    }

    SECTION("synthetic uniform row q = 10") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Uniform, 0});
        const auto row = attention_row(tokens, src, 10);
        REQUIRE(row.size() == 10);
        for (double v : row) REQUIRE(v == 0.1);
    }

    SECTION("float path matches the double-precision reference within 1e-6") {
        const auto& model = *source.real;
        for (uint32_t q : {1u, 7u, 16u}) {
            const auto got = attention_row(tokens, source, q);
            const auto want = reference_row(model.config, model.weights, tokens, q);
            REQUIRE(got.size() == q);
            for (uint32_t p = 0; p < q; ++p)
                REQUIRE(got[p] == Catch::Approx(want[p]).margin(1e-6));
        }
    }

    SECTION("library double path matches the reference even tighter") {
        const auto& model = *source.real;
        const auto got = attention_row(tokens, source, 7, Precision::Float64Full);
        const auto want = reference_row(model.config, model.weights, tokens, 7);
        for (uint32_t p = 0; p < 7; ++p)
            REQUIRE(got[p] == Catch::Approx(want[p]).margin(1e-12));
    }

    SECTION("rows sum to one") {
        for (uint32_t q : {1u, 5u, 16u}) {
            const auto row = attention_row(tokens, source, q);
            double s = 0;
            for (double v : row) s += v;
            REQUIRE(s == Catch::Approx(1.0).margin(1e-5));
        }
    }

    SECTION("grouped-query replication matches the reference") {
        const ModelConfig gqa = tiny_config(4, 2);
        const AttentionSource gsrc =
            AttentionSource::make_real(gqa, synthesize_weights(gqa, 5));
        const auto gtokens = random_tokens(12, gqa.vocab_size, 8);
        const auto got = attention_row(gtokens, gsrc, 12);
        const auto want = reference_row(gqa, gsrc.real->weights, gtokens, 12);
        for (uint32_t p = 0; p < 12; ++p)
            REQUIRE(got[p] == Catch::Approx(want[p]).margin(1e-6));
    }

    SECTION("single-head degenerate case equals the one-head reference") {
        const ModelConfig one = tiny_config(1, 1, 32);
        const AttentionSource osrc =
            AttentionSource::make_real(one, synthesize_weights(one, 6));
        const auto otokens = random_tokens(10, one.vocab_size, 9);
        const auto got = attention_row(otokens, osrc, 10);
        const auto want = reference_row(one, osrc.real->weights, otokens, 10);
        for (uint32_t p = 0; p < 10; ++p)
            REQUIRE(got[p] == Catch::Approx(want[p]).margin(1e-6));
    }

    SECTION("out-of-range query position is fatal") {
        CHECK_THROWS_AS(attention_row(tokens, source, 0), DataError);
        CHECK_THROWS_AS(attention_row(tokens, source, 17), DataError);
    }
}

TEST_CASE("streaming row statistics") {
    SECTION("synthetic sink: full distant mass once the sink is distant") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Sink, 0});
        std::vector<uint32_t> tokens(64, 0);
        const auto stats = stream_row_stats(tokens, src, 16, 8);
        REQUIRE(stats.size() == 64);
        for (const auto& st : stats) {
            if (st.q >= 17) {
                REQUIRE(st.distant_mass == 1.0);
                REQUIRE(st.distant_sq_mass == 1.0);
            } else {
                REQUIRE(st.distant_mass == 0.0);
            }
            REQUIRE(st.distant_count == (st.q > 16 ? st.q - 16 : 0));
        }
    }

    SECTION("synthetic local: no distant mass for k > 1") {
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Local, 0});
        std::vector<uint32_t> tokens(64, 0);
        for (const auto& st : stream_row_stats(tokens, src, 16, 8))
            REQUIRE(st.distant_mass == 0.0);
    }

    SECTION("synthetic banded matches per-row enumeration") {
        const SyntheticSource banded{SyntheticKind::Banded, 24};
        const auto src = AttentionSource::make_synthetic(banded);
        std::vector<uint32_t> tokens(80, 0);
        const uint32_t k = 11;
        const auto stats = stream_row_stats(tokens, src, k, 16);
        for (uint64_t q = 1; q <= 80; ++q) {
            double mass = 0, sq = 0;
            for (uint64_t p = 1; p + k <= q; ++p) {
                const double e = synthetic_entry(banded, q, p);
                mass += e;
                sq += e * e;
            }
            REQUIRE(stats[q - 1].distant_mass == Catch::Approx(mass).margin(1e-12));
            REQUIRE(stats[q - 1].distant_sq_mass == Catch::Approx(sq).margin(1e-12));
        }
    }

    SECTION("tiling invariance against the full-matrix oracle") {
        const ModelConfig config = tiny_config(4, 2);
        const AttentionSource source =
            AttentionSource::make_real(config, synthesize_weights(config, 2024));
        const uint32_t L = 256, k = 64;
        const auto tokens = random_tokens(L, config.vocab_size, 11);

        const CausalMatrix oracle = full_matrix(tokens, source);
        std::vector<double> want_mass(L, 0.0), want_sq(L, 0.0);
        for (uint64_t q = 1; q <= L; ++q)
            for (uint64_t p = 1; p + k <= q; ++p) {
                want_mass[q - 1] += oracle[q - 1][p - 1];
                want_sq[q - 1] += oracle[q - 1][p - 1] * oracle[q - 1][p - 1];
            }

        for (uint32_t tile : {1u, 16u, 64u, 256u}) {
            const auto stats = stream_row_stats(tokens, source, k, tile);
            for (uint64_t q = 1; q <= L; ++q) {
                REQUIRE(stats[q - 1].distant_mass ==
                        Catch::Approx(want_mass[q - 1]).margin(1e-5));
                REQUIRE(stats[q - 1].distant_sq_mass ==
                        Catch::Approx(want_sq[q - 1]).margin(1e-5));
            }
        }
    }

    SECTION("parallel workers produce bit-identical statistics") {
        const ModelConfig config = tiny_config(2, 1);
        const AttentionSource source =
            AttentionSource::make_real(config, synthesize_weights(config, 31));
        const auto tokens = random_tokens(128, config.vocab_size, 13);
        const auto serial = stream_row_stats(tokens, source, 32, 16, 1);
        const auto parallel = stream_row_stats(tokens, source, 32, 16, 4);
        REQUIRE(serial.size() == parallel.size());
        for (size_t i = 0; i < serial.size(); ++i) {
            REQUIRE(serial[i].distant_mass == parallel[i].distant_mass);
            REQUIRE(serial[i].distant_sq_mass == parallel[i].distant_sq_mass);
        }
    }

    SECTION("parameter validation") {
        std::vector<uint32_t> tokens(8, 0);
        const auto src = AttentionSource::make_synthetic({SyntheticKind::Uniform, 0});
        CHECK_THROWS_AS(stream_row_stats(tokens, src, 0, 4), ConfigError);
        CHECK_THROWS_AS(stream_row_stats(tokens, src, 8, 4), ConfigError);
        CHECK_THROWS_AS(stream_row_stats(tokens, src, 9, 4), ConfigError);
        CHECK_THROWS_AS(stream_row_stats(tokens, src, 4, 0), ConfigError);
    }

    SECTION("token beyond the model vocab rejects the chunk") {
        const ModelConfig config = tiny_config();
        const AttentionSource source =
            AttentionSource::make_real(config, synthesize_weights(config, 1));
        std::vector<uint32_t> tokens(16, 0);
        tokens[5] = config.vocab_size;  // out of range
        CHECK_THROWS_AS(stream_row_stats(tokens, source, 4, 4), DataError);
    }

    SECTION("non-finite weights reject the chunk, also from parallel workers") {
        const ModelConfig config = tiny_config();
        LayerWeights weights = synthesize_weights(config, 1);
        weights.w_q[3] = std::numeric_limits<float>::quiet_NaN();
        const AttentionSource source = AttentionSource::make_real(config, std::move(weights));
        const auto tokens = random_tokens(32, config.vocab_size, 2);
        CHECK_THROWS_AS(stream_row_stats(tokens, source, 8, 4, 1), DataError);
        CHECK_THROWS_AS(stream_row_stats(tokens, source, 8, 4, 4), DataError);
    }
}
