#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "longattn/model.hpp"
#include "longattn/safetensors.hpp"
#include "test_util.hpp"

using namespace longattn;
using testutil::TempDir;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 64;
    c.hidden_dim = 32;
    c.n_query_heads = 2;
    c.n_kv_heads = 2;
    c.head_dim = 16;
    c.rope_theta = 10000.0;
    c.norm_eps = 1e-5;
    return c;
}

}  // namespace

TEST_CASE("model config validation") {
    ModelConfig c = tiny_config();
    CHECK_NOTHROW(validate(c));

    SECTION("kv heads must divide query heads") {
        c.n_query_heads = 3;
        c.n_kv_heads = 2;
        c.hidden_dim = 48;
        CHECK_THROWS_AS(validate(c), ModelError);
    }

    SECTION("heads times head_dim must equal hidden_dim") {
        c.head_dim = 8;
        CHECK_THROWS_AS(validate(c), ModelError);
    }

    SECTION("json round trip") {
        TempDir dir("mcfg");
        save_model_config(c, dir.file("m.json"));
        const ModelConfig back = load_model_config(dir.file("m.json"));
        CHECK(back.hidden_dim == c.hidden_dim);
        CHECK(back.n_query_heads == c.n_query_heads);
        CHECK(back.n_kv_heads == c.n_kv_heads);
        CHECK(back.head_dim == c.head_dim);
        CHECK(back.vocab_size == c.vocab_size);
        CHECK(back.rope_theta == c.rope_theta);
    }
}

TEST_CASE("weight container loading") {
    TempDir dir("weights");
    const ModelConfig config = tiny_config();
    const LayerWeights weights = synthesize_weights(config, 1234);

    SECTION("fixture container loads with a stable checksum") {
        save_weights(weights, config, dir.file("w.safetensors"));
        const LayerWeights a = load_weights(dir.file("w.safetensors"), config);
        const LayerWeights b = load_weights(dir.file("w.safetensors"), config);
        CHECK(a.checksum == b.checksum);
        CHECK(a.checksum == weights.checksum);  // F32 bytes survive the round trip
        REQUIRE(a.token_embedding == weights.token_embedding);
        REQUIRE(a.w_q == weights.w_q);
        REQUIRE(a.w_k == weights.w_k);
        REQUIRE(a.attn_norm_gain == weights.attn_norm_gain);
    }

    SECTION("missing key projection is fatal and names the tensor") {
        write_safetensors(
            dir.file("missing.safetensors"),
            {{kEmbeddingTensor, {{config.vocab_size, config.hidden_dim}, weights.token_embedding}},
             {kNormGainTensor, {{config.hidden_dim}, weights.attn_norm_gain}},
             {kQueryProjTensor,
              {{config.n_query_heads * config.head_dim, config.hidden_dim}, weights.w_q}}});
        try {
            load_weights(dir.file("missing.safetensors"), config);
            FAIL("expected ModelError");
        } catch (const ModelError& e) {
            CHECK(std::string(e.what()).find(kKeyProjTensor) != std::string::npos);
        }
    }

    SECTION("transposed projection shape is fatal with both shapes") {
        // W_q is square whenever heads * head_dim == hidden, so the
        // transposition shows up on the grouped-query key projection.
        ModelConfig gqa = config;
        gqa.n_kv_heads = 1;
        const LayerWeights gw = synthesize_weights(gqa, 7);
        write_safetensors(
            dir.file("transposed.safetensors"),
            {{kEmbeddingTensor, {{gqa.vocab_size, gqa.hidden_dim}, gw.token_embedding}},
             {kNormGainTensor, {{gqa.hidden_dim}, gw.attn_norm_gain}},
             {kQueryProjTensor,
              {{gqa.n_query_heads * gqa.head_dim, gqa.hidden_dim}, gw.w_q}},
             {kKeyProjTensor,
              {{gqa.hidden_dim, gqa.n_kv_heads * gqa.head_dim}, gw.w_k}}});  // transposed
        try {
            load_weights(dir.file("transposed.safetensors"), gqa);
            FAIL("expected ModelError");
        } catch (const ModelError& e) {
            const std::string msg = e.what();
            CHECK(msg.find(kKeyProjTensor) != std::string::npos);
            CHECK(msg.find("[32, 16]") != std::string::npos);  // found (transposed)
            CHECK(msg.find("[16, 32]") != std::string::npos);  // required
        }
    }

    SECTION("missing container file is fatal") {
        CHECK_THROWS_AS(load_weights(dir.file("absent.safetensors"), config), ModelError);
    }

    SECTION("synthesis is deterministic per seed") {
        const LayerWeights again = synthesize_weights(config, 1234);
        CHECK(again.checksum == weights.checksum);
        const LayerWeights other = synthesize_weights(config, 1235);
        CHECK(other.checksum != weights.checksum);
    }
}

TEST_CASE("safetensors dtype conversion") {
    TempDir dir("dtypes");

    // Hand-built container with one BF16 and one F16 tensor.
    const std::string header =
        R"({"bf":{"dtype":"BF16","shape":[2],"data_offsets":[0,4]},)"
        R"("hf":{"dtype":"F16","shape":[2],"data_offsets":[4,8]}})";
    std::string blob;
    std::vector<unsigned char> len;
    put_u64le(len, header.size());
    blob.append(reinterpret_cast<const char*>(len.data()), 8);
    blob += header;
    // BF16: 1.0 = 0x3f80, -2.5 = 0xc020 ; F16: 1.0 = 0x3c00, 0.5 = 0x3800
    const unsigned char data[] = {0x80, 0x3f, 0x20, 0xc0, 0x00, 0x3c, 0x00, 0x38};
    blob.append(reinterpret_cast<const char*>(data), sizeof(data));
    testutil::write_file(dir.file("mixed.safetensors"), blob);

    SafetensorsFile file{std::filesystem::path(dir.file("mixed.safetensors"))};
    const auto bf = file.read_f32("bf");
    REQUIRE(bf.size() == 2);
    CHECK(bf[0] == 1.0f);
    CHECK(bf[1] == -2.5f);
    const auto hf = file.read_f32("hf");
    CHECK(hf[0] == 1.0f);
    CHECK(hf[1] == 0.5f);
    CHECK_THROWS_AS(file.read_f32("nope"), ModelError);
}
