// longattn-make-model: generate a seeded synthetic scoring model (weight
// container + config JSON) for smoke-testing the real-weights path without
// downloading a checkpoint.

#include <iostream>

#include "CLI11.hpp"

#include "longattn/model.hpp"

int main(int argc, char** argv) {
    longattn::ModelConfig config;
    config.vocab_size = 256;
    config.hidden_dim = 64;
    config.n_query_heads = 4;
    config.n_kv_heads = 2;
    config.head_dim = 16;
    uint64_t seed = 42;
    std::string weights_out = "model.safetensors";
    std::string config_out = "model.json";

    CLI::App app{"Generate a synthetic scoring model"};
    app.add_option("--vocab-size", config.vocab_size);
    app.add_option("--hidden-dim", config.hidden_dim);
    app.add_option("--query-heads", config.n_query_heads);
    app.add_option("--kv-heads", config.n_kv_heads);
    app.add_option("--head-dim", config.head_dim);
    app.add_option("--rope-theta", config.rope_theta);
    app.add_option("--norm-eps", config.norm_eps);
    app.add_option("--seed", seed);
    app.add_option("--weights-out", weights_out);
    app.add_option("--config-out", config_out);
    CLI11_PARSE(app, argc, argv);

    try {
        const longattn::LayerWeights weights = longattn::synthesize_weights(config, seed);
        longattn::save_weights(weights, config, weights_out);
        longattn::save_model_config(config, config_out);
        std::cout << "wrote " << weights_out << " (checksum fnv1a64:"
                  << longattn::hex64(weights.checksum) << ") and " << config_out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
