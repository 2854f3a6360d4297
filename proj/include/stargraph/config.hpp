#pragma once

#include <cstdint>
#include <string>

#include "stargraph/model.hpp"
#include "stargraph/objective.hpp"
#include "stargraph/trainer.hpp"

namespace stargraph {

/// Union of every tunable key. Defaults reproduce the reference
/// configuration (batch 512, negatives 64, lr 5e-4 decayed 0.1 at half,
/// dropout 0.05, AdamW, u=0.1, gamma=6, D_A=256, D_N=32, 20 anchors,
/// 5 neighbors). The canonical echo is embedded into every output artifact.
struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;

    // encoder
    std::int64_t d_a = 256;
    std::int64_t d_n = 32;
    std::int32_t k_anchors = 20;
    std::int32_t m_neighbors = 5;
    bool use_neighbors = true;
    bool use_center = true;
    std::string encoder = "attention";  // attention | mlp
    int heads = 4;
    int ffn_mult = 4;

    // score
    std::string score = "triplere_prime";  // triplere_prime | triplere_v2
    double u = 0.1;
    std::string norm = "l1";  // l1 | l2
    double gamma = 6.0;
    double alpha = 1.0;

    // trainer
    std::int64_t batch_size = 512;
    std::int64_t neg_size = 64;
    std::int64_t max_steps = 500000;
    double lr = 5e-4;
    double lr_decay_factor = 0.1;
    double dropout = 0.05;
    double weight_decay = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::int64_t checkpoint_interval = 10000;
    std::int64_t valid_interval = 10000;

    // vocabulary build
    std::int64_t num_anchors = -1;  // -1: ceil(0.4% of num_entities)
    std::int32_t bfs_cap = 10;

    EncoderConfig encoder_config() const;
    ScoreConfig score_config() const;
    TrainConfig train_config() const;

    /// Canonical "key=value" lines (sorted), the provenance echo.
    std::string echo() const;

    /// Applies one key=value pair; unknown keys or bad values error.
    void set(const std::string& key, const std::string& value);

    /// Flat key=value file; '#' comments and blank lines allowed.
    void apply_file(const std::string& path);

    static RunConfig from_echo(const std::string& echo_text);
};

}  // namespace stargraph
