#pragma once

#include <cstdint>
#include <string>

#include "stargraph/model.hpp"
#include "stargraph/trainer.hpp"

namespace stargraph {

struct CheckpointMeta {
    std::int64_t step = 0;
    double best_valid_mrr = -1;
    std::int64_t best_valid_step = -1;
    std::string rng_state;
    std::string config_echo;
};

/// Single-file checkpoint: config echo, step, parameter tensors by name,
/// optimizer moments, RNG state.
void save_checkpoint(const std::string& path, Model& model, AdamW* optimizer, const CheckpointMeta& meta);

/// Loads into an already-constructed model (names and shapes must match).
/// optimizer may be null (evaluation-only loads).
CheckpointMeta load_checkpoint(const std::string& path, Model& model, AdamW* optimizer);

/// Reads only the embedded config echo (to rebuild the model before a full
/// load).
std::string checkpoint_config_echo(const std::string& path);

}  // namespace stargraph
