#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stargraph/model.hpp"
#include "stargraph/objective.hpp"

namespace stargraph {

struct TrainConfig {
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
    std::uint64_t seed = 1;
    std::int64_t checkpoint_interval = 10000;
    std::int64_t valid_interval = 10000;
    // Graceful stop after this step (checkpoint written, schedule still keyed
    // to max_steps); -1 runs to max_steps. Resume picks up where it left off.
    std::int64_t halt_after = -1;
};

/// Step decay: lr for the first half of training, lr * decay_factor after.
double lr_at(std::int64_t step, const TrainConfig& cfg);

/// Head-or-tail corruption, chosen uniformly per positive; replacement
/// entities uniform over [0, num_entities). No filtering against true
/// triples during training.
struct NegativeBatch {
    std::vector<std::uint8_t> corrupt_head;  // [B]
    std::vector<EntityId> entities;          // [B * n]
};
NegativeBatch sample_negatives(const std::vector<Triple>& positives, std::int64_t n, std::int64_t num_entities,
                               Rng& rng);

/// Decoupled-weight-decay Adam with bias correction. Moments mirror the
/// parameter list passed at construction (order matters for serialization).
class AdamW {
  public:
    AdamW(std::vector<Parameter*> params, const TrainConfig& cfg);

    /// One update from the accumulated grads. Non-finite grads abort the
    /// step with an error before any parameter is touched.
    void step(double lr);

    std::int64_t step_count() const { return t_; }
    const std::vector<Parameter*>& params() const { return params_; }

    // Serialization access (checkpoint format).
    std::vector<Tensor>& moments1() { return m_; }
    std::vector<Tensor>& moments2() { return v_; }
    void set_step_count(std::int64_t t) { t_ = t; }

  private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
};

struct TrainResult {
    std::int64_t steps = 0;
    double final_loss = 0;
    double best_valid_mrr = -1;
    std::int64_t best_valid_step = -1;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string metrics_csv;
    std::vector<double> loss_history;  // per executed step (resume: from start_step on)
};

/// Full training loop: negative sampling, encoding of the batch's unique
/// entities, self-adversarial loss, AdamW, periodic valid evaluation and
/// checkpointing. Deterministic given (seed); resumable from a checkpoint.
TrainResult train(const Graph& graph, const Vocabulary& vocab, Model& model, const ScoreConfig& score_cfg,
                  const TrainConfig& cfg, const std::string& out_dir, const std::string& config_echo,
                  const std::string& resume_from = "");

}  // namespace stargraph
