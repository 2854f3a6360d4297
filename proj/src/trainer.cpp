#include "stargraph/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <filesystem>

#include "stargraph/checkpoint.hpp"
#include "stargraph/evaluator.hpp"

namespace stargraph {

double lr_at(std::int64_t step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.max_steps) fail("lr_at: step out of range");
    return step < cfg.max_steps / 2 ? cfg.lr : cfg.lr * cfg.lr_decay_factor;
}

NegativeBatch sample_negatives(const std::vector<Triple>& positives, std::int64_t n, std::int64_t num_entities,
                               Rng& rng) {
    if (n < 1) fail("sample_negatives: n must be >= 1");
    NegativeBatch out;
    const auto b = static_cast<std::int64_t>(positives.size());
    out.corrupt_head.resize(static_cast<std::size_t>(b));
    out.entities.resize(static_cast<std::size_t>(b * n));
    for (std::int64_t i = 0; i < b; ++i) {
        out.corrupt_head[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(uniform_below(rng, 2));
        for (std::int64_t j = 0; j < n; ++j)
            out.entities[static_cast<std::size_t>(i * n + j)] =
                static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(num_entities)));
    }
    return out;
}

AdamW::AdamW(std::vector<Parameter*> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto* p : params_) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
    }
}

void AdamW::step(double lr) {
    for (const auto* p : params_)
        if (!p->grad.all_finite()) fail("adamw: non-finite gradient in parameter '" + p->name + "', step aborted");

    t_ += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        const auto n = p.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const double g = p.grad.data[idx];
            const double mi = beta1_ * m.data[idx] + (1.0 - beta1_) * g;
            const double vi = beta2_ * v.data[idx] + (1.0 - beta2_) * g * g;
            m.data[idx] = static_cast<float>(mi);
            v.data[idx] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double upd = mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.value.data[idx];
            p.value.data[idx] = static_cast<float>(p.value.data[idx] - lr * upd);
        }
    }
}

namespace {

// Unique sorted entity list plus an index lookup into it.
struct UniqueIndex {
    std::vector<EntityId> entities;

    std::int64_t index_of(EntityId e) const {
        const auto it = std::lower_bound(entities.begin(), entities.end(), e);
        return static_cast<std::int64_t>(it - entities.begin());
    }
};

UniqueIndex collect_unique(const std::vector<Triple>& positives, const NegativeBatch& negs) {
    UniqueIndex out;
    out.entities.reserve(positives.size() * 2 + negs.entities.size());
    for (const auto& t : positives) {
        out.entities.push_back(t.head);
        out.entities.push_back(t.tail);
    }
    out.entities.insert(out.entities.end(), negs.entities.begin(), negs.entities.end());
    std::sort(out.entities.begin(), out.entities.end());
    out.entities.erase(std::unique(out.entities.begin(), out.entities.end()), out.entities.end());
    return out;
}

}  // namespace

TrainResult train(const Graph& graph, const Vocabulary& vocab, Model& model, const ScoreConfig& score_cfg,
                  const TrainConfig& cfg, const std::string& out_dir, const std::string& config_echo,
                  const std::string& resume_from) {
    if (graph.train.empty()) fail("train: empty train split");
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = out_dir + "/metrics.csv";
    const std::string last_path = out_dir + "/last.ckpt";
    const std::string best_path = out_dir + "/best.ckpt";

    auto params = model.parameters();
    AdamW optimizer(params, cfg);
    Rng rng(cfg.seed);
    std::int64_t start_step = 0;
    double best_valid = -1;
    std::int64_t best_valid_step = -1;

    if (!resume_from.empty()) {
        const auto meta = load_checkpoint(resume_from, model, &optimizer);
        start_step = meta.step;
        best_valid = meta.best_valid_mrr;
        best_valid_step = meta.best_valid_step;
        rng_set_state(rng, meta.rng_state);
        log_info("resumed from %s at step %" PRId64, resume_from.c_str(), start_step);
    }

    std::ofstream csv(csv_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!csv) fail("cannot open metrics log: " + csv_path);
    if (start_step == 0) {
        csv << "# config: " << [&] {
            std::string one_line = config_echo;
            std::replace(one_line.begin(), one_line.end(), '\n', ';');
            return one_line;
        }() << "\n";
        csv << "step,loss,lr,valid_mrr\n";
    }

    const auto n_train = static_cast<std::uint64_t>(graph.train.size());
    double last_loss = 0;
    std::vector<double> loss_history;
    loss_history.reserve(static_cast<std::size_t>(cfg.max_steps - start_step));

    auto run_valid = [&]() -> double {
        if (graph.valid.empty()) return -1;
        ModelScorer scorer(model, vocab, score_cfg);
        EvalConfig ec;
        ec.protocol = Protocol::Full;
        const auto report = evaluate(graph, graph.valid, scorer, ec);
        return report.mrr;
    };

    for (std::int64_t step = start_step; step < cfg.max_steps; ++step) {
        // Batch construction: positives, corruption plan, unique entity set.
        std::vector<Triple> positives(static_cast<std::size_t>(cfg.batch_size));
        for (auto& t : positives) t = graph.train[uniform_below(rng, n_train)];
        const auto negs = sample_negatives(positives, cfg.neg_size, graph.num_entities, rng);
        const auto uniq = collect_unique(positives, negs);

        BatchIndices ix;
        ix.neg_per_pos = cfg.neg_size;
        ix.pos_head.reserve(positives.size());
        for (const auto& t : positives) {
            ix.pos_head.push_back(uniq.index_of(t.head));
            ix.pos_tail.push_back(uniq.index_of(t.tail));
            ix.rel.push_back(t.rel);
        }
        ix.neg_head.resize(positives.size() * static_cast<std::size_t>(cfg.neg_size));
        ix.neg_tail.resize(ix.neg_head.size());
        for (std::size_t i = 0; i < positives.size(); ++i) {
            const bool corrupt_head = negs.corrupt_head[i] != 0;
            for (std::int64_t j = 0; j < cfg.neg_size; ++j) {
                const auto at = i * static_cast<std::size_t>(cfg.neg_size) + static_cast<std::size_t>(j);
                const auto neg_ix = uniq.index_of(negs.entities[at]);
                ix.neg_head[at] = corrupt_head ? neg_ix : ix.pos_head[i];
                ix.neg_tail[at] = corrupt_head ? ix.pos_tail[i] : neg_ix;
            }
        }

        TapeT<float> tape;
        auto batch = assemble(vocab, uniq.entities, model.cfg);
        auto enc = encode(tape, model, batch, /*training=*/true, &rng);
        auto loss = batch_objective(tape, enc, model.relation_table, ix, score_cfg);
        last_loss = static_cast<double>(loss->value.data[0]);
        if (!std::isfinite(last_loss)) {
            log_warn("non-finite loss at step %" PRId64 "; dumping parameter stats", step);
            for (const auto* p : params) {
                double mx = 0;
                for (const auto x : p->value.data) mx = std::max(mx, std::fabs(static_cast<double>(x)));
                std::fprintf(stderr, "  param %-16s numel=%" PRId64 " max|value|=%g\n", p->name.c_str(), p->numel(), mx);
            }
            fail("train: non-finite loss at step " + std::to_string(step));
        }

        for (auto* p : params) p->zero_grad();
        tape.backward(loss);
        optimizer.step(lr_at(step, cfg));
        loss_history.push_back(last_loss);

        const auto done = step + 1;
        if (done % 100 == 0 || done == cfg.max_steps) {
            csv << done << "," << last_loss << "," << lr_at(step, cfg) << ",\n";
            log_debug("step %" PRId64 " loss %.5f", done, last_loss);
        }
        if (cfg.valid_interval > 0 && (done % cfg.valid_interval == 0 || done == cfg.max_steps)) {
            const double mrr = run_valid();
            if (mrr >= 0) {
                csv << done << ",,," << mrr << "\n";
                log_info("step %" PRId64 " valid mrr %.4f", done, mrr);
                if (mrr > best_valid) {
                    best_valid = mrr;
                    best_valid_step = done;
                    CheckpointMeta meta{done, best_valid, best_valid_step, rng_state_string(rng), config_echo};
                    save_checkpoint(best_path, model, &optimizer, meta);
                }
            }
        }
        const bool halting = cfg.halt_after >= 0 && done >= cfg.halt_after;
        if ((cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0) || done == cfg.max_steps || halting) {
            CheckpointMeta meta{done, best_valid, best_valid_step, rng_state_string(rng), config_echo};
            save_checkpoint(last_path, model, &optimizer, meta);
        }
        if (halting) {
            log_info("halting after step %" PRId64 " (halt_after)", done);
            break;
        }
    }

    TrainResult res;
    res.steps = cfg.max_steps;
    res.final_loss = last_loss;
    res.best_valid_mrr = best_valid;
    res.best_valid_step = best_valid_step;
    res.best_checkpoint = best_valid >= 0 ? best_path : "";
    res.last_checkpoint = last_path;
    res.metrics_csv = csv_path;
    res.loss_history = std::move(loss_history);
    return res;
}

}  // namespace stargraph
