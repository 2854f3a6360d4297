#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "stargraph/checkpoint.hpp"
#include "stargraph/toy.hpp"
#include "stargraph/trainer.hpp"

using namespace stargraph;
using namespace sgtest;

namespace {

TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.neg_size = 4;
    cfg.max_steps = 40;
    cfg.lr = 1e-3;
    cfg.dropout = 0.05;
    cfg.seed = 3;
    cfg.checkpoint_interval = 10;
    cfg.valid_interval = 20;
    return cfg;
}

EncoderConfig tiny_encoder_cfg() {
    EncoderConfig cfg;
    cfg.d_a = 16;
    cfg.d_n = 8;
    cfg.k_anchors = 3;
    cfg.m_neighbors = 2;
    cfg.heads = 2;
    cfg.dropout = 0.05;
    return cfg;
}

struct TrainFixture {
    Graph graph;
    Vocabulary vocab;
    EncoderConfig enc_cfg;
    ScoreConfig score_cfg;

    TrainFixture() {
        graph = random_graph(50, 400, 4, 99);
        graph.valid = {graph.train.begin(), graph.train.begin() + 20};
        graph.test = graph.valid;
        graph.finalize();
        const auto anchors = select_anchors(graph, 8);
        enc_cfg = tiny_encoder_cfg();
        vocab = build_vocabulary(graph, anchors, enc_cfg.k_anchors, enc_cfg.m_neighbors);
    }

    Model model(std::uint64_t seed) const {
        Rng rng(seed);
        return Model::init(enc_cfg, graph.num_entities, graph.num_relations, vocab.num_anchors(), score_cfg.gamma, rng);
    }
};

}  // namespace

TEST_CASE("lr schedule: paper values and the plateau") {
    TrainConfig cfg;
    cfg.lr = 5e-4;
    cfg.max_steps = 500000;
    CHECK(lr_at(0, cfg) == doctest::Approx(5e-4));
    CHECK(lr_at(249999, cfg) == doctest::Approx(5e-4));
    CHECK(lr_at(250000, cfg) == doctest::Approx(5e-5));
    CHECK(lr_at(500000, cfg) == doctest::Approx(5e-5));
    CHECK_THROWS_AS(lr_at(-1, cfg), std::runtime_error);
    CHECK_THROWS_AS(lr_at(500001, cfg), std::runtime_error);
}

TEST_CASE("adamw: zero grads leave parameters unchanged without weight decay") {
    Parameter p("p", [] {
        Tensor t({3});
        t.data = {1.0f, -2.0f, 0.5f};
        return t;
    }());
    TrainConfig cfg;
    AdamW opt({&p}, cfg);
    const auto before = p.value.data;
    opt.step(0.1);
    CHECK(p.value.data == before);
}

TEST_CASE("adamw first step with unit gradient moves by exactly -lr") {
    Parameter p("p", [] {
        Tensor t({1});
        t.data = {0.0f};
        return t;
    }());
    TrainConfig cfg;  // beta1=0.9, beta2=0.999, eps=1e-8, wd=0
    AdamW opt({&p}, cfg);
    p.grad.data[0] = 1.0f;
    opt.step(0.1);
    CHECK(p.value.data[0] == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("adamw converges on a convex quadratic in 100 steps") {
    Parameter p("p", [] {
        Tensor t({2});
        t.data = {1.0f, -2.0f};
        return t;
    }());
    const std::vector<float> target{0.3f, 0.5f};
    TrainConfig cfg;
    AdamW opt({&p}, cfg);
    for (int i = 0; i < 100; ++i) {
        for (int c = 0; c < 2; ++c)
            p.grad.data[static_cast<std::size_t>(c)] = p.value.data[static_cast<std::size_t>(c)] - target[static_cast<std::size_t>(c)];
        opt.step(0.1);
    }
    double dist = 0;
    for (int c = 0; c < 2; ++c) {
        const double d = p.value.data[static_cast<std::size_t>(c)] - target[static_cast<std::size_t>(c)];
        dist += d * d;
    }
    CHECK(std::sqrt(dist) < 1e-2);
}

TEST_CASE("adamw aborts on non-finite gradients without touching parameters") {
    Parameter p("p", [] {
        Tensor t({2});
        t.data = {1.0f, 2.0f};
        return t;
    }());
    TrainConfig cfg;
    AdamW opt({&p}, cfg);
    p.grad.data[0] = std::numeric_limits<float>::quiet_NaN();
    const auto before = p.value.data;
    CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("non-finite gradient"), std::runtime_error);
    CHECK(p.value.data == before);
}

TEST_CASE("one optimizer step only changes parameters with nonzero grads") {
    Parameter a("a", [] {
        Tensor t({2});
        t.data = {1.0f, 2.0f};
        return t;
    }());
    Parameter b("b", [] {
        Tensor t({2});
        t.data = {3.0f, 4.0f};
        return t;
    }());
    TrainConfig cfg;
    AdamW opt({&a, &b}, cfg);
    a.grad.data = {0.5f, -0.5f};
    const auto b_before = b.value.data;
    const auto a_before = a.value.data;
    opt.step(0.01);
    CHECK(b.value.data == b_before);
    CHECK(a.value.data != a_before);
}

TEST_CASE("sample_negatives: shape, validity, degenerate case") {
    Rng rng(5);
    std::vector<Triple> pos(12, Triple{0, 0, 1});
    const auto negs = sample_negatives(pos, 6, 30, rng);
    CHECK(negs.entities.size() == 72);
    CHECK(negs.corrupt_head.size() == 12);
    for (const auto e : negs.entities) {
        CHECK(e >= 0);
        CHECK(e < 30);
    }
    const auto degenerate = sample_negatives(pos, 3, 1, rng);
    for (const auto e : degenerate.entities) CHECK(e == 0);
    CHECK_THROWS_AS(sample_negatives(pos, 0, 30, rng), std::runtime_error);
}

TEST_CASE("negative entity draws pass a chi-squared uniformity test") {
    // 10^6 draws over 100 entities; chi2 critical value at p=0.01 with 99
    // degrees of freedom is 134.6416.
    Rng rng(12345);
    std::vector<Triple> pos(1000, Triple{0, 0, 1});
    std::vector<std::int64_t> counts(100, 0);
    std::int64_t total = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const auto negs = sample_negatives(pos, 10, 100, rng);
        for (const auto e : negs.entities) {
            counts[static_cast<std::size_t>(e)] += 1;
            ++total;
        }
    }
    CHECK(total == 1000000);
    const double expect = static_cast<double>(total) / 100.0;
    double chi2 = 0;
    for (const auto c : counts) {
        const double d = static_cast<double>(c) - expect;
        chi2 += d * d / expect;
    }
    CHECK(chi2 < 134.6416);
    // Corruption side is a fair coin at this sample size.
    std::int64_t heads = 0;
    Rng rng2(777);
    for (int rep = 0; rep < 100; ++rep) {
        const auto negs = sample_negatives(pos, 1, 100, rng2);
        for (const auto side : negs.corrupt_head) heads += side;
    }
    CHECK(std::fabs(static_cast<double>(heads) / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("toy-scale training run: smoothed loss is non-increasing over quartiles") {
    TrainFixture fx;  // 50 entities, 4 relations, 400 train triples
    auto model = fx.model(1);
    auto cfg = tiny_train_cfg();
    cfg.max_steps = 2000;
    cfg.batch_size = 16;
    cfg.valid_interval = 1000;
    const auto dir = (std::filesystem::temp_directory_path() / "sg_train_smoke").string();
    const auto res = train(fx.graph, fx.vocab, model, fx.score_cfg, cfg, dir, "seed=3\n");
    CHECK(res.steps == 2000);
    CHECK(res.loss_history.size() == 2000);
    CHECK(std::filesystem::exists(res.last_checkpoint));
    CHECK(std::filesystem::exists(res.metrics_csv));
    CHECK(res.best_valid_mrr > 0);

    // Window-100 moving average, then quartile means of the smoothed series.
    std::vector<double> smooth;
    for (std::size_t i = 100; i <= res.loss_history.size(); ++i) {
        double s = 0;
        for (std::size_t j = i - 100; j < i; ++j) s += res.loss_history[j];
        smooth.push_back(s / 100.0);
    }
    const auto q = smooth.size() / 4;
    double prev = std::numeric_limits<double>::infinity();
    for (int quart = 0; quart < 4; ++quart) {
        double s = 0;
        for (std::size_t i = static_cast<std::size_t>(quart) * q; i < static_cast<std::size_t>(quart + 1) * q; ++i)
            s += smooth[i];
        const double m = s / static_cast<double>(q);
        CHECK(m <= prev + 1e-9);
        prev = m;
    }
}

TEST_CASE("training is deterministic and resumable from a checkpoint") {
    TrainFixture fx;
    const auto cfg_base = tiny_train_cfg();

    // Uninterrupted run to 40 steps.
    auto m1 = fx.model(7);
    auto cfg1 = cfg_base;
    const auto dir1 = (std::filesystem::temp_directory_path() / "sg_res_a").string();
    const auto run1 = train(fx.graph, fx.vocab, m1, fx.score_cfg, cfg1, dir1, "x=1\n");

    // Same seed, same model init: bitwise identical history.
    auto m2 = fx.model(7);
    const auto dir2 = (std::filesystem::temp_directory_path() / "sg_res_b").string();
    const auto run2 = train(fx.graph, fx.vocab, m2, fx.score_cfg, cfg1, dir2, "x=1\n");
    REQUIRE(run1.loss_history.size() == run2.loss_history.size());
    for (std::size_t i = 0; i < run1.loss_history.size(); ++i) CHECK(run1.loss_history[i] == run2.loss_history[i]);

    // Interrupted at 30 (same schedule), resumed to 40: identical tail.
    auto m3 = fx.model(7);
    auto cfg3 = cfg_base;
    cfg3.halt_after = 30;
    const auto dir3 = (std::filesystem::temp_directory_path() / "sg_res_c").string();
    const auto run3 = train(fx.graph, fx.vocab, m3, fx.score_cfg, cfg3, dir3, "x=1\n");
    for (std::size_t i = 0; i < 30; ++i) CHECK(run3.loss_history[i] == run1.loss_history[i]);

    auto m4 = fx.model(7);  // arbitrary init, overwritten by the checkpoint
    auto cfg4 = cfg_base;
    const auto run4 = train(fx.graph, fx.vocab, m4, fx.score_cfg, cfg4, dir3, "x=1\n", run3.last_checkpoint);
    REQUIRE(run4.loss_history.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(run4.loss_history[i] == run1.loss_history[30 + i]);
}

TEST_CASE("checkpoint round-trips model, optimizer, and metadata") {
    TrainFixture fx;
    auto model = fx.model(5);
    TrainConfig tc = tiny_train_cfg();
    AdamW opt(model.parameters(), tc);
    // Dirty the moments so the round trip is nontrivial.
    model.anchor_table.grad.fill(0.25f);
    opt.step(1e-3);

    CheckpointMeta meta;
    meta.step = 123;
    meta.best_valid_mrr = 0.75;
    meta.best_valid_step = 100;
    meta.rng_state = rng_state_string(Rng(9));
    meta.config_echo = "d_a=16\n";
    const auto path = (std::filesystem::temp_directory_path() / "sg_ckpt.bin").string();
    save_checkpoint(path, model, &opt, meta);

    auto model2 = fx.model(6);  // different init
    AdamW opt2(model2.parameters(), tc);
    const auto loaded = load_checkpoint(path, model2, &opt2);
    CHECK(loaded.step == 123);
    CHECK(loaded.best_valid_mrr == doctest::Approx(0.75));
    CHECK(loaded.config_echo == "d_a=16\n");
    CHECK(loaded.rng_state == meta.rng_state);
    CHECK(model2.anchor_table.value.data == model.anchor_table.value.data);
    CHECK(model2.ffn_w1.value.data == model.ffn_w1.value.data);
    CHECK(opt2.step_count() == 1);
    CHECK(opt2.moments1()[0].data == opt.moments1()[0].data);

    // A model built from a different architecture refuses the file.
    auto cfg_mlp = fx.enc_cfg;
    cfg_mlp.kind = EncoderKind::Mlp;
    Rng r2(4);
    auto model3 = Model::init(cfg_mlp, fx.graph.num_entities, fx.graph.num_relations, fx.vocab.num_anchors(), 6.0, r2);
    CHECK_THROWS_AS(load_checkpoint(path, model3, nullptr), std::runtime_error);
}
