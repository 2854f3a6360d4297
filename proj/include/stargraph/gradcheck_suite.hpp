#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stargraph/autograd.hpp"
#include "stargraph/model.hpp"
#include "stargraph/objective.hpp"
#include "stargraph/toy.hpp"
#include "stargraph/trainer.hpp"

namespace stargraph {

struct SuiteEntry {
    std::string op;
    double max_rel_err = 0;
    std::string worst_param;
    bool pass = true;
};

struct SuiteResult {
    std::vector<SuiteEntry> entries;
    double tolerance = 0;
    bool pass = true;
};

namespace gradcheck_detail {

using DTape = TapeT<double>;
using DRef = DTape::Ref;
using DParam = ParameterT<double>;

inline DParam random_param(const std::string& name, std::vector<std::int64_t> shape, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
    TensorT<double> t(std::move(shape));
    for (auto& v : t.data) v = uniform_real(rng, lo, hi);
    return DParam(name, std::move(t));
}

struct OpCase {
    std::string op;
    std::vector<DParam*> params;
    CheckClosure closure;
};

// Aggregates one op's report into the suite.
inline void merge(SuiteResult& suite, const std::string& op, const GradCheckReport& report) {
    for (auto& e : suite.entries) {
        if (e.op != op) continue;
        for (const auto& pe : report.entries)
            if (pe.max_rel_err > e.max_rel_err) {
                e.max_rel_err = pe.max_rel_err;
                e.worst_param = pe.param;
            }
        e.pass = e.pass && report.pass;
        suite.pass = suite.pass && report.pass;
        return;
    }
    SuiteEntry e;
    e.op = op;
    for (const auto& pe : report.entries)
        if (pe.max_rel_err >= e.max_rel_err) {
            e.max_rel_err = pe.max_rel_err;
            e.worst_param = pe.param;
        }
    e.pass = report.pass;
    suite.pass = suite.pass && report.pass;
    suite.entries.push_back(std::move(e));
}

// Fixture for the end-to-end composite: a small random KG, its vocabulary,
// a double-precision model, and one training batch.
struct CompositeFixture {
    Graph graph;
    Vocabulary vocab;
    ModelT<double> model;
    SubgraphBatch batch;
    BatchIndices ix;
    ScoreConfig score_cfg;
    std::vector<DParam*> params;

    CompositeFixture(std::uint64_t seed, EncoderKind kind, ScoreVariant variant, Norm norm) {
        Rng rng(seed);
        const std::int64_t v = 10;
        std::vector<Triple> triples;
        for (int i = 0; i < 30; ++i)
            triples.push_back({static_cast<EntityId>(uniform_below(rng, v)),
                               static_cast<RelationId>(uniform_below(rng, 3)),
                               static_cast<EntityId>(uniform_below(rng, v))});
        graph = make_graph(v, 3, triples, {}, {});
        const auto anchors = select_anchors(graph, 3);
        vocab = build_vocabulary(graph, anchors, /*k=*/3, /*m=*/2);

        EncoderConfig cfg;
        cfg.d_a = 8;
        cfg.d_n = 4;
        cfg.k_anchors = 3;
        cfg.m_neighbors = 2;
        cfg.heads = 2;
        cfg.ffn_mult = 4;
        cfg.dropout = 0.0;  // checks run with dropout off
        cfg.kind = kind;
        score_cfg.variant = variant;
        score_cfg.norm = norm;
        model = ModelT<double>::init(cfg, v, 3, anchors.size(), score_cfg.gamma, rng);

        std::vector<Triple> positives;
        for (int i = 0; i < 4; ++i) positives.push_back(graph.train[uniform_below(rng, graph.train.size())]);
        const auto negs = sample_negatives(positives, 3, v, rng);

        std::vector<EntityId> uniq;
        for (const auto& t : positives) {
            uniq.push_back(t.head);
            uniq.push_back(t.tail);
        }
        uniq.insert(uniq.end(), negs.entities.begin(), negs.entities.end());
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        auto index_of = [&](EntityId e) {
            return static_cast<std::int64_t>(std::lower_bound(uniq.begin(), uniq.end(), e) - uniq.begin());
        };
        ix.neg_per_pos = 3;
        for (std::size_t i = 0; i < positives.size(); ++i) {
            ix.pos_head.push_back(index_of(positives[i].head));
            ix.pos_tail.push_back(index_of(positives[i].tail));
            ix.rel.push_back(positives[i].rel);
            for (std::int64_t j = 0; j < 3; ++j) {
                const auto neg = index_of(negs.entities[i * 3 + static_cast<std::size_t>(j)]);
                const bool ch = negs.corrupt_head[i] != 0;
                ix.neg_head.push_back(ch ? neg : ix.pos_head[i]);
                ix.neg_tail.push_back(ch ? ix.pos_tail[i] : neg);
            }
        }
        batch = assemble(vocab, uniq, model.cfg);
        params = model.parameters();
    }

    // The adversarial weights carry no gradient by design, so the
    // finite-difference target pins them at their base-point values.
    CheckClosure closure() {
        {
            DTape tape;
            auto enc = encode(tape, model, batch, /*training=*/false, nullptr);
            batch_objective(tape, enc, model.relation_table, ix, score_cfg, nullptr, &base_weights);
        }
        return [this](DTape& tape) {
            auto enc = encode(tape, model, batch, /*training=*/false, nullptr);
            return batch_objective(tape, enc, model.relation_table, ix, score_cfg, &base_weights);
        };
    }

    std::vector<double> base_weights;
};

}  // namespace gradcheck_detail

/// Gradient-check battery: every differentiable op with random inputs over
/// several seeds, plus the full encode -> score -> loss composite on a
/// 10-entity model (attention and MLP variants). Dropout is off throughout.
inline SuiteResult run_gradcheck_suite(std::uint64_t seed, int seeds_per_op = 5, double eps = 1e-3, double tol = 1e-4) {
    using namespace gradcheck_detail;
    SuiteResult suite;
    suite.tolerance = tol;

    for (int si = 0; si < seeds_per_op; ++si) {
        const std::uint64_t s = seed * 1000003ull + static_cast<std::uint64_t>(si);
        Rng rng(s);

        {  // quadratic sanity: f(theta) = ||theta||^2
            auto theta = random_param("theta", {2, 3}, rng);
            auto c = [&](DTape& t) { return sum_squares(t, from_param(t, theta)); };
            merge(suite, "sum_squares", grad_check(c, {&theta}, eps, tol));
        }
        {  // linear
            auto x = random_param("x", {3, 5}, rng);
            auto w = random_param("w", {5, 4}, rng);
            auto b = random_param("b", {4}, rng);
            auto c = [&](DTape& t) { return sum_squares(t, linear(t, from_param(t, x), w, b)); };
            merge(suite, "linear", grad_check(c, {&x, &w, &b}, eps, tol));
        }
        {  // embed_lookup with a duplicate id and a masked slot
            auto table = random_param("table", {6, 4}, rng);
            std::vector<std::int64_t> ids{1, 0, 1, -1, 5};
            std::vector<std::uint8_t> mask{1, 1, 1, 0, 1};
            auto c = [&](DTape& t) { return sum_squares(t, embed_rows(t, table, ids, mask)); };
            merge(suite, "embed_lookup", grad_check(c, {&table}, eps, tol));
        }
        {  // layer_norm
            auto x = random_param("x", {4, 6}, rng);
            auto g = random_param("gain", {6}, rng, 0.5, 1.5);
            auto b = random_param("bias", {6}, rng);
            auto c = [&](DTape& t) { return sum_squares(t, layer_norm(t, from_param(t, x), g, b)); };
            merge(suite, "layer_norm", grad_check(c, {&x, &g, &b}, eps, tol));
        }
        {  // self-attention block ingredients: attention itself
            auto x = random_param("x", {2, 4, 8}, rng);
            auto wq = random_param("wq", {8, 8}, rng), wk = random_param("wk", {8, 8}, rng);
            auto wv = random_param("wv", {8, 8}, rng), wo = random_param("wo", {8, 8}, rng);
            auto bq = random_param("bq", {8}, rng), bk = random_param("bk", {8}, rng);
            auto bv = random_param("bv", {8}, rng), bo = random_param("bo", {8}, rng);
            std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 1, 1};
            AttentionWeightsT<double> wts{&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo};
            auto c = [&](DTape& t) {
                return sum_squares(t, multihead_self_attention(t, from_param(t, x), mask, wts, 2));
            };
            merge(suite, "self_attention",
                  grad_check(c, {&x, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}, eps, tol));
        }
        {  // mean_pool
            auto x = random_param("x", {3, 4, 5}, rng);
            std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 1, 0};
            auto c = [&](DTape& t) { return sum_squares(t, mean_pool(t, from_param(t, x), mask)); };
            merge(suite, "mean_pool", grad_check(c, {&x}, eps, tol));
        }
        {  // add_type_rows + concat + gather + slice + relu + reshape in one chain
            auto a = random_param("a", {2, 2, 4}, rng);
            auto b = random_param("b", {2, 3, 4}, rng);
            auto types = random_param("types", {3, 4}, rng);
            auto c = [&](DTape& t) {
                auto cat = concat_dim1(t, from_param(t, a), from_param(t, b));
                auto typed = add_type_rows(t, cat, types, {0, 0, 1, 1, 2});
                auto flat = reshape_copy(t, typed, {2 * 5, 4});
                auto g = gather_rows(t, flat, {0, 3, 3, 9});
                auto s = slice_cols(t, g, 1, 4);
                return sum_squares(t, relu(t, s));
            };
            merge(suite, "structural_ops", grad_check(c, {&a, &b, &types}, eps, tol));
        }
        // score functions, both variants and norms. L1 inputs are redrawn
        // until the inner vector stays away from its kinks.
        for (const auto variant : {ScoreVariant::TripleReV2, ScoreVariant::TripleRePrime}) {
            for (const auto norm : {Norm::L1, Norm::L2}) {
                const double u = 0.1;
                DParam h, tt, rh, rt, r;
                for (int attempt = 0; attempt < 64; ++attempt) {
                    h = random_param("h", {3, 6}, rng);
                    tt = random_param("t", {3, 6}, rng);
                    rh = random_param("r_head", {3, 6}, rng);
                    rt = random_param("r_tail", {3, 6}, rng);
                    r = random_param("r", {3, 6}, rng);
                    if (norm == Norm::L2) break;
                    std::vector<double> z(6);
                    double mn = 1e9;
                    for (int row = 0; row < 3; ++row) {
                        detail::score_inner(variant, u, h.value.ptr() + row * 6, tt.value.ptr() + row * 6,
                                            rh.value.ptr() + row * 6, rt.value.ptr() + row * 6, r.value.ptr() + row * 6,
                                            6, z.data());
                        for (const auto zc : z) mn = std::min(mn, std::fabs(zc));
                    }
                    if (mn > 8 * eps) break;
                }
                auto c = [&](DTape& t) {
                    auto scores = triple_score(t, from_param(t, h), from_param(t, tt), from_param(t, rh),
                                               from_param(t, rt), from_param(t, r), variant, norm, u);
                    return sum_squares(t, scores);
                };
                const std::string name = std::string(variant == ScoreVariant::TripleReV2 ? "score_v2" : "score_prime") +
                                         (norm == Norm::L1 ? "_l1" : "_l2");
                merge(suite, name, grad_check(c, {&h, &tt, &rh, &rt, &r}, eps, tol));
            }
        }
        {  // self-adversarial loss, weights pinned at the base point (stop-grad)
            auto pos = random_param("pos", {4}, rng, -8.0, 0.0);
            auto neg = random_param("neg", {4, 3}, rng, -8.0, 0.0);
            std::vector<double> base_weights;
            {
                DTape t;
                self_adversarial_loss(t, from_param(t, pos), from_param(t, neg), 6.0, 1.0, nullptr, &base_weights);
            }
            auto c = [&](DTape& t) {
                return self_adversarial_loss(t, from_param(t, pos), from_param(t, neg), 6.0, 1.0, &base_weights);
            };
            merge(suite, "self_adversarial_loss", grad_check(c, {&pos, &neg}, eps, tol));
        }
        {  // end-to-end composites on the 10-entity model
            CompositeFixture fx(s, EncoderKind::Attention, ScoreVariant::TripleRePrime, Norm::L2);
            merge(suite, "composite_attention", grad_check(fx.closure(), fx.params, eps, tol));
        }
        {
            CompositeFixture fx(s, EncoderKind::Attention, ScoreVariant::TripleReV2, Norm::L2);
            merge(suite, "composite_attention_v2", grad_check(fx.closure(), fx.params, eps, tol));
        }
        {
            CompositeFixture fx(s, EncoderKind::Mlp, ScoreVariant::TripleRePrime, Norm::L2);
            merge(suite, "composite_mlp", grad_check(fx.closure(), fx.params, eps, tol));
        }
    }
    return suite;
}

}  // namespace stargraph
