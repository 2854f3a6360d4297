#include <cmath>
#include <functional>

#include "doctest.h"
#include "fixtures.hpp"
#include "stargraph/evaluator.hpp"

using namespace stargraph;
using namespace sgtest;

namespace {

// Scorer backed by an arbitrary function of the full triple.
class FnScorer final : public TripleScorer {
  public:
    FnScorer(std::int64_t v, std::function<float(const Triple&)> fn) : v_(v), fn_(std::move(fn)) {}
    std::int64_t num_entities() const override { return v_; }
    void score_triples(const Triple* triples, std::int64_t n, float* out) const override {
        for (std::int64_t i = 0; i < n; ++i) out[i] = fn_(triples[i]);
    }

  private:
    std::int64_t v_;
    std::function<float(const Triple&)> fn_;
};

// Exhaustive oracle: scores every entity, filters, and ranks by sorting.
std::int64_t oracle_rank(const Triple& triple, Side side, const TripleScorer& scorer, const KnownTriples& known) {
    const auto v = scorer.num_entities();
    float true_score;
    scorer.score_triples(&triple, 1, &true_score);
    std::vector<float> scores;
    for (EntityId c = 0; c < v; ++c) {
        const auto true_entity = side == Side::Head ? triple.head : triple.tail;
        if (c == true_entity) continue;
        const Triple cand = side == Side::Head ? Triple{c, triple.rel, triple.tail} : Triple{triple.head, triple.rel, c};
        if (known.contains(cand.head, cand.rel, cand.tail)) continue;
        float s;
        scorer.score_triples(&cand, 1, &s);
        scores.push_back(s);
    }
    std::sort(scores.begin(), scores.end(), std::greater<float>());
    // Pessimistic: position after every candidate with score >= true.
    std::int64_t rank = 1;
    for (const auto s : scores) rank += s >= true_score;
    return rank;
}

Graph single_triple_graph(std::int64_t v) {
    Graph g = make_graph(v, 1, {{0, 0, 1}}, {}, {{0, 0, 1}});
    return g;
}

}  // namespace

TEST_CASE("rank 1 when the true entity beats every candidate") {
    const auto g = single_triple_graph(5);
    const KnownTriples known(g);
    FnScorer scorer(5, [](const Triple& t) { return t.tail == 1 && t.head == 0 ? 10.0f : -1.0f; });
    CHECK(rank_filtered(g.test[0], Side::Tail, nullptr, scorer, known) == 1);
    CHECK(rank_filtered(g.test[0], Side::Head, nullptr, scorer, known) == 1);
}

TEST_CASE("tie convention: tied candidates count as higher") {
    // Candidates for the tail side: 3 entities besides the true one; scores
    // true=0.5, negs = {0.9, 0.5, 0.1} -> rank 1 + 1 + 1 = 3.
    const auto g = single_triple_graph(4);
    const KnownTriples known(g);
    FnScorer scorer(4, [](const Triple& t) {
        if (t.tail == 1) return 0.5f;  // the true tail
        if (t.tail == 0) return 0.9f;
        if (t.tail == 2) return 0.5f;
        return 0.1f;
    });
    CHECK(rank_filtered(g.test[0], Side::Tail, nullptr, scorer, known) == 3);
}

TEST_CASE("a constant-score model ranks E+1 against E candidates") {
    const auto g = single_triple_graph(10);
    const KnownTriples known(g);
    FnScorer flat(10, [](const Triple&) { return 0.25f; });
    CHECK(rank_filtered(g.test[0], Side::Tail, nullptr, flat, known) == 10);  // 9 candidates
    CHECK(rank_filtered(g.test[0], Side::Head, nullptr, flat, known) == 10);
}

TEST_CASE("filtering removes known-true candidates but never the true entity") {
    // (0,0,1) and (0,0,2) are both known; ranking (0,0,1) on the tail side
    // must filter candidate 2 but keep the true tail 1.
    Graph g = make_graph(5, 1, {{0, 0, 2}}, {}, {{0, 0, 1}});
    const KnownTriples known(g);
    FnScorer scorer(5, [](const Triple& t) { return t.tail == 2 ? 5.0f : 1.0f; });  // 2 would outrank
    // Candidates after filtering: {0, 3, 4}, all tied with the true -> rank 4.
    CHECK(rank_filtered(g.test[0], Side::Tail, nullptr, scorer, known) == 4);
}

TEST_CASE("rank_filtered equals the exhaustive oracle including tie cases") {
    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto g = random_graph(120, 300, 4, seed);
        g.valid.assign(g.train.begin(), g.train.begin() + 25);
        g.test.assign(g.train.begin() + 25, g.train.begin() + 60);
        g.finalize();
        const KnownTriples known(g);
        Rng rng(seed * 31);
        // Quantized pseudo-random scores force plenty of ties.
        FnScorer scorer(g.num_entities, [seed](const Triple& t) {
            const auto mix = (static_cast<std::uint64_t>(t.head) * 2654435761u) ^
                             (static_cast<std::uint64_t>(t.tail) * 40503u) ^
                             (static_cast<std::uint64_t>(t.rel) * 97u) ^ seed;
            return static_cast<float>(mix % 7) / 7.0f;
        });
        for (const auto& t : g.test)
            for (const auto side : {Side::Head, Side::Tail}) {
                CHECK(rank_filtered(t, side, nullptr, scorer, known, /*chunk=*/17) ==
                      oracle_rank(t, side, scorer, known));
            }
    }
}

TEST_CASE("evaluate: perfect memorization gives MRR 1.0 and errors on empty splits") {
    auto g = random_graph(40, 120, 3, 9);
    g.test.assign(g.train.begin(), g.train.begin() + 30);
    g.valid.clear();
    g.finalize();
    const KnownTriples known(g);
    FnScorer perfect(g.num_entities, [&known](const Triple& t) {
        return known.contains(t.head, t.rel, t.tail) ? 100.0f : -1.0f;
    });
    EvalConfig cfg;
    const auto report = evaluate(g, g.test, perfect, cfg);
    CHECK(report.mrr == doctest::Approx(1.0));
    CHECK(report.hits1 == doctest::Approx(1.0));
    CHECK(report.queries == 60);
    CHECK_THROWS_AS(evaluate(g, g.valid, perfect, cfg), std::runtime_error);
}

TEST_CASE("MRR is invariant under strictly increasing score transformations") {
    auto g = random_graph(60, 200, 3, 5);
    g.test.assign(g.train.begin(), g.train.begin() + 20);
    g.finalize();
    auto raw = [](const Triple& t) {
        const auto mix = (static_cast<std::uint64_t>(t.head) * 1099511628211ull) ^
                         (static_cast<std::uint64_t>(t.tail) * 2654435761u) ^ static_cast<std::uint64_t>(t.rel);
        return static_cast<float>(static_cast<double>(mix % 10000) / 10000.0 - 0.5);
    };
    FnScorer base(g.num_entities, raw);
    FnScorer warped(g.num_entities, [&raw](const Triple& t) { return std::exp(3.0f * raw(t)) + 2.0f; });
    EvalConfig cfg;
    const auto r1 = evaluate(g, g.test, base, cfg);
    const auto r2 = evaluate(g, g.test, warped, cfg);
    CHECK(r1.mrr == doctest::Approx(r2.mrr).epsilon(1e-12));
    CHECK(r1.hits10 == doctest::Approx(r2.hits10).epsilon(1e-12));
}

TEST_CASE("hits@k is non-decreasing in k and per-relation metrics aggregate") {
    auto g = random_graph(50, 150, 4, 21);
    g.test.assign(g.train.begin(), g.train.begin() + 30);
    g.finalize();
    FnScorer scorer(g.num_entities, [](const Triple& t) { return static_cast<float>((t.head * 7 + t.tail * 3 + t.rel) % 11); });
    EvalConfig cfg;
    const auto r = evaluate(g, g.test, scorer, cfg);
    CHECK(r.hits1 <= r.hits3);
    CHECK(r.hits3 <= r.hits10);
    CHECK(r.mrr > 0.0);
    CHECK(r.mrr <= 1.0);
    std::int64_t rel_queries = 0;
    for (const auto& [rel, m] : r.per_relation) rel_queries += m.queries;
    CHECK(rel_queries == r.queries);
}

TEST_CASE("sampled protocol is deterministic and equals full when the pool is small") {
    auto g = random_graph(80, 240, 3, 33);
    g.test.assign(g.train.begin(), g.train.begin() + 25);
    g.finalize();
    FnScorer scorer(g.num_entities, [](const Triple& t) {
        const auto mix = (static_cast<std::uint64_t>(t.head) * 31u) ^ (static_cast<std::uint64_t>(t.tail) * 17u) ^
                         static_cast<std::uint64_t>(t.rel);
        return static_cast<float>(mix % 1009);
    });
    EvalConfig sampled;
    sampled.protocol = Protocol::Sampled;
    sampled.seed = 4;
    const auto r1 = evaluate(g, g.test, scorer, sampled);
    const auto r2 = evaluate(g, g.test, scorer, sampled);
    CHECK(r1.mrr == doctest::Approx(r2.mrr).epsilon(1e-15));

    // With 80 entities every eligible candidate fits under the 1000 cap, so
    // the sampled protocol degenerates to the full one.
    EvalConfig full;
    const auto rf = evaluate(g, g.test, scorer, full);
    CHECK(r1.mrr == doctest::Approx(rf.mrr).epsilon(1e-12));
    CHECK(r1.hits10 == doctest::Approx(rf.hits10).epsilon(1e-12));
}

TEST_CASE("evaluation is identical across thread counts") {
    auto g = random_graph(70, 210, 3, 44);
    g.test.assign(g.train.begin(), g.train.begin() + 20);
    g.finalize();
    FnScorer scorer(g.num_entities, [](const Triple& t) { return static_cast<float>((t.head * 13 + t.tail) % 23); });
    EvalConfig one, four;
    four.threads = 4;
    CHECK(evaluate(g, g.test, scorer, one).mrr == doctest::Approx(evaluate(g, g.test, scorer, four).mrr).epsilon(1e-15));
}
