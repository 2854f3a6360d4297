#include "stargraph/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "stargraph/util.hpp"

namespace stargraph {

ModelScorer::ModelScorer(Model& model, const Vocabulary& vocab, const ScoreConfig& score_cfg, std::int64_t chunk)
    : num_entities_(model.num_entities), d_(model.cfg.d_a), score_cfg_(score_cfg) {
    if (vocab.num_entities != model.num_entities) fail("ModelScorer: vocabulary/model entity count mismatch");
    enc_ = Tensor({num_entities_, d_});
    for (std::int64_t lo = 0; lo < num_entities_; lo += chunk) {
        const auto hi = std::min(num_entities_, lo + chunk);
        std::vector<EntityId> ids;
        ids.reserve(static_cast<std::size_t>(hi - lo));
        for (auto e = lo; e < hi; ++e) ids.push_back(static_cast<EntityId>(e));
        TapeT<float> tape;
        const auto batch = assemble(vocab, ids, model.cfg);
        const auto out = encode(tape, model, batch, /*training=*/false, nullptr);
        std::copy(out->value.data.begin(), out->value.data.end(), enc_.data.begin() + static_cast<std::ptrdiff_t>(lo * d_));
    }
    rel_ = model.relation_table.value;
}

void ModelScorer::score_triples(const Triple* triples, std::int64_t n, float* out) const {
    std::vector<float> z(static_cast<std::size_t>(d_));
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& t = triples[i];
        const float* h = enc_.ptr() + static_cast<std::int64_t>(t.head) * d_;
        const float* tl = enc_.ptr() + static_cast<std::int64_t>(t.tail) * d_;
        const float* rel = rel_.ptr() + static_cast<std::int64_t>(t.rel) * 3 * d_;
        detail::score_inner(score_cfg_.variant, score_cfg_.u, h, tl, rel, rel + d_, rel + 2 * d_, d_, z.data());
        out[i] = -detail::norm_of(score_cfg_.norm, z.data(), d_);
    }
}

KnownTriples::KnownTriples(const Graph& graph)
    : num_entities_(static_cast<std::uint64_t>(graph.num_entities)),
      num_relations_(static_cast<std::uint64_t>(graph.num_relations)) {
    set_.reserve((graph.train.size() + graph.valid.size() + graph.test.size()) * 2);
    for (const auto* split : {&graph.train, &graph.valid, &graph.test})
        for (const auto& t : *split)
            set_.insert((static_cast<std::uint64_t>(t.head) * num_relations_ + static_cast<std::uint64_t>(t.rel)) *
                            num_entities_ +
                        static_cast<std::uint64_t>(t.tail));
}

namespace {

Triple with_candidate(const Triple& t, Side side, EntityId c) {
    return side == Side::Head ? Triple{c, t.rel, t.tail} : Triple{t.head, t.rel, c};
}

}  // namespace

std::int64_t rank_filtered(const Triple& triple, Side side, const std::vector<EntityId>* candidates,
                           const TripleScorer& scorer, const KnownTriples& known, std::int64_t chunk) {
    const auto v = scorer.num_entities();
    const EntityId true_entity = side == Side::Head ? triple.head : triple.tail;
    if (true_entity < 0 || true_entity >= v || triple.head < 0 || triple.tail < 0)
        fail("rank_filtered: invalid triple");

    float true_score;
    {
        scorer.score_triples(&triple, 1, &true_score);
    }

    std::int64_t higher = 0, tied = 0;
    std::vector<Triple> batch;
    std::vector<float> scores;
    batch.reserve(static_cast<std::size_t>(chunk));

    auto flush = [&] {
        if (batch.empty()) return;
        scores.resize(batch.size());
        scorer.score_triples(batch.data(), static_cast<std::int64_t>(batch.size()), scores.data());
        for (const auto s : scores) {
            if (s > true_score)
                ++higher;
            else if (s == true_score)
                ++tied;
        }
        batch.clear();
    };

    auto consider = [&](EntityId c) {
        if (c == true_entity) return;
        const auto cand = with_candidate(triple, side, c);
        if (candidates == nullptr) {
            // Full protocol filters here; sampled candidate lists arrive
            // pre-filtered.
            if (known.contains(cand.head, cand.rel, cand.tail)) return;
        }
        batch.push_back(cand);
        if (static_cast<std::int64_t>(batch.size()) >= chunk) flush();
    };

    if (candidates == nullptr) {
        for (EntityId c = 0; c < v; ++c) consider(c);
    } else {
        for (const auto c : *candidates) consider(c);
    }
    flush();
    return 1 + higher + tied;
}

namespace {

// Sampled-protocol negative draw: distinct, never the true entity, never a
// known triple. Falls back to every eligible candidate when fewer than the
// requested count exist.
std::vector<EntityId> draw_negatives(const Triple& triple, Side side, std::int64_t count, std::int64_t v,
                                     const KnownTriples& known, Rng& rng) {
    const EntityId true_entity = side == Side::Head ? triple.head : triple.tail;
    auto eligible = [&](EntityId c) {
        if (c == true_entity) return false;
        const auto cand = with_candidate(triple, side, c);
        return !known.contains(cand.head, cand.rel, cand.tail);
    };

    std::vector<EntityId> out;
    if (v <= 4 * count) {
        // Small candidate pools: enumerate, then partial Fisher-Yates.
        std::vector<EntityId> pool;
        pool.reserve(static_cast<std::size_t>(v));
        for (EntityId c = 0; c < v; ++c)
            if (eligible(c)) pool.push_back(c);
        const auto take = std::min<std::int64_t>(count, static_cast<std::int64_t>(pool.size()));
        for (std::int64_t i = 0; i < take; ++i) {
            const auto j = i + static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(pool.size() - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return out;
    }
    std::unordered_set<EntityId> seen;
    seen.reserve(static_cast<std::size_t>(count) * 2);
    std::int64_t attempts = 0;
    const std::int64_t max_attempts = count * 100;
    while (static_cast<std::int64_t>(out.size()) < count && attempts < max_attempts) {
        ++attempts;
        const auto c = static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(v)));
        if (!eligible(c) || !seen.insert(c).second) continue;
        out.push_back(c);
    }
    return out;
}

}  // namespace

MetricReport evaluate(const Graph& graph, const std::vector<Triple>& split, const TripleScorer& scorer,
                      const EvalConfig& cfg) {
    if (split.empty()) fail("evaluate: empty split");
    const KnownTriples known(graph);
    const auto q = static_cast<std::int64_t>(split.size()) * 2;

    // Sampled protocol draws all candidate lists up front, in split order,
    // head side then tail side, so ranking can run in any order.
    std::vector<std::vector<EntityId>> sampled;
    if (cfg.protocol == Protocol::Sampled) {
        Rng rng(cfg.seed);
        sampled.resize(static_cast<std::size_t>(q));
        for (std::size_t i = 0; i < split.size(); ++i) {
            sampled[i * 2] = draw_negatives(split[i], Side::Head, cfg.num_negatives, graph.num_entities, known, rng);
            sampled[i * 2 + 1] = draw_negatives(split[i], Side::Tail, cfg.num_negatives, graph.num_entities, known, rng);
        }
    }

    std::vector<std::int64_t> ranks(static_cast<std::size_t>(q));
    parallel_for(q, cfg.threads, [&](std::int64_t qi) {
        const auto& t = split[static_cast<std::size_t>(qi / 2)];
        const Side side = qi % 2 == 0 ? Side::Head : Side::Tail;
        const std::vector<EntityId>* cand =
            cfg.protocol == Protocol::Sampled ? &sampled[static_cast<std::size_t>(qi)] : nullptr;
        ranks[static_cast<std::size_t>(qi)] = rank_filtered(t, side, cand, scorer, known, cfg.chunk);
    });

    MetricReport report;
    report.queries = q;
    struct RelAcc {
        std::int64_t n = 0;
        double sum = 0;
    };
    std::map<RelationId, RelAcc> rel_acc;
    double mrr_sum = 0;
    std::int64_t h1 = 0, h3 = 0, h10 = 0;
    for (std::int64_t qi = 0; qi < q; ++qi) {
        const auto rank = ranks[static_cast<std::size_t>(qi)];
        const double rr = 1.0 / static_cast<double>(rank);
        mrr_sum += rr;
        h1 += rank <= 1;
        h3 += rank <= 3;
        h10 += rank <= 10;
        auto& acc = rel_acc[split[static_cast<std::size_t>(qi / 2)].rel];
        acc.n += 1;
        acc.sum += rr;
    }
    report.mrr = mrr_sum / static_cast<double>(q);
    report.hits1 = static_cast<double>(h1) / static_cast<double>(q);
    report.hits3 = static_cast<double>(h3) / static_cast<double>(q);
    report.hits10 = static_cast<double>(h10) / static_cast<double>(q);
    for (const auto& [rel, acc] : rel_acc) report.per_relation[rel] = {acc.n, acc.sum / static_cast<double>(acc.n)};
    return report;
}

std::string report_json(const MetricReport& report, const std::string& config_echo) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["mrr"] = report.mrr;
    j["hits@1"] = report.hits1;
    j["hits@3"] = report.hits3;
    j["hits@10"] = report.hits10;
    j["queries"] = report.queries;
    nlohmann::json per_rel = nlohmann::json::object();
    for (const auto& [rel, m] : report.per_relation) {
        per_rel[std::to_string(rel)] = {{"queries", m.queries}, {"mrr", m.mrr}};
    }
    j["per_relation"] = per_rel;
    j["config"] = config_echo;
    return j.dump(2);
}

}  // namespace stargraph
