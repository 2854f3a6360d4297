#include "stargraph/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "stargraph/util.hpp"

namespace stargraph {

namespace {

// Returns `copies` independent random bijections from [lo_a, lo_a+n) onto
// [lo_b, lo_b+n), concatenated as (source, target) pairs.
std::vector<std::pair<EntityId, EntityId>> block_maps(EntityId lo_a, EntityId lo_b, std::int64_t n, int copies,
                                                      Rng& rng) {
    std::vector<std::pair<EntityId, EntityId>> out;
    out.reserve(static_cast<std::size_t>(n * copies));
    std::vector<EntityId> targets(static_cast<std::size_t>(n));
    for (int c = 0; c < copies; ++c) {
        std::iota(targets.begin(), targets.end(), lo_b);
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = uniform_below(rng, static_cast<std::uint64_t>(i + 1));
            std::swap(targets[static_cast<std::size_t>(i)], targets[j]);
        }
        for (std::int64_t i = 0; i < n; ++i)
            out.emplace_back(static_cast<EntityId>(lo_a + i), targets[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Deterministic sample of `take` elements (Fisher-Yates prefix).
template <typename T>
void sample_prefix(std::vector<T>& v, std::size_t take, Rng& rng) {
    for (std::size_t i = 0; i + 1 < v.size() && i < take; ++i) {
        const auto j = i + uniform_below(rng, v.size() - i);
        std::swap(v[i], v[j]);
    }
    if (v.size() > take) v.resize(take);
}

}  // namespace

Graph make_toy_graph(const ToyOptions& opt) {
    if (opt.num_entities < 8 || opt.num_entities % 4 != 0) fail("toy graph: num_entities must be a multiple of 4, >= 8");
    if (opt.holdout < 0 || opt.holdout >= 1) fail("toy graph: holdout must be in [0, 1)");
    Rng rng(opt.seed);
    const auto v = opt.num_entities;
    const auto gs = v / 4;  // group size; groups G0..G3 are contiguous id blocks

    // Base relations are unions of random bijections between neighboring
    // groups (r0: G0->G1, r1: G1->G2, r3: G2->G3), multi-valued via 4
    // parallel bijections each. r2 and r4 are their compositions, r5 the
    // inverse of r0. Block structure keeps single relations acyclic, so
    // translation-style scorers can fit them exactly.
    const auto m01 = block_maps(0, static_cast<EntityId>(gs), gs, 4, rng);
    const auto m12 = block_maps(static_cast<EntityId>(gs), static_cast<EntityId>(2 * gs), gs, 4, rng);
    const auto m23 = block_maps(static_cast<EntityId>(2 * gs), static_cast<EntityId>(3 * gs), gs, 4, rng);

    std::vector<Triple> all;
    for (const auto& [a, b] : m01) all.push_back({a, 0, b});
    for (const auto& [a, b] : m12) all.push_back({a, 1, b});
    for (const auto& [a, b] : m23) all.push_back({a, 3, b});
    for (const auto& [a, b] : m01) all.push_back({b, 5, a});

    auto compose = [&](const std::vector<std::pair<EntityId, EntityId>>& first,
                       const std::vector<std::pair<EntityId, EntityId>>& second, RelationId rel, std::size_t take) {
        std::vector<Triple> comp;
        for (const auto& [a, b] : first)
            for (const auto& [b2, c] : second)
                if (b2 == b) comp.push_back({a, rel, c});
        std::sort(comp.begin(), comp.end(), [](const Triple& x, const Triple& y) {
            return std::tie(x.head, x.rel, x.tail) < std::tie(y.head, y.rel, y.tail);
        });
        comp.erase(std::unique(comp.begin(), comp.end()), comp.end());
        sample_prefix(comp, take, rng);
        all.insert(all.end(), comp.begin(), comp.end());
    };
    const auto comp_take = static_cast<std::size_t>((13 * gs) / 2);  // 325 at the default size
    compose(m01, m12, 2, comp_take);
    compose(m12, m23, 4, comp_take);

    for (std::int64_t i = 0; i < opt.noise_triples; ++i) {
        const auto h = static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(v)));
        const auto t = static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(v)));
        const auto r = static_cast<RelationId>(uniform_below(rng, 6));
        all.push_back({h, r, t});
    }

    // Shuffle so a holdout split is uniform across relation kinds.
    for (std::int64_t i = static_cast<std::int64_t>(all.size()) - 1; i > 0; --i) {
        const auto j = uniform_below(rng, static_cast<std::uint64_t>(i + 1));
        std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }

    std::vector<Triple> train, valid, test;
    if (opt.holdout == 0) {
        train = all;
        valid = all;
        test = all;
    } else {
        const auto n_test = static_cast<std::size_t>(std::llround(opt.holdout * static_cast<double>(all.size())));
        test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
        valid = test;
    }
    return make_graph(v, 6, std::move(train), std::move(valid), std::move(test));
}

}  // namespace stargraph
