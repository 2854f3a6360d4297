#pragma once

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "stargraph/graph.hpp"
#include "stargraph/util.hpp"
#include "stargraph/vocab.hpp"

namespace sgtest {

using namespace stargraph;

// Star fixture used across modules:
//   edges {(1,r,0),(2,r,0),(3,r,0),(4,r,3),(5,r,3)}
//   degrees: 0 -> 3, 3 -> 3, others 1
inline Graph star_graph() {
    return make_graph(6, 1, {{1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 3}, {5, 0, 3}}, {}, {});
}

inline Graph random_graph(std::int64_t nodes, std::int64_t edges, std::int64_t relations, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Triple> triples;
    triples.reserve(static_cast<std::size_t>(edges));
    for (std::int64_t i = 0; i < edges; ++i)
        triples.push_back({static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(nodes))),
                           static_cast<RelationId>(uniform_below(rng, static_cast<std::uint64_t>(relations))),
                           static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(nodes)))});
    return make_graph(nodes, relations, std::move(triples), {}, {});
}

// Brute-force incidence counter (degree oracle): self-loops count twice.
inline std::vector<std::int64_t> degree_oracle(const Graph& g) {
    std::vector<std::int64_t> deg(static_cast<std::size_t>(g.num_entities), 0);
    for (const auto& t : g.train) {
        deg[static_cast<std::size_t>(t.head)] += 1;
        deg[static_cast<std::size_t>(t.tail)] += 1;
    }
    return deg;
}

// All-pairs shortest paths over the undirected view (BFS per node).
inline std::vector<std::vector<std::int32_t>> apsp_oracle(const Graph& g) {
    const auto v = static_cast<std::size_t>(g.num_entities);
    std::vector<std::vector<std::int32_t>> dist(v, std::vector<std::int32_t>(v, -1));
    for (std::size_t s = 0; s < v; ++s) {
        auto& row = dist[s];
        std::queue<EntityId> q;
        q.push(static_cast<EntityId>(s));
        row[s] = 0;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (auto i = g.adj_begin(u); i < g.adj_end(u); ++i) {
                const auto w = g.adj_entity[static_cast<std::size_t>(i)];
                if (row[static_cast<std::size_t>(w)] >= 0) continue;
                row[static_cast<std::size_t>(w)] = row[static_cast<std::size_t>(u)] + 1;
                q.push(w);
            }
        }
    }
    return dist;
}

// Anchor-sampling oracle derived from shortest paths: sort reachable anchors
// by (hop asc, degree desc, id asc), truncate to k. Independent of both the
// BFS implementation and the propagation pass.
inline std::vector<std::int32_t> anchor_oracle(const Graph& g, const AnchorSet& anchors,
                                               const std::vector<std::vector<std::int32_t>>& dist, EntityId u,
                                               std::int32_t k, std::int32_t cap) {
    struct Entry {
        std::int32_t hop;
        std::int64_t neg_deg;
        EntityId id;
        std::int32_t ordinal;
    };
    std::vector<Entry> es;
    for (std::size_t ord = 0; ord < anchors.anchors.size(); ++ord) {
        const auto a = anchors.anchors[ord];
        const auto d = dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(a)];
        if (d < 0 || d > cap) continue;
        es.push_back({d, -g.degrees[static_cast<std::size_t>(a)], a, static_cast<std::int32_t>(ord)});
    }
    std::sort(es.begin(), es.end(), [](const Entry& x, const Entry& y) {
        if (x.hop != y.hop) return x.hop < y.hop;
        if (x.neg_deg != y.neg_deg) return x.neg_deg < y.neg_deg;
        return x.id < y.id;
    });
    std::vector<std::int32_t> out;
    for (const auto& e : es) {
        if (static_cast<std::int32_t>(out.size()) >= k) break;
        out.push_back(e.ordinal);
    }
    return out;
}

}  // namespace sgtest
