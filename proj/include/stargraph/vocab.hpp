#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stargraph/graph.hpp"

namespace stargraph {

/// Global anchor set: the |A| highest-degree entities, ties broken by
/// ascending id. Ordinal order therefore *is* (degree desc, id asc), which
/// the vocabulary builder exploits as a sort key.
struct AnchorSet {
    std::vector<EntityId> anchors;          // ordinal -> entity id
    std::vector<std::int32_t> ordinal_of;   // entity id -> ordinal, -1 if not an anchor

    std::int64_t size() const { return static_cast<std::int64_t>(anchors.size()); }
    bool is_anchor(EntityId u) const { return ordinal_of[static_cast<std::size_t>(u)] >= 0; }
};

AnchorSet select_anchors(const Graph& graph, std::int64_t count);

/// The first k distinct anchors met by BFS from u over the undirected
/// adjacency, visiting each frontier in (degree desc, id asc) order; u itself
/// counts at hop 0. Returns anchor ordinals, fewer than k if the reachable
/// set (within hop_cap) runs out. Reference implementation; build_vocabulary
/// uses an equivalent multi-source pass.
std::vector<std::int32_t> sample_anchors(const Graph& graph, const AnchorSet& anchors, EntityId u, std::int32_t k,
                                         std::int32_t hop_cap = 10);

/// First m distinct one-hop neighbors of u in (degree desc, id asc) order,
/// excluding u itself.
std::vector<EntityId> sample_neighbors(const Graph& graph, EntityId u, std::int32_t m);

/// Per-entity token sets: k anchor ordinals and m neighbor entity ids, -1 in
/// pad slots. The center token is the entity itself and is stored implicitly.
struct Vocabulary {
    std::int64_t num_entities = 0;
    std::int32_t k = 0;
    std::int32_t m = 0;
    std::uint64_t graph_checksum = 0;
    std::vector<EntityId> anchor_ids;           // |A| entries, ordinal -> entity id
    std::vector<std::int32_t> anchor_tokens;    // num_entities * k
    std::vector<EntityId> neighbor_tokens;      // num_entities * m
    std::string config_echo;

    std::int64_t num_anchors() const { return static_cast<std::int64_t>(anchor_ids.size()); }
    const std::int32_t* anchors_of(EntityId u) const { return anchor_tokens.data() + static_cast<std::size_t>(u) * k; }
    const EntityId* neighbors_of(EntityId u) const { return neighbor_tokens.data() + static_cast<std::size_t>(u) * m; }

    /// "entity: a1,...,ak | n1,...,nm" with anchor/neighbor *entity ids*,
    /// pads omitted; dump-subgraph appends "| center".
    std::string dump_entry(EntityId u, bool with_center) const;

    /// Errors unless this vocabulary was built from exactly this graph.
    void verify_graph(const Graph& graph) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
};

/// Builds the vocabulary for every entity. Deterministic; entries are
/// independent, so the pass parallelizes over entities with disjoint writes.
Vocabulary build_vocabulary(const Graph& graph, const AnchorSet& anchors, std::int32_t k, std::int32_t m,
                            std::int32_t hop_cap = 10, int threads = 1);

}  // namespace stargraph
