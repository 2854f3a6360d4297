#include "stargraph/vocab.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <numeric>
#include <utility>

#include "stargraph/util.hpp"

namespace stargraph {

namespace {

constexpr char kVocabMagic[5] = {'S', 'G', 'V', 'C', '1'};
constexpr std::uint64_t kEmptyLabel = ~0ull;

// Anchor label packed as (hop << 32) | ordinal: ascending integer order is
// exactly (hop asc, degree desc, id asc).
inline std::uint64_t pack_label(std::uint32_t hop, std::uint32_t ordinal) {
    return (static_cast<std::uint64_t>(hop) << 32) | ordinal;
}
inline std::uint32_t label_ordinal(std::uint64_t label) { return static_cast<std::uint32_t>(label & 0xffffffffu); }

}  // namespace

AnchorSet select_anchors(const Graph& graph, std::int64_t count) {
    if (count <= 0 || count >= graph.num_entities)
        fail("anchor count must satisfy 0 < count < num_entities (got " + std::to_string(count) + " of " +
             std::to_string(graph.num_entities) + ")");
    std::vector<EntityId> ids(static_cast<std::size_t>(graph.num_entities));
    std::iota(ids.begin(), ids.end(), 0);
    auto better = [&](EntityId a, EntityId b) {
        const auto da = graph.degrees[static_cast<std::size_t>(a)];
        const auto db = graph.degrees[static_cast<std::size_t>(b)];
        if (da != db) return da > db;
        return a < b;
    };
    std::nth_element(ids.begin(), ids.begin() + count, ids.end(), better);
    ids.resize(static_cast<std::size_t>(count));
    std::sort(ids.begin(), ids.end(), better);

    AnchorSet out;
    out.anchors = std::move(ids);
    out.ordinal_of.assign(static_cast<std::size_t>(graph.num_entities), -1);
    for (std::size_t i = 0; i < out.anchors.size(); ++i)
        out.ordinal_of[static_cast<std::size_t>(out.anchors[i])] = static_cast<std::int32_t>(i);
    return out;
}

std::vector<std::int32_t> sample_anchors(const Graph& graph, const AnchorSet& anchors, EntityId u, std::int32_t k,
                                         std::int32_t hop_cap) {
    graph.check_entity(u);
    if (k < 1) fail("sample_anchors: k must be >= 1");

    std::vector<std::int32_t> found;
    found.reserve(static_cast<std::size_t>(k));
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(graph.num_entities), 0);
    std::vector<EntityId> frontier{u};
    visited[static_cast<std::size_t>(u)] = 1;
    if (anchors.is_anchor(u)) found.push_back(anchors.ordinal_of[static_cast<std::size_t>(u)]);

    for (std::int32_t hop = 1; hop <= hop_cap && !frontier.empty() && std::cmp_less(found.size(), k); ++hop) {
        std::vector<EntityId> next;
        for (const auto v : frontier) {
            for (auto i = graph.adj_begin(v); i < graph.adj_end(v); ++i) {
                const auto w = graph.adj_entity[static_cast<std::size_t>(i)];
                if (visited[static_cast<std::size_t>(w)]) continue;
                visited[static_cast<std::size_t>(w)] = 1;
                next.push_back(w);
            }
        }
        std::sort(next.begin(), next.end(), [&](EntityId a, EntityId b) {
            const auto da = graph.degrees[static_cast<std::size_t>(a)];
            const auto db = graph.degrees[static_cast<std::size_t>(b)];
            if (da != db) return da > db;
            return a < b;
        });
        for (const auto w : next) {
            if (std::cmp_greater_equal(found.size(), k)) break;
            if (anchors.is_anchor(w)) found.push_back(anchors.ordinal_of[static_cast<std::size_t>(w)]);
        }
        frontier = std::move(next);
    }
    return found;
}

std::vector<EntityId> sample_neighbors(const Graph& graph, EntityId u, std::int32_t m) {
    graph.check_entity(u);
    if (m < 0) fail("sample_neighbors: m must be >= 0");
    std::vector<EntityId> out;
    out.reserve(static_cast<std::size_t>(m));
    EntityId last = -1;
    for (auto i = graph.adj_begin(u); i < graph.adj_end(u) && std::cmp_less(out.size(), m); ++i) {
        const auto w = graph.adj_entity[static_cast<std::size_t>(i)];
        if (w == u || w == last) continue;  // lists are sorted, duplicates are adjacent
        out.push_back(w);
        last = w;
    }
    return out;
}

Vocabulary build_vocabulary(const Graph& graph, const AnchorSet& anchors, std::int32_t k, std::int32_t m,
                            std::int32_t hop_cap, int threads) {
    if (k < 1) fail("build_vocabulary: k must be >= 1");
    if (m < 0) fail("build_vocabulary: m must be >= 0");
    const auto v = static_cast<std::size_t>(graph.num_entities);
    const auto kk = static_cast<std::size_t>(k);

    // Multi-source top-k label propagation. Each node keeps its k best
    // (hop, ordinal) labels; a round merges every node's set with its
    // neighbors' sets shifted one hop. Pruning to k is exact because the
    // order is total and shifting all hops by one preserves it. Matches
    // sample_anchors on every node (property-tested).
    std::vector<std::uint64_t> cur(v * kk, kEmptyLabel);
    for (std::size_t ord = 0; ord < anchors.anchors.size(); ++ord)
        cur[static_cast<std::size_t>(anchors.anchors[ord]) * kk] = pack_label(0, static_cast<std::uint32_t>(ord));

    std::vector<std::uint64_t> nxt(cur);
    std::vector<std::uint8_t> changed(v, 1), changed_next(v, 0);
    std::atomic<bool> any_changed{true};

    for (std::int32_t round = 1; round <= hop_cap && any_changed.load(); ++round) {
        any_changed.store(false);
        std::fill(changed_next.begin(), changed_next.end(), 0);
        parallel_for_chunked(static_cast<std::int64_t>(v), threads, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<std::uint64_t> scratch;
            std::vector<std::uint64_t> kept_labels(kk);
            bool chunk_changed = false;
            for (std::int64_t ui = lo; ui < hi; ++ui) {
                const auto u = static_cast<std::size_t>(ui);
                const std::size_t base = u * kk;
                // Skip nodes whose whole neighborhood is stable.
                bool dirty = changed[u] != 0;
                for (auto i = graph.adj_offsets[u]; !dirty && i < graph.adj_offsets[u + 1]; ++i)
                    dirty = changed[static_cast<std::size_t>(graph.adj_entity[static_cast<std::size_t>(i)])] != 0;
                if (!dirty) {
                    std::copy(cur.begin() + static_cast<std::ptrdiff_t>(base),
                              cur.begin() + static_cast<std::ptrdiff_t>(base + kk),
                              nxt.begin() + static_cast<std::ptrdiff_t>(base));
                    continue;
                }
                scratch.clear();
                for (std::size_t s = 0; s < kk; ++s) {
                    const auto lbl = cur[base + s];
                    if (lbl == kEmptyLabel) break;  // sets are packed front-first
                    scratch.push_back(lbl);
                }
                for (auto i = graph.adj_offsets[u]; i < graph.adj_offsets[u + 1]; ++i) {
                    const auto nb = static_cast<std::size_t>(graph.adj_entity[static_cast<std::size_t>(i)]);
                    for (std::size_t s = 0; s < kk; ++s) {
                        const auto lbl = cur[nb * kk + s];
                        if (lbl == kEmptyLabel) break;
                        scratch.push_back(lbl + (1ull << 32));
                    }
                }
                std::sort(scratch.begin(), scratch.end());
                // Keep the k best labels with distinct ordinals; sorted order
                // puts the smallest hop of each ordinal first.
                std::size_t kept = 0;
                for (const auto lbl : scratch) {
                    if (kept == kk) break;
                    const auto ord = label_ordinal(lbl);
                    bool dup = false;
                    for (std::size_t j = 0; j < kept; ++j)
                        if (label_ordinal(kept_labels[j]) == ord) {
                            dup = true;
                            break;
                        }
                    if (dup) continue;
                    kept_labels[kept++] = lbl;
                }
                bool diff = false;
                for (std::size_t s = 0; s < kk; ++s) {
                    const auto lbl = s < kept ? kept_labels[s] : kEmptyLabel;
                    if (cur[base + s] != lbl) diff = true;
                    nxt[base + s] = lbl;
                }
                if (diff) {
                    changed_next[u] = 1;
                    chunk_changed = true;
                }
            }
            if (chunk_changed) any_changed.store(true);
        });
        cur.swap(nxt);
        changed.swap(changed_next);
    }

    Vocabulary vocab;
    vocab.num_entities = graph.num_entities;
    vocab.k = k;
    vocab.m = m;
    vocab.graph_checksum = graph.checksum;
    vocab.anchor_ids = anchors.anchors;
    vocab.anchor_tokens.assign(v * kk, -1);
    vocab.neighbor_tokens.assign(v * static_cast<std::size_t>(m), -1);

    parallel_for(static_cast<std::int64_t>(v), threads, [&](std::int64_t ui) {
        const auto u = static_cast<std::size_t>(ui);
        for (std::size_t s = 0; s < kk; ++s) {
            const auto lbl = cur[u * kk + s];
            if (lbl == kEmptyLabel) break;
            vocab.anchor_tokens[u * kk + s] = static_cast<std::int32_t>(label_ordinal(lbl));
        }
        const auto nbs = sample_neighbors(graph, static_cast<EntityId>(ui), m);
        for (std::size_t s = 0; s < nbs.size(); ++s)
            vocab.neighbor_tokens[u * static_cast<std::size_t>(m) + s] = nbs[s];
    });
    return vocab;
}

std::string Vocabulary::dump_entry(EntityId u, bool with_center) const {
    if (u < 0 || static_cast<std::int64_t>(u) >= num_entities)
        fail("entity id " + std::to_string(u) + " out of range [0, " + std::to_string(num_entities) + ")");
    std::string line = std::to_string(u) + ":";
    std::string part;
    for (std::int32_t s = 0; s < k; ++s) {
        const auto ord = anchors_of(u)[s];
        if (ord < 0) break;
        if (!part.empty()) part += ",";
        part += std::to_string(anchor_ids[static_cast<std::size_t>(ord)]);
    }
    line += " " + part + " |";
    part.clear();
    for (std::int32_t s = 0; s < m; ++s) {
        const auto nb = neighbors_of(u)[s];
        if (nb < 0) break;
        if (!part.empty()) part += ",";
        part += std::to_string(nb);
    }
    line += " " + part;
    if (with_center) line += " | " + std::to_string(u);
    return line;
}

void Vocabulary::verify_graph(const Graph& graph) const {
    if (graph_checksum != graph.checksum)
        fail("vocabulary was built for a different graph (checksum mismatch: vocabulary " +
             std::to_string(graph_checksum) + ", graph " + std::to_string(graph.checksum) + ")");
    if (num_entities != graph.num_entities) fail("vocabulary entity count mismatch");
}

void Vocabulary::save(const std::string& path) const {
    BinWriter w(path);
    w.bytes(kVocabMagic, sizeof(kVocabMagic));
    w.u64(static_cast<std::uint64_t>(num_anchors()));
    w.u64(static_cast<std::uint64_t>(k));
    w.u64(static_cast<std::uint64_t>(m));
    w.u64(static_cast<std::uint64_t>(num_entities));
    w.u64(graph_checksum);
    for (const auto a : anchor_ids) w.i32(a);
    for (const auto t : anchor_tokens) w.i32(t);
    for (const auto t : neighbor_tokens) w.i32(t);
    w.str(config_echo);
    w.close();
}

Vocabulary Vocabulary::load(const std::string& path) {
    BinReader r(path);
    char magic[5];
    r.bytes(magic, 5);
    if (std::memcmp(magic, kVocabMagic, 5) != 0) fail(path + ": not a vocabulary file (bad magic)");
    Vocabulary v;
    const auto num_anchors = r.u64();
    v.k = static_cast<std::int32_t>(r.u64());
    v.m = static_cast<std::int32_t>(r.u64());
    v.num_entities = static_cast<std::int64_t>(r.u64());
    v.graph_checksum = r.u64();
    v.anchor_ids.resize(num_anchors);
    for (auto& x : v.anchor_ids) x = r.i32();
    v.anchor_tokens.resize(static_cast<std::size_t>(v.num_entities) * static_cast<std::size_t>(v.k));
    for (auto& x : v.anchor_tokens) x = r.i32();
    v.neighbor_tokens.resize(static_cast<std::size_t>(v.num_entities) * static_cast<std::size_t>(v.m));
    for (auto& x : v.neighbor_tokens) x = r.i32();
    v.config_echo = r.str();
    return v;
}

}  // namespace stargraph
