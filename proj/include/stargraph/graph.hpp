#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stargraph {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
    EntityId head = 0;
    RelationId rel = 0;
    EntityId tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
};

enum class TripleFormat { Ids, Labels };

struct IngestOptions {
    TripleFormat format = TripleFormat::Ids;
    // Declared id ranges (id mode only); -1 infers max+1 across all splits.
    std::int64_t num_entities = -1;
    std::int64_t num_relations = -1;
    // Drop exact duplicate triples within each split. Default off: duplicates
    // are kept and count toward degrees.
    bool dedup = false;
};

/// One adjacency entry of the undirected view. dir=0 when the owning entity
/// is the head of the underlying triple, 1 when it is the tail.
struct AdjEntry {
    EntityId entity;
    RelationId rel;
    std::uint8_t dir;
};

/// Immutable triple store: dense entity/relation ids, train/valid/test
/// splits, and an undirected CSR adjacency built from the train split only.
/// Neighbor lists are pre-sorted by (degree desc, id asc) so degree-ordered
/// sampling is a prefix take. A self-loop stores one adjacency entry but
/// counts twice toward the node's degree. Safe for unsynchronized concurrent
/// reads once built.
struct Graph {
    std::int64_t num_entities = 0;
    std::int64_t num_relations = 0;

    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;

    // Label dictionaries (index = id); empty when ingested in id mode.
    std::vector<std::string> entity_labels;
    std::vector<std::string> relation_labels;

    // CSR over the undirected view of train.
    std::vector<std::int64_t> adj_offsets;  // size num_entities + 1
    std::vector<EntityId> adj_entity;
    std::vector<RelationId> adj_rel;
    std::vector<std::uint8_t> adj_dir;
    std::vector<std::int64_t> degrees;  // train-edge incidence, self-loops twice

    std::uint64_t checksum = 0;         // over counts + split triples
    std::uint64_t source_checksum = 0;  // over raw input files (cache regeneration)
    std::string config_echo;            // provenance, embedded in the cache file

    std::int64_t degree(EntityId u) const;
    std::int64_t adj_begin(EntityId u) const { return adj_offsets[static_cast<std::size_t>(u)]; }
    std::int64_t adj_end(EntityId u) const { return adj_offsets[static_cast<std::size_t>(u) + 1]; }

    void check_entity(EntityId u) const;

    /// Builds adjacency, degrees and checksum from the splits already present.
    void finalize();

    void save(const std::string& path) const;
    static Graph load(const std::string& path);
};

/// Parse the three split files (TSV, three whitespace-separated fields per
/// line) and build the graph. Label mode assigns dense ids in first-seen
/// order. Malformed lines report file and line number.
Graph ingest(const std::string& train_path, const std::string& valid_path, const std::string& test_path,
             const IngestOptions& options);

/// Assembles a graph from in-memory splits (toy presets, tests).
Graph make_graph(std::int64_t num_entities, std::int64_t num_relations, std::vector<Triple> train,
                 std::vector<Triple> valid, std::vector<Triple> test);

}  // namespace stargraph
