#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "stargraph/model.hpp"
#include "stargraph/objective.hpp"

namespace stargraph {

/// Read-only scoring interface the evaluator ranks against. Implementations
/// must be safe for concurrent score_triples calls.
class TripleScorer {
  public:
    virtual ~TripleScorer() = default;
    virtual std::int64_t num_entities() const = 0;
    virtual void score_triples(const Triple* triples, std::int64_t n, float* out) const = 0;
};

/// Scores triples with the trained model: encodes every entity once (eval
/// mode, chunked to bound peak memory), then each triple costs O(D).
class ModelScorer final : public TripleScorer {
  public:
    ModelScorer(Model& model, const Vocabulary& vocab, const ScoreConfig& score_cfg, std::int64_t chunk = 1 << 14);

    std::int64_t num_entities() const override { return num_entities_; }
    void score_triples(const Triple* triples, std::int64_t n, float* out) const override;

    const Tensor& encodings() const { return enc_; }

  private:
    std::int64_t num_entities_;
    std::int64_t d_;
    ScoreConfig score_cfg_;
    Tensor enc_;       // [V, D_A]
    Tensor rel_;       // [R, 3*D_A] copy of the relation table
};

/// Membership index over train+valid+test for the filtered setting.
class KnownTriples {
  public:
    explicit KnownTriples(const Graph& graph);
    bool contains(EntityId h, RelationId r, EntityId t) const {
        return set_.count((static_cast<std::uint64_t>(h) * num_relations_ + static_cast<std::uint64_t>(r)) *
                              num_entities_ +
                          static_cast<std::uint64_t>(t)) > 0;
    }

  private:
    std::uint64_t num_entities_;
    std::uint64_t num_relations_;
    std::unordered_set<std::uint64_t> set_;
};

enum class Side { Head, Tail };
enum class Protocol { Full, Sampled };

struct EvalConfig {
    Protocol protocol = Protocol::Full;
    std::uint64_t seed = 0;
    std::int64_t num_negatives = 1000;  // sampled protocol
    std::int64_t chunk = 1 << 14;       // candidates per scoring pass
    int threads = 1;
};

/// Filtered rank of the true entity on one side of one triple. Candidates
/// forming a known triple are removed (the true entity never is); ties rank
/// pessimistically: rank = 1 + #higher + #tied. candidates == nullptr ranks
/// against all entities; otherwise against the given (pre-filtered) list.
std::int64_t rank_filtered(const Triple& triple, Side side, const std::vector<EntityId>* candidates,
                           const TripleScorer& scorer, const KnownTriples& known, std::int64_t chunk = 1 << 14);

struct RelationMetrics {
    std::int64_t queries = 0;
    double mrr = 0;
};

struct MetricReport {
    double mrr = 0;
    double hits1 = 0, hits3 = 0, hits10 = 0;
    std::int64_t queries = 0;
    std::map<RelationId, RelationMetrics> per_relation;
};

/// Both sides of every triple in the split; MRR averages 1/rank over all
/// head and tail queries. Deterministic given the seed.
MetricReport evaluate(const Graph& graph, const std::vector<Triple>& split, const TripleScorer& scorer,
                      const EvalConfig& cfg);

std::string report_json(const MetricReport& report, const std::string& config_echo);

}  // namespace stargraph
