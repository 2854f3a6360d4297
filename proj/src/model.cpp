#include "stargraph/model.hpp"

namespace stargraph {

SubgraphBatch assemble(const Vocabulary& vocab, const std::vector<EntityId>& entity_ids, const EncoderConfig& cfg) {
    if (cfg.k_anchors < 1) fail("assemble: k_anchors must be >= 1");
    if (cfg.k_anchors > vocab.k)
        fail("assemble: k_anchors=" + std::to_string(cfg.k_anchors) + " exceeds vocabulary k=" + std::to_string(vocab.k));
    if (cfg.use_neighbors && cfg.m_neighbors > vocab.m)
        fail("assemble: m_neighbors=" + std::to_string(cfg.m_neighbors) + " exceeds vocabulary m=" + std::to_string(vocab.m));

    SubgraphBatch b;
    b.size = static_cast<std::int64_t>(entity_ids.size());
    b.k = cfg.k_anchors;
    b.m = cfg.use_neighbors ? cfg.m_neighbors : 0;
    b.center = cfg.use_center;
    const auto ns = b.node_slots();
    b.anchor_tok.assign(static_cast<std::size_t>(b.size * b.k), -1);
    b.anchor_mask.assign(static_cast<std::size_t>(b.size * b.k), 0);
    b.node_tok.assign(static_cast<std::size_t>(b.size * ns), -1);
    b.node_mask.assign(static_cast<std::size_t>(b.size * ns), 0);

    for (std::int64_t i = 0; i < b.size; ++i) {
        const auto e = entity_ids[static_cast<std::size_t>(i)];
        if (e < 0 || static_cast<std::int64_t>(e) >= vocab.num_entities)
            fail("assemble: entity id " + std::to_string(e) + " out of range [0, " + std::to_string(vocab.num_entities) + ")");
        const auto* av = vocab.anchors_of(e);
        for (std::int32_t s = 0; s < b.k; ++s) {
            if (av[s] < 0) break;  // pads are trailing
            b.anchor_tok[static_cast<std::size_t>(i * b.k + s)] = av[s];
            b.anchor_mask[static_cast<std::size_t>(i * b.k + s)] = 1;
        }
        const auto* nv = vocab.neighbors_of(e);
        for (std::int32_t s = 0; s < b.m; ++s) {
            if (nv[s] < 0) break;
            b.node_tok[static_cast<std::size_t>(i * ns + s)] = nv[s];
            b.node_mask[static_cast<std::size_t>(i * ns + s)] = 1;
        }
        if (b.center) {
            b.node_tok[static_cast<std::size_t>(i * ns + b.m)] = e;
            b.node_mask[static_cast<std::size_t>(i * ns + b.m)] = 1;
        }
    }
    return b;
}

}  // namespace stargraph
