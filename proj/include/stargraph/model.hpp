#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stargraph/autograd.hpp"
#include "stargraph/vocab.hpp"

namespace stargraph {

enum class EncoderKind { Attention, Mlp };

struct EncoderConfig {
    std::int64_t d_a = 256;
    std::int64_t d_n = 32;
    std::int32_t k_anchors = 20;
    std::int32_t m_neighbors = 5;
    bool use_neighbors = true;
    bool use_center = true;
    EncoderKind kind = EncoderKind::Attention;
    int heads = 4;
    int ffn_mult = 4;
    double dropout = 0.05;

    std::int64_t node_slots() const { return (use_neighbors ? m_neighbors : 0) + (use_center ? 1 : 0); }
    std::int64_t seq_len() const { return k_anchors + node_slots(); }
};

/// Token sequences for a batch of entities. Layout per row: k anchor slots
/// (anchor-table ordinals), then m neighbor slots and an optional center slot
/// (node-table ids). Pad slots carry mask 0.
struct SubgraphBatch {
    std::int64_t size = 0;
    std::int32_t k = 0;
    std::int32_t m = 0;
    bool center = true;
    std::vector<std::int64_t> anchor_tok;
    std::vector<std::uint8_t> anchor_mask;
    std::vector<std::int64_t> node_tok;
    std::vector<std::uint8_t> node_mask;

    std::int64_t node_slots() const { return m + (center ? 1 : 0); }
    std::int64_t seq_len() const { return k + node_slots(); }

    /// Per-row concatenated (anchor, node) mask, the attention/pool mask.
    std::vector<std::uint8_t> seq_mask() const {
        std::vector<std::uint8_t> out(static_cast<std::size_t>(size * seq_len()));
        const auto ns = node_slots();
        for (std::int64_t i = 0; i < size; ++i) {
            for (std::int64_t s = 0; s < k; ++s)
                out[static_cast<std::size_t>(i * seq_len() + s)] = anchor_mask[static_cast<std::size_t>(i * k + s)];
            for (std::int64_t s = 0; s < ns; ++s)
                out[static_cast<std::size_t>(i * seq_len() + k + s)] = node_mask[static_cast<std::size_t>(i * ns + s)];
        }
        return out;
    }

    /// Slot roles: 0 anchor, 1 neighbor, 2 center.
    std::vector<std::int32_t> slot_types() const {
        std::vector<std::int32_t> out;
        out.reserve(static_cast<std::size_t>(seq_len()));
        for (std::int32_t s = 0; s < k; ++s) out.push_back(0);
        for (std::int32_t s = 0; s < m; ++s) out.push_back(1);
        if (center) out.push_back(2);
        return out;
    }
};

/// Pure vocabulary lookup; no sampling happens at train time.
SubgraphBatch assemble(const Vocabulary& vocab, const std::vector<EntityId>& entity_ids, const EncoderConfig& cfg);

/// All learnable arrays of the architecture. Instantiated with S = float for
/// training and S = double for gradient checking.
template <typename S>
struct ModelT {
    EncoderConfig cfg;
    std::int64_t num_entities = 0;
    std::int64_t num_relations = 0;
    std::int64_t num_anchors = 0;

    ParameterT<S> anchor_table;  // [|A|, D_A]
    ParameterT<S> node_table;    // [V, D_N]
    ParameterT<S> proj_w, proj_b;
    ParameterT<S> type_table;    // [3, D_A]
    ParameterT<S> ln1_g, ln1_b;
    ParameterT<S> wq, bq, wk, bk, wv, bv, wo, bo;
    ParameterT<S> ln2_g, ln2_b;
    ParameterT<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    ParameterT<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // only allocated for the MLP control
    ParameterT<S> relation_table;                  // [R, 3*D_A]

    std::vector<ParameterT<S>*> parameters() {
        std::vector<ParameterT<S>*> out{&anchor_table, &node_table, &proj_w, &proj_b, &type_table};
        if (cfg.kind == EncoderKind::Attention) {
            for (auto* p : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b, &ffn_w1, &ffn_b1,
                            &ffn_w2, &ffn_b2})
                out.push_back(p);
        } else {
            for (auto* p : {&mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2}) out.push_back(p);
        }
        out.push_back(&relation_table);
        return out;
    }

    static ModelT init(const EncoderConfig& cfg, std::int64_t num_entities, std::int64_t num_relations,
                       std::int64_t num_anchors, double gamma, Rng& rng);
};

namespace detail {

template <typename S>
TensorT<S> uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi, Rng& rng) {
    TensorT<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(uniform_real(rng, lo, hi));
    return t;
}

}  // namespace detail

template <typename S>
ModelT<S> ModelT<S>::init(const EncoderConfig& cfg, std::int64_t num_entities, std::int64_t num_relations,
                          std::int64_t num_anchors, double gamma, Rng& rng) {
    if (cfg.d_a <= 0 || cfg.d_n <= 0) fail("model init: dimensions must be positive");
    if (cfg.heads <= 0 || cfg.d_a % cfg.heads != 0) fail("model init: heads must divide d_a");
    ModelT m;
    m.cfg = cfg;
    m.num_entities = num_entities;
    m.num_relations = num_relations;
    m.num_anchors = num_anchors;

    // Embedding tables: uniform in [-gamma/D, gamma/D]; linear layers
    // Kaiming-uniform with bound sqrt(6/fan_in); norm gains 1, all biases 0.
    auto embed = [&](const char* name, std::int64_t rows, std::int64_t d, std::int64_t range_dim) {
        const double b = gamma / static_cast<double>(range_dim);
        return ParameterT<S>(name, detail::uniform_tensor<S>({rows, d}, -b, b, rng));
    };
    auto kaiming = [&](const char* name, std::int64_t fan_in, std::int64_t fan_out) {
        const double b = std::sqrt(6.0 / static_cast<double>(fan_in));
        return ParameterT<S>(name, detail::uniform_tensor<S>({fan_in, fan_out}, -b, b, rng));
    };
    auto zeros = [&](const char* name, std::int64_t d) { return ParameterT<S>(name, TensorT<S>({d})); };
    auto ones = [&](const char* name, std::int64_t d) {
        TensorT<S> t({d});
        t.fill(S(1));
        return ParameterT<S>(name, std::move(t));
    };

    m.anchor_table = embed("anchor_table", num_anchors, cfg.d_a, cfg.d_a);
    m.node_table = embed("node_table", num_entities, cfg.d_n, cfg.d_n);
    m.proj_w = kaiming("proj_w", cfg.d_n, cfg.d_a);
    m.proj_b = zeros("proj_b", cfg.d_a);
    m.type_table = embed("type_table", 3, cfg.d_a, cfg.d_a);

    if (cfg.kind == EncoderKind::Attention) {
        m.ln1_g = ones("ln1_g", cfg.d_a);
        m.ln1_b = zeros("ln1_b", cfg.d_a);
        m.wq = kaiming("wq", cfg.d_a, cfg.d_a);
        m.bq = zeros("bq", cfg.d_a);
        m.wk = kaiming("wk", cfg.d_a, cfg.d_a);
        m.bk = zeros("bk", cfg.d_a);
        m.wv = kaiming("wv", cfg.d_a, cfg.d_a);
        m.bv = zeros("bv", cfg.d_a);
        m.wo = kaiming("wo", cfg.d_a, cfg.d_a);
        m.bo = zeros("bo", cfg.d_a);
        m.ln2_g = ones("ln2_g", cfg.d_a);
        m.ln2_b = zeros("ln2_b", cfg.d_a);
        const auto ffn_dim = cfg.d_a * cfg.ffn_mult;
        m.ffn_w1 = kaiming("ffn_w1", cfg.d_a, ffn_dim);
        m.ffn_b1 = zeros("ffn_b1", ffn_dim);
        m.ffn_w2 = kaiming("ffn_w2", ffn_dim, cfg.d_a);
        m.ffn_b2 = zeros("ffn_b2", cfg.d_a);
    } else {
        const auto flat = cfg.seq_len() * cfg.d_a;
        m.mlp_w1 = kaiming("mlp_w1", flat, cfg.d_a);
        m.mlp_b1 = zeros("mlp_b1", cfg.d_a);
        m.mlp_w2 = kaiming("mlp_w2", cfg.d_a, cfg.d_a);
        m.mlp_b2 = zeros("mlp_b2", cfg.d_a);
    }
    m.relation_table = embed("relation_table", num_relations, 3 * cfg.d_a, cfg.d_a);
    return m;
}

/// Entity representations [B, D_A] from token sequences (§ encoder): anchor
/// tokens come from the anchor table; neighbor and center tokens from the
/// node table projected D_N -> D_A; type embeddings are added per slot; the
/// sequence runs through one pre-norm transformer block and a masked mean
/// pool. No position embedding anywhere.
template <typename S>
typename TapeT<S>::Ref encode(TapeT<S>& tape, ModelT<S>& model, const SubgraphBatch& batch, bool training, Rng* rng) {
    const auto& cfg = model.cfg;
    if (batch.size <= 0) fail("encode: empty batch");
    const auto L = batch.seq_len();
    const auto seq_mask = batch.seq_mask();
    for (std::int64_t i = 0; i < batch.size; ++i) {
        bool any = false;
        for (std::int64_t s = 0; s < L && !any; ++s) any = seq_mask[static_cast<std::size_t>(i * L + s)] != 0;
        if (!any) fail("encode: all token slots masked for batch row " + std::to_string(i));
    }

    auto anchors = embed_rows(tape, model.anchor_table, batch.anchor_tok, batch.anchor_mask);
    auto tokens = reshape_copy(tape, anchors, {batch.size, static_cast<std::int64_t>(batch.k), cfg.d_a});
    if (batch.node_slots() > 0) {
        auto nodes = embed_rows(tape, model.node_table, batch.node_tok, batch.node_mask);
        auto projected = linear(tape, nodes, model.proj_w, model.proj_b);
        projected = dropout(tape, projected, cfg.dropout, training, rng);
        auto nodes3 = reshape_copy(tape, projected, {batch.size, batch.node_slots(), cfg.d_a});
        tokens = concat_dim1(tape, tokens, nodes3);
    }
    tokens = add_type_rows(tape, tokens, model.type_table, batch.slot_types());

    if (cfg.kind == EncoderKind::Attention) {
        AttentionWeightsT<S> wts{&model.wq, &model.bq, &model.wk, &model.bk,
                                 &model.wv, &model.bv, &model.wo, &model.bo};
        auto normed = layer_norm(tape, tokens, model.ln1_g, model.ln1_b);
        auto attn = multihead_self_attention(tape, normed, seq_mask, wts, cfg.heads);
        auto h = add(tape, tokens, attn);
        auto normed2 = layer_norm(tape, h, model.ln2_g, model.ln2_b);
        auto f = linear(tape, normed2, model.ffn_w1, model.ffn_b1);
        f = relu(tape, f);
        f = dropout(tape, f, cfg.dropout, training, rng);
        f = linear(tape, f, model.ffn_w2, model.ffn_b2);
        f = dropout(tape, f, cfg.dropout, training, rng);
        auto y = add(tape, h, f);
        return mean_pool(tape, y, seq_mask);
    }

    // MLP control (NodePiece style): the concatenated token sequence through
    // a two-layer MLP, no pooling. Order-sensitive by construction.
    auto flat = reshape_copy(tape, tokens, {batch.size, L * cfg.d_a});
    auto h1 = linear(tape, flat, model.mlp_w1, model.mlp_b1);
    h1 = relu(tape, h1);
    h1 = dropout(tape, h1, cfg.dropout, training, rng);
    auto out = linear(tape, h1, model.mlp_w2, model.mlp_b2);
    return dropout(tape, out, cfg.dropout, training, rng);
}

using Model = ModelT<float>;

}  // namespace stargraph
