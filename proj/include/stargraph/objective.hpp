#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stargraph/autograd.hpp"

namespace stargraph {

enum class ScoreVariant { TripleRePrime, TripleReV2 };
enum class Norm { L1, L2 };

struct ScoreConfig {
    ScoreVariant variant = ScoreVariant::TripleRePrime;
    Norm norm = Norm::L1;
    double u = 0.1;
    double gamma = 6.0;
    double alpha = 1.0;
};

namespace detail {

// Inner vector of both scorers.
//   v2:    z = h o (r_h + u) - t o (r_t + u) + r
//   prime: z = h - t + r + u * (h o r_h - t o r_t)
template <typename S>
inline void score_inner(ScoreVariant variant, double u, const S* h, const S* t, const S* rh, const S* rt, const S* r,
                        std::int64_t d, S* z) {
    const S us = static_cast<S>(u);
    if (variant == ScoreVariant::TripleReV2) {
        for (std::int64_t c = 0; c < d; ++c) z[c] = h[c] * (rh[c] + us) - t[c] * (rt[c] + us) + r[c];
    } else {
        for (std::int64_t c = 0; c < d; ++c) z[c] = h[c] - t[c] + r[c] + us * (h[c] * rh[c] - t[c] * rt[c]);
    }
}

template <typename S>
inline S norm_of(Norm norm, const S* z, std::int64_t d) {
    double acc = 0;
    if (norm == Norm::L1) {
        for (std::int64_t c = 0; c < d; ++c) acc += std::fabs(static_cast<double>(z[c]));
    } else {
        for (std::int64_t c = 0; c < d; ++c) acc += static_cast<double>(z[c]) * static_cast<double>(z[c]);
        acc = std::sqrt(acc);
    }
    return static_cast<S>(acc);
}

}  // namespace detail

/// Batched score kernel over row-aligned inputs, shared by the training op
/// and the evaluator: out[i] = -|| z(h_i, t_i, rel_i) ||.
template <typename S>
void score_rows(ScoreVariant variant, Norm norm, double u, const S* h, const S* t, const S* rh, const S* rt, const S* r,
                std::int64_t n, std::int64_t d, S* out) {
    std::vector<S> z(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < n; ++i) {
        detail::score_inner(variant, u, h + i * d, t + i * d, rh + i * d, rt + i * d, r + i * d, d, z.data());
        out[i] = -detail::norm_of(norm, z.data(), d);
    }
}

/// Scalar conveniences for tests and hand checks.
template <typename S>
S score_v2(const std::vector<S>& h, const std::vector<S>& t, const std::vector<S>& rh, const std::vector<S>& rt,
           const std::vector<S>& r, double u, Norm norm) {
    S out;
    score_rows(ScoreVariant::TripleReV2, norm, u, h.data(), t.data(), rh.data(), rt.data(), r.data(), 1,
               static_cast<std::int64_t>(h.size()), &out);
    return out;
}

template <typename S>
S score_prime(const std::vector<S>& h, const std::vector<S>& t, const std::vector<S>& rh, const std::vector<S>& rt,
              const std::vector<S>& r, double u, Norm norm) {
    S out;
    score_rows(ScoreVariant::TripleRePrime, norm, u, h.data(), t.data(), rh.data(), rt.data(), r.data(), 1,
               static_cast<std::int64_t>(h.size()), &out);
    return out;
}

/// Taped batched scoring: h, t, rh, rt, r are [N, D] nodes; output is [N].
template <typename S>
typename TapeT<S>::Ref triple_score(TapeT<S>& tape, const typename TapeT<S>::Ref& h, const typename TapeT<S>::Ref& t,
                                    const typename TapeT<S>::Ref& rh, const typename TapeT<S>::Ref& rt,
                                    const typename TapeT<S>::Ref& r, ScoreVariant variant, Norm norm, double u) {
    for (const auto* in : {&h, &t, &rh, &rt, &r})
        if ((*in)->value.shape != h->value.shape) fail("triple_score: input shape mismatch");
    detail::check_rank2(h->value, "triple_score inputs");
    const auto n = h->value.dim(0);
    const auto d = h->value.dim(1);

    auto z = std::make_shared<TensorT<S>>(std::vector<std::int64_t>{n, d});
    TensorT<S> out({n});
    for (std::int64_t i = 0; i < n; ++i) {
        detail::score_inner(variant, u, h->value.ptr() + i * d, t->value.ptr() + i * d, rh->value.ptr() + i * d,
                            rt->value.ptr() + i * d, r->value.ptr() + i * d, d, z->ptr() + i * d);
        out.data[static_cast<std::size_t>(i)] = -detail::norm_of(norm, z->ptr() + i * d, d);
    }
    auto node = tape.make(std::move(out));
    auto hr = h, tr = t, rhr = rh, rtr = rt, rr = r;
    node->backward = [hr, tr, rhr, rtr, rr, z, variant, norm, u, n, d](typename TapeT<S>::Node& self) {
        const S us = static_cast<S>(u);
        std::vector<S> dz(static_cast<std::size_t>(d));
        for (std::int64_t i = 0; i < n; ++i) {
            const S g = self.grad.data[static_cast<std::size_t>(i)];
            if (g == S(0)) continue;
            const S* zi = z->ptr() + i * d;
            if (norm == Norm::L1) {
                for (std::int64_t c = 0; c < d; ++c)
                    dz[static_cast<std::size_t>(c)] = zi[c] > S(0) ? -g : (zi[c] < S(0) ? g : S(0));
            } else {
                const S nv = -self.value.data[static_cast<std::size_t>(i)];  // ||z||
                if (nv == S(0)) {
                    std::fill(dz.begin(), dz.end(), S(0));
                } else {
                    const S inv = -g / nv;
                    for (std::int64_t c = 0; c < d; ++c) dz[static_cast<std::size_t>(c)] = zi[c] * inv;
                }
            }
            const S* hv = hr->value.ptr() + i * d;
            const S* tv = tr->value.ptr() + i * d;
            const S* rhv = rhr->value.ptr() + i * d;
            const S* rtv = rtr->value.ptr() + i * d;
            S* dh = hr->grad.ptr() + i * d;
            S* dt = tr->grad.ptr() + i * d;
            S* drh = rhr->grad.ptr() + i * d;
            S* drt = rtr->grad.ptr() + i * d;
            S* dr = rr->grad.ptr() + i * d;
            if (variant == ScoreVariant::TripleReV2) {
                for (std::int64_t c = 0; c < d; ++c) {
                    const S dzc = dz[static_cast<std::size_t>(c)];
                    dh[c] += dzc * (rhv[c] + us);
                    drh[c] += dzc * hv[c];
                    dt[c] -= dzc * (rtv[c] + us);
                    drt[c] -= dzc * tv[c];
                    dr[c] += dzc;
                }
            } else {
                for (std::int64_t c = 0; c < d; ++c) {
                    const S dzc = dz[static_cast<std::size_t>(c)];
                    dh[c] += dzc * (S(1) + us * rhv[c]);
                    drh[c] += dzc * us * hv[c];
                    dt[c] -= dzc * (S(1) + us * rtv[c]);
                    drt[c] -= dzc * us * tv[c];
                    dr[c] += dzc;
                }
            }
        }
    };
    return node;
}

namespace detail {

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace detail

/// Self-adversarial negative sampling loss over scores f = -distance:
///   L_i = -log sig(gamma + f_pos_i) - sum_j w_ij log sig(-f_ij - gamma)
///   w_ij = softmax_j(alpha * f_ij), treated as constants in backward.
/// Returns the mean over the batch. pos: [B], neg: [B, n].
///
/// frozen_weights / weights_out support gradient checking: since no gradient
/// flows through w by design, the finite-difference oracle must evaluate the
/// loss with w pinned at its base value. weights_out receives the weights
/// actually used (row-major [B, n]); frozen_weights replaces the softmax.
template <typename S>
typename TapeT<S>::Ref self_adversarial_loss(TapeT<S>& tape, const typename TapeT<S>::Ref& pos,
                                             const typename TapeT<S>::Ref& neg, double gamma, double alpha,
                                             const std::vector<double>* frozen_weights = nullptr,
                                             std::vector<double>* weights_out = nullptr) {
    if (pos->value.rank() != 1 || neg->value.rank() != 2) fail("self_adversarial_loss: expected pos [B], neg [B, n]");
    const auto bsz = pos->value.dim(0);
    const auto n = neg->value.dim(1);
    if (neg->value.dim(0) != bsz) fail("self_adversarial_loss: batch size mismatch");
    if (n < 1) fail("self_adversarial_loss: empty negatives");
    if (gamma <= 0) fail("self_adversarial_loss: gamma must be positive");

    auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(bsz * n));
    if (frozen_weights) {
        if (frozen_weights->size() != weights->size()) fail("self_adversarial_loss: frozen weight shape mismatch");
        *weights = *frozen_weights;
    } else {
        for (std::int64_t i = 0; i < bsz; ++i) {
            const S* fr = neg->value.ptr() + i * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < n; ++j) mx = std::max(mx, alpha * static_cast<double>(fr[j]));
            double zsum = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double e = std::exp(alpha * static_cast<double>(fr[j]) - mx);
                (*weights)[static_cast<std::size_t>(i * n + j)] = e;
                zsum += e;
            }
            for (std::int64_t j = 0; j < n; ++j) (*weights)[static_cast<std::size_t>(i * n + j)] /= zsum;
        }
    }
    if (weights_out) *weights_out = *weights;

    double total = 0;
    for (std::int64_t i = 0; i < bsz; ++i) {
        const double p = static_cast<double>(pos->value.data[static_cast<std::size_t>(i)]);
        double li = detail::softplus(-(gamma + p));
        const S* fr = neg->value.ptr() + i * n;
        for (std::int64_t j = 0; j < n; ++j)
            li += (*weights)[static_cast<std::size_t>(i * n + j)] * detail::softplus(static_cast<double>(fr[j]) + gamma);
        total += li;
    }
    TensorT<S> out({1});
    out.data[0] = static_cast<S>(total / static_cast<double>(bsz));
    auto node = tape.make(std::move(out));
    auto pr = pos, nr = neg;
    node->backward = [pr, nr, weights, gamma, bsz, n](typename TapeT<S>::Node& self) {
        const double g = static_cast<double>(self.grad.data[0]) / static_cast<double>(bsz);
        for (std::int64_t i = 0; i < bsz; ++i) {
            const double p = static_cast<double>(pr->value.data[static_cast<std::size_t>(i)]);
            pr->grad.data[static_cast<std::size_t>(i)] -= static_cast<S>(g * detail::sigmoid(-(gamma + p)));
            const S* fr = nr->value.ptr() + i * n;
            S* dn = nr->grad.ptr() + i * n;
            for (std::int64_t j = 0; j < n; ++j) {
                const double w = (*weights)[static_cast<std::size_t>(i * n + j)];
                dn[j] += static_cast<S>(g * w * detail::sigmoid(static_cast<double>(fr[j]) + gamma));
            }
        }
    };
    return node;
}

/// Softmax weights of the loss, exposed for tests.
inline std::vector<double> adversarial_weights(const std::vector<double>& neg_scores, double alpha) {
    std::vector<double> w(neg_scores.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto f : neg_scores) mx = std::max(mx, alpha * f);
    double z = 0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::exp(alpha * neg_scores[j] - mx);
        z += w[j];
    }
    for (auto& x : w) x /= z;
    return w;
}

/// Index plan for one training batch against a matrix of unique-entity
/// encodings: positives index rows of enc, negatives replace one side.
struct BatchIndices {
    std::vector<std::int64_t> pos_head;  // [B] rows into enc
    std::vector<std::int64_t> pos_tail;  // [B]
    std::vector<std::int64_t> rel;       // [B] relation ids
    std::vector<std::int64_t> neg_head;  // [B*n] rows into enc
    std::vector<std::int64_t> neg_tail;  // [B*n]
    std::int64_t neg_per_pos = 0;
};

/// Mean self-adversarial loss of a batch. enc: [U, D] encodings of the
/// batch's unique entities. Backward reaches enc and the relation table.
/// frozen_weights / weights_out pass through to the loss (gradient checking).
template <typename S>
typename TapeT<S>::Ref batch_objective(TapeT<S>& tape, const typename TapeT<S>::Ref& enc,
                                       ParameterT<S>& relation_table, const BatchIndices& ix, const ScoreConfig& cfg,
                                       const std::vector<double>* frozen_weights = nullptr,
                                       std::vector<double>* weights_out = nullptr) {
    const auto bsz = static_cast<std::int64_t>(ix.pos_head.size());
    if (bsz == 0) fail("batch_objective: empty batch");
    const auto n = ix.neg_per_pos;
    if (n < 1) fail("batch_objective: need at least one negative per positive");
    if (static_cast<std::int64_t>(ix.neg_head.size()) != bsz * n || ix.neg_head.size() != ix.neg_tail.size() ||
        ix.pos_tail.size() != ix.pos_head.size() || ix.rel.size() != ix.pos_head.size())
        fail("batch_objective: index shape mismatch");
    const auto d = enc->value.dim(1);
    if (relation_table.value.dim(1) != 3 * d) fail("batch_objective: relation table width must be 3*D");

    auto rel_rows = embed_rows(tape, relation_table, ix.rel, {});
    auto rh = slice_cols(tape, rel_rows, 0, d);
    auto rt = slice_cols(tape, rel_rows, d, 2 * d);
    auto rr = slice_cols(tape, rel_rows, 2 * d, 3 * d);

    auto h_pos = gather_rows(tape, enc, ix.pos_head);
    auto t_pos = gather_rows(tape, enc, ix.pos_tail);
    auto pos_scores = triple_score(tape, h_pos, t_pos, rh, rt, rr, cfg.variant, cfg.norm, cfg.u);

    std::vector<std::int64_t> repeat_ix(static_cast<std::size_t>(bsz * n));
    for (std::int64_t i = 0; i < bsz; ++i)
        for (std::int64_t j = 0; j < n; ++j) repeat_ix[static_cast<std::size_t>(i * n + j)] = i;
    auto rh_neg = gather_rows(tape, rh, repeat_ix);
    auto rt_neg = gather_rows(tape, rt, repeat_ix);
    auto rr_neg = gather_rows(tape, rr, repeat_ix);
    auto h_neg = gather_rows(tape, enc, ix.neg_head);
    auto t_neg = gather_rows(tape, enc, ix.neg_tail);
    auto neg_flat = triple_score(tape, h_neg, t_neg, rh_neg, rt_neg, rr_neg, cfg.variant, cfg.norm, cfg.u);
    auto neg_scores = reshape_copy(tape, neg_flat, {bsz, n});

    return self_adversarial_loss(tape, pos_scores, neg_scores, cfg.gamma, cfg.alpha, frozen_weights, weights_out);
}

}  // namespace stargraph
