#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stargraph/tensor.hpp"

namespace stargraph {

/// When on, every op verifies its output is finite. Defaults to on in debug
/// builds; tests flip it explicitly.
inline bool& nan_checks() {
#ifdef NDEBUG
    static bool enabled = false;
#else
    static bool enabled = true;
#endif
    return enabled;
}

/// Reverse-mode tape for the fixed architecture. Ops append nodes in
/// creation order (a valid topological order), so backward is a single
/// reverse sweep. One tape per forward pass; parameters live outside and
/// accumulate grads across the sweep.
template <typename S>
class TapeT {
  public:
    struct Node {
        TensorT<S> value;
        TensorT<S> grad;
        std::function<void(Node&)> backward;  // may be empty (leaf constants)
    };
    using Ref = std::shared_ptr<Node>;

    Ref make(TensorT<S> value) {
        auto n = std::make_shared<Node>();
        if (nan_checks() && !value.all_finite()) fail("non-finite value produced by op");
        n->grad = TensorT<S>(value.shape);
        n->value = std::move(value);
        nodes_.push_back(n);
        return n;
    }

    /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. root must be
    /// scalar-valued.
    void backward(const Ref& root) {
        if (root->value.numel() != 1) fail("backward root must be scalar");
        root->grad.data[0] = S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if ((*it)->backward) (*it)->backward(**it);
    }

    std::size_t node_count() const { return nodes_.size(); }

  private:
    std::vector<Ref> nodes_;
};

namespace detail {

// y[r,:] += x[r,i] * w[i,:]   (x: [rows,in], w: [in,out], y: [rows,out])
template <typename S>
void matmul_acc(const S* x, const S* w, S* y, std::int64_t rows, std::int64_t in, std::int64_t out) {
    for (std::int64_t r = 0; r < rows; ++r) {
        S* yr = y + r * out;
        const S* xr = x + r * in;
        for (std::int64_t i = 0; i < in; ++i) {
            const S xv = xr[i];
            if (xv == S(0)) continue;
            const S* wi = w + i * out;
            for (std::int64_t o = 0; o < out; ++o) yr[o] += xv * wi[o];
        }
    }
}

// y[r,:] += g[r,:] * w^T. Transposes w once so the hot loop is the same
// vector-friendly axpy as matmul_acc.
template <typename S>
void matmul_bt_acc(const S* g, const S* w, S* y, std::int64_t rows, std::int64_t in, std::int64_t out) {
    std::vector<S> wt(static_cast<std::size_t>(in * out));
    for (std::int64_t i = 0; i < in; ++i)
        for (std::int64_t o = 0; o < out; ++o) wt[static_cast<std::size_t>(o * in + i)] = w[i * out + o];
    matmul_acc(g, wt.data(), y, rows, out, in);
}

// w[i,:] += sum_r x[r,i] * g[r,:]
template <typename S>
void matmul_at_acc(const S* x, const S* g, S* w, std::int64_t rows, std::int64_t in, std::int64_t out) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * in;
        const S* gr = g + r * out;
        for (std::int64_t i = 0; i < in; ++i) {
            const S xv = xr[i];
            if (xv == S(0)) continue;
            S* wi = w + i * out;
            for (std::int64_t o = 0; o < out; ++o) wi[o] += xv * gr[o];
        }
    }
}

template <typename S>
void check_rank2(const TensorT<S>& t, const char* what) {
    if (t.rank() != 2) fail(std::string(what) + ": expected rank-2 tensor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops. Each returns a new tape node; backward closures accumulate into input
// node grads and parameter grads.
// ---------------------------------------------------------------------------

/// Promotes a parameter to a tape leaf (value copy; backward accumulates).
template <typename S>
typename TapeT<S>::Ref from_param(TapeT<S>& tape, ParameterT<S>& p) {
    auto out = tape.make(p.value);
    ParameterT<S>* pp = &p;
    out->backward = [pp](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) pp->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
    };
    return out;
}

/// Row gather from an embedding table. Masked rows are zero and receive no
/// gradient; ids in masked slots may be -1.
template <typename S>
typename TapeT<S>::Ref embed_rows(TapeT<S>& tape, ParameterT<S>& table, std::vector<std::int64_t> ids,
                                  std::vector<std::uint8_t> mask) {
    detail::check_rank2(table.value, "embed_rows table");
    const auto v = table.value.dim(0);
    const auto d = table.value.dim(1);
    const auto n = static_cast<std::int64_t>(ids.size());
    if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != n) fail("embed_rows: mask length mismatch");
    TensorT<S> out({n, d});
    for (std::int64_t i = 0; i < n; ++i) {
        const bool on = mask.empty() || mask[static_cast<std::size_t>(i)];
        if (!on) continue;
        const auto id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v) fail("embed_rows: id " + std::to_string(id) + " out of range [0, " + std::to_string(v) + ")");
        const S* src = table.value.ptr() + id * d;
        S* dst = out.ptr() + i * d;
        std::copy(src, src + d, dst);
    }
    auto node = tape.make(std::move(out));
    ParameterT<S>* tp = &table;
    node->backward = [tp, ids = std::move(ids), mask = std::move(mask), d](typename TapeT<S>::Node& self) {
        const auto n2 = static_cast<std::int64_t>(ids.size());
        for (std::int64_t i = 0; i < n2; ++i) {
            const bool on = mask.empty() || mask[static_cast<std::size_t>(i)];
            if (!on) continue;
            const S* g = self.grad.ptr() + i * d;
            S* dst = tp->grad.ptr() + ids[static_cast<std::size_t>(i)] * d;
            for (std::int64_t c = 0; c < d; ++c) dst[c] += g[c];
        }
    };
    return node;
}

/// y = x W + b applied to the last dimension; leading dims are flattened.
template <typename S>
typename TapeT<S>::Ref linear(TapeT<S>& tape, const typename TapeT<S>::Ref& x, ParameterT<S>& w, ParameterT<S>& b) {
    detail::check_rank2(w.value, "linear weight");
    const auto in = w.value.dim(0);
    const auto out_dim = w.value.dim(1);
    if (x->value.rank() < 1 || x->value.shape.back() != in) fail("linear: input/weight shape mismatch");
    if (b.value.numel() != out_dim) fail("linear: bias shape mismatch");
    const auto rows = x->value.numel() / in;

    auto out_shape = x->value.shape;
    out_shape.back() = out_dim;
    TensorT<S> y(out_shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        S* yr = y.ptr() + r * out_dim;
        for (std::int64_t o = 0; o < out_dim; ++o) yr[o] = b.value.data[static_cast<std::size_t>(o)];
    }
    detail::matmul_acc(x->value.ptr(), w.value.ptr(), y.ptr(), rows, in, out_dim);

    auto node = tape.make(std::move(y));
    ParameterT<S>* wp = &w;
    ParameterT<S>* bp = &b;
    auto xin = x;
    node->backward = [wp, bp, xin, rows, in, out_dim](typename TapeT<S>::Node& self) {
        detail::matmul_bt_acc(self.grad.ptr(), wp->value.ptr(), xin->grad.ptr(), rows, in, out_dim);
        detail::matmul_at_acc(xin->value.ptr(), self.grad.ptr(), wp->grad.ptr(), rows, in, out_dim);
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* g = self.grad.ptr() + r * out_dim;
            for (std::int64_t o = 0; o < out_dim; ++o) bp->grad.data[static_cast<std::size_t>(o)] += g[o];
        }
    };
    return node;
}

template <typename S>
typename TapeT<S>::Ref add(TapeT<S>& tape, const typename TapeT<S>::Ref& a, const typename TapeT<S>::Ref& b) {
    if (a->value.shape != b->value.shape) fail("add: shape mismatch");
    TensorT<S> y(a->value.shape);
    for (std::int64_t i = 0; i < y.numel(); ++i)
        y.data[static_cast<std::size_t>(i)] = a->value.data[static_cast<std::size_t>(i)] + b->value.data[static_cast<std::size_t>(i)];
    auto node = tape.make(std::move(y));
    auto ar = a;
    auto br = b;
    node->backward = [ar, br](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
            ar->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
            br->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
        }
    };
    return node;
}

/// Adds table[slot_type[l]] to every sequence position l, broadcast over the
/// batch. x: [B, L, D], table: [T, D].
template <typename S>
typename TapeT<S>::Ref add_type_rows(TapeT<S>& tape, const typename TapeT<S>::Ref& x, ParameterT<S>& table,
                                     std::vector<std::int32_t> slot_type) {
    if (x->value.rank() != 3) fail("add_type_rows: expected [B, L, D]");
    const auto bsz = x->value.dim(0);
    const auto len = x->value.dim(1);
    const auto d = x->value.dim(2);
    if (static_cast<std::int64_t>(slot_type.size()) != len) fail("add_type_rows: slot_type length mismatch");
    for (const auto t : slot_type)
        if (t < 0 || t >= table.value.dim(0)) fail("add_type_rows: type out of range");

    TensorT<S> y = x->value;
    for (std::int64_t bi = 0; bi < bsz; ++bi)
        for (std::int64_t l = 0; l < len; ++l) {
            const S* row = table.value.ptr() + slot_type[static_cast<std::size_t>(l)] * d;
            S* dst = y.ptr() + (bi * len + l) * d;
            for (std::int64_t c = 0; c < d; ++c) dst[c] += row[c];
        }
    auto node = tape.make(std::move(y));
    ParameterT<S>* tp = &table;
    auto xin = x;
    node->backward = [tp, xin, bsz, len, d, slot_type = std::move(slot_type)](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            xin->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
        for (std::int64_t bi = 0; bi < bsz; ++bi)
            for (std::int64_t l = 0; l < len; ++l) {
                const S* g = self.grad.ptr() + (bi * len + l) * d;
                S* dst = tp->grad.ptr() + slot_type[static_cast<std::size_t>(l)] * d;
                for (std::int64_t c = 0; c < d; ++c) dst[c] += g[c];
            }
    };
    return node;
}

/// Concatenates along dim 1: [B, La, D] ++ [B, Lb, D] -> [B, La+Lb, D].
template <typename S>
typename TapeT<S>::Ref concat_dim1(TapeT<S>& tape, const typename TapeT<S>::Ref& a, const typename TapeT<S>::Ref& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3) fail("concat_dim1: expected rank-3 tensors");
    if (a->value.dim(0) != b->value.dim(0) || a->value.dim(2) != b->value.dim(2)) fail("concat_dim1: shape mismatch");
    const auto bsz = a->value.dim(0);
    const auto la = a->value.dim(1);
    const auto lb = b->value.dim(1);
    const auto d = a->value.dim(2);
    TensorT<S> y({bsz, la + lb, d});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        std::copy(a->value.ptr() + bi * la * d, a->value.ptr() + (bi + 1) * la * d, y.ptr() + bi * (la + lb) * d);
        std::copy(b->value.ptr() + bi * lb * d, b->value.ptr() + (bi + 1) * lb * d, y.ptr() + bi * (la + lb) * d + la * d);
    }
    auto node = tape.make(std::move(y));
    auto ar = a;
    auto br = b;
    node->backward = [ar, br, bsz, la, lb, d](typename TapeT<S>::Node& self) {
        for (std::int64_t bi = 0; bi < bsz; ++bi) {
            const S* g = self.grad.ptr() + bi * (la + lb) * d;
            S* ga = ar->grad.ptr() + bi * la * d;
            S* gb = br->grad.ptr() + bi * lb * d;
            for (std::int64_t i = 0; i < la * d; ++i) ga[i] += g[i];
            for (std::int64_t i = 0; i < lb * d; ++i) gb[i] += g[la * d + i];
        }
    };
    return node;
}

/// Layer normalization over the last dimension.
template <typename S>
typename TapeT<S>::Ref layer_norm(TapeT<S>& tape, const typename TapeT<S>::Ref& x, ParameterT<S>& gain,
                                  ParameterT<S>& bias, double eps = 1e-5) {
    const auto d = x->value.shape.back();
    if (gain.value.numel() != d || bias.value.numel() != d) fail("layer_norm: gain/bias shape mismatch");
    const auto rows = x->value.numel() / d;

    TensorT<S> y(x->value.shape);
    auto xhat = std::make_shared<TensorT<S>>(x->value.shape);
    auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x->value.ptr() + r * d;
        double mu = 0;
        for (std::int64_t c = 0; c < d; ++c) mu += static_cast<double>(xr[c]);
        mu /= static_cast<double>(d);
        double var = 0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double t = static_cast<double>(xr[c]) - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = static_cast<S>(is);
        S* hr = xhat->ptr() + r * d;
        S* yr = y.ptr() + r * d;
        for (std::int64_t c = 0; c < d; ++c) {
            hr[c] = static_cast<S>((static_cast<double>(xr[c]) - mu) * is);
            yr[c] = gain.value.data[static_cast<std::size_t>(c)] * hr[c] + bias.value.data[static_cast<std::size_t>(c)];
        }
    }
    auto node = tape.make(std::move(y));
    ParameterT<S>* gp = &gain;
    ParameterT<S>* bp = &bias;
    auto xin = x;
    node->backward = [gp, bp, xin, xhat, inv_std, rows, d](typename TapeT<S>::Node& self) {
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* g = self.grad.ptr() + r * d;
            const S* hr = xhat->ptr() + r * d;
            S* dx = xin->grad.ptr() + r * d;
            double m1 = 0, m2 = 0;
            for (std::int64_t c = 0; c < d; ++c) {
                const double dh = static_cast<double>(g[c]) * static_cast<double>(gp->value.data[static_cast<std::size_t>(c)]);
                m1 += dh;
                m2 += dh * static_cast<double>(hr[c]);
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            const double is = static_cast<double>((*inv_std)[static_cast<std::size_t>(r)]);
            for (std::int64_t c = 0; c < d; ++c) {
                const double dh = static_cast<double>(g[c]) * static_cast<double>(gp->value.data[static_cast<std::size_t>(c)]);
                dx[c] += static_cast<S>(is * (dh - m1 - static_cast<double>(hr[c]) * m2));
                gp->grad.data[static_cast<std::size_t>(c)] += g[c] * hr[c];
                bp->grad.data[static_cast<std::size_t>(c)] += g[c];
            }
        }
    };
    return node;
}

template <typename S>
struct AttentionWeightsT {
    ParameterT<S>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
};

/// Single-layer multi-head scaled-dot-product self-attention over [B, L, D]
/// with masked positions excluded from the softmax (additive -inf). Every
/// sequence must keep at least one unmasked position. probs_out, when given,
/// receives the attention matrix [B, H, L, L] (tests assert its row sums).
template <typename S>
typename TapeT<S>::Ref multihead_self_attention(TapeT<S>& tape, const typename TapeT<S>::Ref& x,
                                                const std::vector<std::uint8_t>& mask, const AttentionWeightsT<S>& wts,
                                                int heads, TensorT<S>* probs_out = nullptr) {
    if (x->value.rank() != 3) fail("attention: expected [B, L, D]");
    const auto bsz = x->value.dim(0);
    const auto len = x->value.dim(1);
    const auto d = x->value.dim(2);
    if (static_cast<std::int64_t>(mask.size()) != bsz * len) fail("attention: mask length mismatch");
    if (heads <= 0 || d % heads != 0) fail("attention: head count must divide the model dim");
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        bool any = false;
        for (std::int64_t l = 0; l < len && !any; ++l) any = mask[static_cast<std::size_t>(bi * len + l)] != 0;
        if (!any) fail("attention: all positions masked in sequence " + std::to_string(bi));
    }

    const auto rows = bsz * len;
    auto q = std::make_shared<TensorT<S>>(x->value.shape);
    auto k = std::make_shared<TensorT<S>>(x->value.shape);
    auto v = std::make_shared<TensorT<S>>(x->value.shape);
    auto proj = [&](ParameterT<S>* w, ParameterT<S>* b, TensorT<S>& dst) {
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < d; ++c) dst.ptr()[r * d + c] = b->value.data[static_cast<std::size_t>(c)];
        detail::matmul_acc(x->value.ptr(), w->value.ptr(), dst.ptr(), rows, d, d);
    };
    proj(wts.wq, wts.bq, *q);
    proj(wts.wk, wts.bk, *k);
    proj(wts.wv, wts.bv, *v);

    // probs: [B, H, L, L]
    auto probs = std::make_shared<TensorT<S>>(std::vector<std::int64_t>{bsz, heads, len, len});
    auto attn_out = std::make_shared<TensorT<S>>(x->value.shape);  // heads concatenated
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        const std::uint8_t* mrow = mask.data() + bi * len;
        for (int h = 0; h < heads; ++h) {
            const S* qb = q->ptr() + bi * len * d + h * dh;
            const S* kb = k->ptr() + bi * len * d + h * dh;
            const S* vb = v->ptr() + bi * len * d + h * dh;
            S* pb = probs->ptr() + ((bi * heads + h) * len) * len;
            S* ob = attn_out->ptr() + bi * len * d + h * dh;
            for (std::int64_t i = 0; i < len; ++i) {
                S* prow = pb + i * len;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::int64_t j = 0; j < len; ++j) {
                    if (!mrow[j]) {
                        prow[j] = S(0);
                        continue;
                    }
                    double s = 0;
                    const S* qi = qb + i * d;
                    const S* kj = kb + j * d;
                    for (std::int64_t c = 0; c < dh; ++c) s += static_cast<double>(qi[c]) * static_cast<double>(kj[c]);
                    s *= scale;
                    prow[j] = static_cast<S>(s);
                    mx = std::max(mx, s);
                }
                double z = 0;
                for (std::int64_t j = 0; j < len; ++j) {
                    if (!mrow[j]) continue;
                    const double e = std::exp(static_cast<double>(prow[j]) - mx);
                    prow[j] = static_cast<S>(e);
                    z += e;
                }
                const double iz = 1.0 / z;
                S* orow = ob + i * d;
                for (std::int64_t c = 0; c < dh; ++c) orow[c] = S(0);
                for (std::int64_t j = 0; j < len; ++j) {
                    if (!mrow[j]) continue;
                    prow[j] = static_cast<S>(static_cast<double>(prow[j]) * iz);
                    const S pj = prow[j];
                    const S* vj = vb + j * d;
                    for (std::int64_t c = 0; c < dh; ++c) orow[c] += pj * vj[c];
                }
            }
        }
    }

    if (probs_out) *probs_out = *probs;

    TensorT<S> y(x->value.shape);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < d; ++c) y.ptr()[r * d + c] = wts.bo->value.data[static_cast<std::size_t>(c)];
    detail::matmul_acc(attn_out->ptr(), wts.wo->value.ptr(), y.ptr(), rows, d, d);

    auto node = tape.make(std::move(y));
    auto xin = x;
    auto wcopy = wts;
    auto mask_copy = mask;
    node->backward = [xin, wcopy, mask_copy, q, k, v, probs, attn_out, bsz, len, d, dh, heads, scale, rows](
                         typename TapeT<S>::Node& self) {
        // dY -> d(attn_out), dWo, dbo
        TensorT<S> d_attn({bsz, len, d});
        detail::matmul_bt_acc(self.grad.ptr(), wcopy.wo->value.ptr(), d_attn.ptr(), rows, d, d);
        detail::matmul_at_acc(attn_out->ptr(), self.grad.ptr(), wcopy.wo->grad.ptr(), rows, d, d);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < d; ++c) wcopy.bo->grad.data[static_cast<std::size_t>(c)] += self.grad.ptr()[r * d + c];

        TensorT<S> dq({bsz, len, d}), dk({bsz, len, d}), dv({bsz, len, d});
        std::vector<S> dp(static_cast<std::size_t>(len) * static_cast<std::size_t>(len));
        for (std::int64_t bi = 0; bi < bsz; ++bi) {
            const std::uint8_t* mrow = mask_copy.data() + bi * len;
            for (int h = 0; h < heads; ++h) {
                const S* qb = q->ptr() + bi * len * d + h * dh;
                const S* kb = k->ptr() + bi * len * d + h * dh;
                const S* vb = v->ptr() + bi * len * d + h * dh;
                const S* pb = probs->ptr() + ((bi * heads + h) * len) * len;
                const S* gob = d_attn.ptr() + bi * len * d + h * dh;
                S* dqb = dq.ptr() + bi * len * d + h * dh;
                S* dkb = dk.ptr() + bi * len * d + h * dh;
                S* dvb = dv.ptr() + bi * len * d + h * dh;
                // dP = dO V^T ; dV += P^T dO
                for (std::int64_t i = 0; i < len; ++i) {
                    const S* go = gob + i * d;
                    const S* prow = pb + i * len;
                    S* dprow = dp.data() + i * len;
                    for (std::int64_t j = 0; j < len; ++j) {
                        if (!mrow[j]) {
                            dprow[j] = S(0);
                            continue;
                        }
                        const S* vj = vb + j * d;
                        double acc = 0;
                        for (std::int64_t c = 0; c < dh; ++c) acc += static_cast<double>(go[c]) * static_cast<double>(vj[c]);
                        dprow[j] = static_cast<S>(acc);
                        S* dvj = dvb + j * d;
                        const S pj = prow[j];
                        for (std::int64_t c = 0; c < dh; ++c) dvj[c] += pj * go[c];
                    }
                }
                // dS = P o (dP - rowdot); dQ = dS K * scale; dK = dS^T Q * scale
                for (std::int64_t i = 0; i < len; ++i) {
                    const S* prow = pb + i * len;
                    S* dprow = dp.data() + i * len;
                    double rd = 0;
                    for (std::int64_t j = 0; j < len; ++j)
                        if (mrow[j]) rd += static_cast<double>(dprow[j]) * static_cast<double>(prow[j]);
                    const S* qi = qb + i * d;
                    S* dqi = dqb + i * d;
                    for (std::int64_t j = 0; j < len; ++j) {
                        if (!mrow[j]) continue;
                        const double ds = static_cast<double>(prow[j]) * (static_cast<double>(dprow[j]) - rd) * scale;
                        if (ds == 0) continue;
                        const S dss = static_cast<S>(ds);
                        const S* kj = kb + j * d;
                        S* dkj = dkb + j * d;
                        for (std::int64_t c = 0; c < dh; ++c) {
                            dqi[c] += dss * kj[c];
                            dkj[c] += dss * qi[c];
                        }
                    }
                }
            }
        }
        // Back through the three projections.
        auto unproj = [&](const TensorT<S>& dz, ParameterT<S>* w, ParameterT<S>* b) {
            detail::matmul_bt_acc(dz.ptr(), w->value.ptr(), xin->grad.ptr(), rows, d, d);
            detail::matmul_at_acc(xin->value.ptr(), dz.ptr(), w->grad.ptr(), rows, d, d);
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < d; ++c) b->grad.data[static_cast<std::size_t>(c)] += dz.ptr()[r * d + c];
        };
        unproj(dq, wcopy.wq, wcopy.bq);
        unproj(dk, wcopy.wk, wcopy.bk);
        unproj(dv, wcopy.wv, wcopy.bv);
    };
    return node;
}

template <typename S>
typename TapeT<S>::Ref relu(TapeT<S>& tape, const typename TapeT<S>::Ref& x) {
    TensorT<S> y(x->value.shape);
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const S v = x->value.data[static_cast<std::size_t>(i)];
        y.data[static_cast<std::size_t>(i)] = v > S(0) ? v : S(0);
    }
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            if (xin->value.data[static_cast<std::size_t>(i)] > S(0))
                xin->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
    };
    return node;
}

/// Inverted dropout: kept values scale by 1/(1-p) during training; identity
/// in eval mode (the input ref is returned unchanged).
template <typename S>
typename TapeT<S>::Ref dropout(TapeT<S>& tape, const typename TapeT<S>::Ref& x, double p, bool training, Rng* rng) {
    if (p < 0 || p >= 1) fail("dropout: p must be in [0, 1)");
    if (!training || p == 0) return x;
    if (!rng) fail("dropout: rng required in training mode");
    const auto n = x->value.numel();
    auto keep = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(n));
    const S inv = static_cast<S>(1.0 / (1.0 - p));
    TensorT<S> y(x->value.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        const bool kept = uniform_real(*rng) >= p;
        (*keep)[static_cast<std::size_t>(i)] = kept;
        y.data[static_cast<std::size_t>(i)] = kept ? x->value.data[static_cast<std::size_t>(i)] * inv : S(0);
    }
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin, keep, inv](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            if ((*keep)[static_cast<std::size_t>(i)])
                xin->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)] * inv;
    };
    return node;
}

/// Mean over unmasked sequence positions: [B, L, D] -> [B, D]. Every row
/// must keep at least one unmasked position.
template <typename S>
typename TapeT<S>::Ref mean_pool(TapeT<S>& tape, const typename TapeT<S>::Ref& x, const std::vector<std::uint8_t>& mask) {
    if (x->value.rank() != 3) fail("mean_pool: expected [B, L, D]");
    const auto bsz = x->value.dim(0);
    const auto len = x->value.dim(1);
    const auto d = x->value.dim(2);
    if (static_cast<std::int64_t>(mask.size()) != bsz * len) fail("mean_pool: mask length mismatch");

    TensorT<S> y({bsz, d});
    auto counts = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(bsz), 0);
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
        std::int64_t cnt = 0;
        for (std::int64_t l = 0; l < len; ++l) {
            if (!mask[static_cast<std::size_t>(bi * len + l)]) continue;
            ++cnt;
            const S* row = x->value.ptr() + (bi * len + l) * d;
            for (std::int64_t c = 0; c < d; ++c) acc[static_cast<std::size_t>(c)] += static_cast<double>(row[c]);
        }
        if (cnt == 0) fail("mean_pool: all positions masked in sequence " + std::to_string(bi));
        (*counts)[static_cast<std::size_t>(bi)] = cnt;
        S* yr = y.ptr() + bi * d;
        for (std::int64_t c = 0; c < d; ++c) yr[c] = static_cast<S>(acc[static_cast<std::size_t>(c)] / static_cast<double>(cnt));
    }
    auto node = tape.make(std::move(y));
    auto xin = x;
    auto mask_copy = mask;
    node->backward = [xin, mask_copy, counts, bsz, len, d](typename TapeT<S>::Node& self) {
        for (std::int64_t bi = 0; bi < bsz; ++bi) {
            const S inv = static_cast<S>(1.0 / static_cast<double>((*counts)[static_cast<std::size_t>(bi)]));
            const S* g = self.grad.ptr() + bi * d;
            for (std::int64_t l = 0; l < len; ++l) {
                if (!mask_copy[static_cast<std::size_t>(bi * len + l)]) continue;
                S* dst = xin->grad.ptr() + (bi * len + l) * d;
                for (std::int64_t c = 0; c < d; ++c) dst[c] += g[c] * inv;
            }
        }
    };
    return node;
}

/// Copying reshape (same element count).
template <typename S>
typename TapeT<S>::Ref reshape_copy(TapeT<S>& tape, const typename TapeT<S>::Ref& x, std::vector<std::int64_t> shape) {
    TensorT<S> y(std::move(shape));
    if (y.numel() != x->value.numel()) fail("reshape_copy: element count mismatch");
    y.data = x->value.data;
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin](typename TapeT<S>::Node& self) {
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            xin->grad.data[static_cast<std::size_t>(i)] += self.grad.data[static_cast<std::size_t>(i)];
    };
    return node;
}

/// Row gather from a tape node: y[j] = x[idx[j]].
template <typename S>
typename TapeT<S>::Ref gather_rows(TapeT<S>& tape, const typename TapeT<S>::Ref& x, std::vector<std::int64_t> idx) {
    detail::check_rank2(x->value, "gather_rows input");
    const auto n = x->value.dim(0);
    const auto d = x->value.dim(1);
    const auto m = static_cast<std::int64_t>(idx.size());
    TensorT<S> y({m, d});
    for (std::int64_t j = 0; j < m; ++j) {
        const auto i = idx[static_cast<std::size_t>(j)];
        if (i < 0 || i >= n) fail("gather_rows: index out of range");
        std::copy(x->value.ptr() + i * d, x->value.ptr() + (i + 1) * d, y.ptr() + j * d);
    }
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin, idx = std::move(idx), d](typename TapeT<S>::Node& self) {
        const auto m2 = static_cast<std::int64_t>(idx.size());
        for (std::int64_t j = 0; j < m2; ++j) {
            const S* g = self.grad.ptr() + j * d;
            S* dst = xin->grad.ptr() + idx[static_cast<std::size_t>(j)] * d;
            for (std::int64_t c = 0; c < d; ++c) dst[c] += g[c];
        }
    };
    return node;
}

/// Column slice of a rank-2 tensor: y = x[:, lo:hi].
template <typename S>
typename TapeT<S>::Ref slice_cols(TapeT<S>& tape, const typename TapeT<S>::Ref& x, std::int64_t lo, std::int64_t hi) {
    detail::check_rank2(x->value, "slice_cols input");
    const auto n = x->value.dim(0);
    const auto c = x->value.dim(1);
    if (lo < 0 || hi > c || lo >= hi) fail("slice_cols: bad range");
    const auto w = hi - lo;
    TensorT<S> y({n, w});
    for (std::int64_t r = 0; r < n; ++r)
        std::copy(x->value.ptr() + r * c + lo, x->value.ptr() + r * c + hi, y.ptr() + r * w);
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin, lo, w, c](typename TapeT<S>::Node& self) {
        const auto n2 = self.grad.dim(0);
        for (std::int64_t r = 0; r < n2; ++r) {
            const S* g = self.grad.ptr() + r * w;
            S* dst = xin->grad.ptr() + r * c + lo;
            for (std::int64_t i = 0; i < w; ++i) dst[i] += g[i];
        }
    };
    return node;
}

/// Scalar sum of squares (test utility).
template <typename S>
typename TapeT<S>::Ref sum_squares(TapeT<S>& tape, const typename TapeT<S>::Ref& x) {
    double acc = 0;
    for (std::int64_t i = 0; i < x->value.numel(); ++i) {
        const double v = static_cast<double>(x->value.data[static_cast<std::size_t>(i)]);
        acc += v * v;
    }
    TensorT<S> y({1});
    y.data[0] = static_cast<S>(acc);
    auto node = tape.make(std::move(y));
    auto xin = x;
    node->backward = [xin](typename TapeT<S>::Node& self) {
        const S g = self.grad.data[0];
        for (std::int64_t i = 0; i < xin->value.numel(); ++i)
            xin->grad.data[static_cast<std::size_t>(i)] += S(2) * xin->value.data[static_cast<std::size_t>(i)] * g;
    };
    return node;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker. Runs closures on a double-precision
// tape (the same op templates production instantiates with float) and
// compares the analytic gradient against the central difference
// (f(x+eps) - f(x-eps)) / 2eps per parameter entry. Relative error uses
// |a - n| / max(1, |a|, |n|).
//
// Entries that fail at the probe eps are re-probed at eps/8 and eps/64:
// a wrong backward keeps its error at every step size, while ReLU/L1 kink
// crossings inside the probe interval shrink superlinearly. The reported
// error is the best probe's.
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0;
    std::int64_t worst_index = -1;
    double analytic = 0;
    double numeric = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0;
    double max_rel_err = 0;
    bool pass = true;
};

using CheckClosure = std::function<TapeT<double>::Ref(TapeT<double>&)>;

inline double eval_closure(const CheckClosure& f) {
    TapeT<double> tape;
    auto root = f(tape);
    if (root->value.numel() != 1) fail("grad_check: closure must be scalar-valued");
    const double v = root->value.data[0];
    if (!std::isfinite(v)) fail("grad_check: non-finite loss");
    return v;
}

inline GradCheckReport grad_check(const CheckClosure& f, const std::vector<ParameterT<double>*>& params,
                                  double eps = 1e-3, double tol = 1e-4) {
    GradCheckReport report;
    report.tolerance = tol;

    for (auto* p : params) p->zero_grad();
    {
        TapeT<double> tape;
        auto root = f(tape);
        if (root->value.numel() != 1) fail("grad_check: closure must be scalar-valued");
        if (!std::isfinite(root->value.data[0])) fail("grad_check: non-finite loss");
        tape.backward(root);
    }

    for (auto* p : params) {
        GradCheckEntry entry;
        entry.param = p->name;
        for (std::int64_t i = 0; i < p->numel(); ++i) {
            auto& slot = p->value.data[static_cast<std::size_t>(i)];
            const double saved = slot;
            const double analytic = p->grad.data[static_cast<std::size_t>(i)];
            double best_rel = std::numeric_limits<double>::infinity();
            double best_numeric = 0;
            for (const double shrink : {1.0, 8.0, 64.0}) {
                const double e = eps / shrink;
                slot = saved + e;
                const double fp = eval_closure(f);
                slot = saved - e;
                const double fm = eval_closure(f);
                slot = saved;
                const double numeric = (fp - fm) / (2 * e);
                const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
                const double rel = std::fabs(analytic - numeric) / denom;
                if (rel < best_rel) {
                    best_rel = rel;
                    best_numeric = numeric;
                }
                if (best_rel <= tol) break;
            }
            if (best_rel > entry.max_rel_err) {
                entry.max_rel_err = best_rel;
                entry.worst_index = i;
                entry.analytic = analytic;
                entry.numeric = best_numeric;
            }
        }
        entry.pass = entry.max_rel_err <= tol;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace stargraph
