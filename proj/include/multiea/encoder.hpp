#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "multiea/diffmath.hpp"
#include "multiea/kg.hpp"

namespace multiea {

/// The three attention vectors shared by every KG.
struct AttentionVectors {
    Tensor head;
    Tensor relation;
    Tensor tail;
};

struct ModelParams {
    std::size_t dim = 0;
    std::size_t layer_count = 2;
    std::vector<Tensor> entity;   // one (entity_count x dim) table per KG
    std::vector<Tensor> relation; // one (relation_count x dim) table per KG
    AttentionVectors attention;

    std::size_t kg_count() const noexcept { return entity.size(); }

    /// Every trainable tensor in a fixed order (entity tables, relation tables, a_h, a_r, a_t).
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& t : entity) out.push_back(&t);
        for (auto& t : relation) out.push_back(&t);
        out.push_back(&attention.head);
        out.push_back(&attention.relation);
        out.push_back(&attention.tail);
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (auto& t : entity) out.push_back(&t);
        for (auto& t : relation) out.push_back(&t);
        out.push_back(&attention.head);
        out.push_back(&attention.relation);
        out.push_back(&attention.tail);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* t : tensors()) n += t->size();
        return n;
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.dim == b.dim && a.layer_count == b.layer_count && a.entity == b.entity &&
               a.relation == b.relation && a.attention.head == b.attention.head &&
               a.attention.relation == b.attention.relation && a.attention.tail == b.attention.tail;
    }
};

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)); a (rows x cols) table
/// uses fan_in = cols, fan_out = rows.
inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values) v = dist(rng);
    return t;
}

inline ModelParams init_params(std::span<const KnowledgeGraph> kgs, std::size_t dim, std::size_t layer_count,
                               std::mt19937_64& rng) {
    ModelParams p;
    p.dim = dim;
    p.layer_count = layer_count;
    for (const auto& kg : kgs) p.entity.push_back(xavier_uniform(kg.entity_count, dim, rng));
    for (const auto& kg : kgs) p.relation.push_back(xavier_uniform(kg.relation_count, dim, rng));
    p.attention.head = xavier_uniform(1, dim, rng);
    p.attention.relation = xavier_uniform(1, dim, rng);
    p.attention.tail = xavier_uniform(1, dim, rng);
    return p;
}

/// An augmented KG with its neighbor index flattened for the encoder: tuple t
/// belongs to entity heads[t] and points at (relations[t], neighbors[t]).
struct GraphContext {
    KnowledgeGraph kg;
    NeighborIndex index;
    SegmentSpec segments;
    std::vector<std::size_t> heads;
    std::vector<std::size_t> relations;
    std::vector<std::size_t> neighbors;

    std::size_t tuple_count() const noexcept { return heads.size(); }
};

/// Augments (if needed) and indexes a KG for encoding.
inline GraphContext make_graph_context(KnowledgeGraph kg) {
    GraphContext ctx;
    ctx.kg = kg.augmented() ? std::move(kg) : augment_self_relations(std::move(kg));
    ctx.index = build_neighbor_index(ctx.kg);
    ctx.segments.offsets = ctx.index.offsets;
    const auto n = ctx.index.tuples.size();
    ctx.heads.reserve(n);
    ctx.relations.reserve(n);
    ctx.neighbors.reserve(n);
    for (std::size_t i = 0; i < ctx.kg.entity_count; ++i)
        for (const auto& tup : ctx.index.segment(i)) {
            ctx.heads.push_back(i);
            ctx.relations.push_back(tup.relation);
            ctx.neighbors.push_back(tup.entity);
        }
    return ctx;
}

inline constexpr double kUnitTolerance = 1e-9;

/// Householder reflection I - 2 g g^T for a unit vector g.
inline Tensor relation_projection(std::span<const double> g) {
    if (std::abs(norm2(g) - 1.0) > kUnitTolerance) throw NumericError("relation_projection needs a unit vector");
    const auto d = g.size();
    Tensor w(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) w(i, j) = (i == j ? 1.0 : 0.0) - 2.0 * g[i] * g[j];
    return w;
}

/// (I - 2 g g^T) x without materializing the matrix.
inline void apply_householder(std::span<const double> g, std::span<const double> x, std::span<double> out) {
    const double s = 2.0 * dot(g, x);
    for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c] - s * g[c];
}

inline std::vector<double> apply_householder(std::span<const double> g, std::span<const double> x) {
    std::vector<double> out(x.size());
    apply_householder(g, x, out);
    return out;
}

/// ELU(a_h . h_i + a_r . g_k + a_t . (W_k h_j)).
inline double attention_logit(std::span<const double> h_i, std::span<const double> g_k, std::span<const double> h_j,
                              const AttentionVectors& a) {
    if (std::abs(norm2(g_k) - 1.0) > kUnitTolerance) throw NumericError("attention_logit needs a unit relation vector");
    const auto projected = apply_householder(g_k, h_j);
    return elu(dot(a.head.values, h_i) + dot(a.relation.values, g_k) + dot(a.tail.values, projected));
}

namespace detail {

/// Row t = W_{relations[t]} h_{neighbors[t]}.
inline Var householder_gather(Tape& tape, Var h, Var g, const GraphContext& ctx) {
    const auto& hv = tape.value(h);
    const auto& gv = tape.value(g);
    const auto n = ctx.tuple_count();
    Tensor out(n, hv.cols);
    for (std::size_t t = 0; t < n; ++t)
        apply_householder(gv.row(ctx.relations[t]), hv.row(ctx.neighbors[t]), out.row(t));
    return tape.record(std::move(out), [h, g, &ctx](Tape& tp, const Tensor& grad) {
        const auto& hv = tp.value(h);
        const auto& gv = tp.value(g);
        auto& gh = tp.grad_mut(h);
        auto& gg = tp.grad_mut(g);
        const auto d = hv.cols;
        for (std::size_t t = 0; t < ctx.tuple_count(); ++t) {
            const auto gk = gv.row(ctx.relations[t]);
            const auto hj = hv.row(ctx.neighbors[t]);
            const auto dp = grad.row(t);
            const double g_dot_h = dot(gk, hj);
            const double g_dot_dp = dot(gk, dp);
            auto dh = gh.row(ctx.neighbors[t]);
            auto dg = gg.row(ctx.relations[t]);
            for (std::size_t c = 0; c < d; ++c) {
                dh[c] += dp[c] - 2.0 * g_dot_dp * gk[c];
                dg[c] -= 2.0 * (g_dot_h * dp[c] + hj[c] * g_dot_dp);
            }
        }
    });
}

/// Pre-activation logits a_h . h_head + a_r . g_rel + a_t . P_t as a 1 x T row.
inline Var attention_scores(Tape& tape, Var h, Var g, Var projected, Var ah, Var ar, Var at, const GraphContext& ctx) {
    const auto& hv = tape.value(h);
    const auto& gv = tape.value(g);
    const auto& pv = tape.value(projected);
    const auto& ahv = tape.value(ah).values;
    const auto& arv = tape.value(ar).values;
    const auto& atv = tape.value(at).values;
    const auto n = ctx.tuple_count();

    // Head and relation terms are shared by many tuples; compute them once.
    std::vector<double> head_term(hv.rows), rel_term(gv.rows);
    for (std::size_t i = 0; i < hv.rows; ++i) head_term[i] = dot(ahv, hv.row(i));
    for (std::size_t k = 0; k < gv.rows; ++k) rel_term[k] = dot(arv, gv.row(k));

    Tensor out(1, n);
    for (std::size_t t = 0; t < n; ++t)
        out.values[t] = head_term[ctx.heads[t]] + rel_term[ctx.relations[t]] + dot(atv, pv.row(t));

    return tape.record(std::move(out), [h, g, projected, ah, ar, at, &ctx](Tape& tp, const Tensor& grad) {
        const auto& hv = tp.value(h);
        const auto& gv = tp.value(g);
        const auto& pv = tp.value(projected);
        const auto& ahv = tp.value(ah).values;
        const auto& arv = tp.value(ar).values;
        const auto& atv = tp.value(at).values;
        auto& gh = tp.grad_mut(h);
        auto& gg = tp.grad_mut(g);
        auto& gp = tp.grad_mut(projected);
        auto& gah = tp.grad_mut(ah);
        auto& gar = tp.grad_mut(ar);
        auto& gat = tp.grad_mut(at);
        const auto d = hv.cols;

        std::vector<double> head_acc(hv.rows, 0.0), rel_acc(gv.rows, 0.0);
        for (std::size_t t = 0; t < ctx.tuple_count(); ++t) {
            const double s = grad.values[t];
            head_acc[ctx.heads[t]] += s;
            rel_acc[ctx.relations[t]] += s;
            const auto p = pv.row(t);
            auto dp = gp.row(t);
            for (std::size_t c = 0; c < d; ++c) {
                dp[c] += s * atv[c];
                gat.values[c] += s * p[c];
            }
        }
        for (std::size_t i = 0; i < hv.rows; ++i) {
            const double s = head_acc[i];
            if (s == 0.0) continue;
            const auto hi = hv.row(i);
            auto dh = gh.row(i);
            for (std::size_t c = 0; c < d; ++c) {
                dh[c] += s * ahv[c];
                gah.values[c] += s * hi[c];
            }
        }
        for (std::size_t k = 0; k < gv.rows; ++k) {
            const double s = rel_acc[k];
            if (s == 0.0) continue;
            const auto gk = gv.row(k);
            auto dg = gg.row(k);
            for (std::size_t c = 0; c < d; ++c) {
                dg[c] += s * arv[c];
                gar.values[c] += s * gk[c];
            }
        }
    });
}

} // namespace detail

/// Tape handles for the shared attention vectors.
struct AttentionVars {
    Var head;
    Var relation;
    Var tail;
};

/// One aggregation layer on the tape. `relations` must already be row-normalized.
/// `ctx` must outlive the tape's backward pass.
inline Var encode_layer(Tape& tape, const GraphContext& ctx, Var h, Var relations, const AttentionVars& a) {
    const Var projected = detail::householder_gather(tape, h, relations, ctx);
    const Var scores = detail::attention_scores(tape, h, relations, projected, a.head, a.relation, a.tail, ctx);
    const Var beta = tape.elu(scores);
    const Var alpha = tape.segment_softmax(beta, ctx.segments);
    const Var aggregated = tape.segment_weighted_sum(alpha, projected, ctx.segments);
    return tape.elu(aggregated);
}

/// Value-only single layer: h'_i = ELU(sum over N_i of alpha * W_k h_j).
inline Tensor encode_layer(const GraphContext& ctx, const Tensor& h_in, const Tensor& relation_table,
                           const AttentionVectors& attention) {
    if (h_in.rows != ctx.kg.entity_count) throw NumericError("encode_layer: one row per entity expected");
    Tape tape;
    const Var h = tape.leaf(h_in);
    const Var g = tape.normalize_rows(tape.leaf(relation_table));
    const AttentionVars a{tape.leaf(attention.head), tape.leaf(attention.relation), tape.leaf(attention.tail)};
    return tape.value(encode_layer(tape, ctx, h, g, a));
}

/// Attention weights of one layer, flat over tuples (mainly for inspection and tests).
inline std::vector<double> attention_weights(const GraphContext& ctx, const Tensor& h_in, const Tensor& relation_table,
                                             const AttentionVectors& attention) {
    Tape tape;
    const Var h = tape.leaf(h_in);
    const Var g = tape.normalize_rows(tape.leaf(relation_table));
    const Var ah = tape.leaf(attention.head);
    const Var ar = tape.leaf(attention.relation);
    const Var at = tape.leaf(attention.tail);
    const Var projected = detail::householder_gather(tape, h, g, ctx);
    const Var scores = detail::attention_scores(tape, h, g, projected, ah, ar, at, ctx);
    return tape.value(tape.segment_softmax(tape.elu(scores), ctx.segments)).values;
}

/// Tape leaves for every parameter plus the normalized encoder outputs.
struct EncodedVars {
    std::vector<Var> entity;
    std::vector<Var> relation;
    AttentionVars attention;
    std::vector<Var> outputs;
};

inline EncodedVars encode(Tape& tape, std::span<const GraphContext> contexts, const ModelParams& params) {
    if (contexts.size() != params.kg_count()) throw NumericError("encode: KG count does not match parameters");
    EncodedVars vars;
    vars.attention = {tape.leaf(params.attention.head), tape.leaf(params.attention.relation),
                      tape.leaf(params.attention.tail)};
    for (std::size_t m = 0; m < contexts.size(); ++m) {
        const auto& ctx = contexts[m];
        if (params.entity[m].rows != ctx.kg.entity_count || params.relation[m].rows != ctx.kg.relation_count)
            throw NumericError("encode: parameter tables do not match KG " + std::to_string(m));
        const Var e = tape.leaf(params.entity[m]);
        const Var r = tape.leaf(params.relation[m]);
        vars.entity.push_back(e);
        vars.relation.push_back(r);
        Var h = e;
        if (params.layer_count > 0) {
            const Var g = tape.normalize_rows(r);
            for (std::size_t layer = 0; layer < params.layer_count; ++layer)
                h = encode_layer(tape, ctx, h, g, vars.attention);
        }
        vars.outputs.push_back(tape.normalize_rows(h));
    }
    return vars;
}

/// Per-KG unit-norm entity embeddings.
struct EncodedEmbeddings {
    std::vector<Tensor> tables;
};

inline EncodedEmbeddings encode(std::span<const GraphContext> contexts, const ModelParams& params) {
    Tape tape;
    const auto vars = encode(tape, contexts, params);
    EncodedEmbeddings out;
    for (auto v : vars.outputs) out.tables.push_back(tape.value(v));
    return out;
}

} // namespace multiea
