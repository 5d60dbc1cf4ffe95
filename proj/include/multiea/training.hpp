#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multiea/dataset.hpp"
#include "multiea/diffmath.hpp"
#include "multiea/encoder.hpp"
#include "multiea/errors.hpp"
#include "multiea/inference.hpp"
#include "multiea/metrics.hpp"

namespace multiea {

enum class Strategy { mean, anchor, each };

inline std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::mean: return "mean";
    case Strategy::anchor: return "anchor";
    case Strategy::each: return "each";
    }
    return "?";
}

inline std::optional<Strategy> parse_strategy(const std::string& name) {
    if (name == "mean") return Strategy::mean;
    if (name == "anchor") return Strategy::anchor;
    if (name == "each") return Strategy::each;
    return std::nullopt;
}

struct TrainConfig {
    Strategy strategy = Strategy::each;
    std::optional<std::size_t> anchor_index;
    double margin = 1.0;
    std::size_t negative_groups = 10;
    double learning_rate = 0.01;
    std::size_t dim = 256;
    std::size_t layer_count = 2;
    std::size_t patience = 10;
    std::size_t max_epochs = 500;
    std::uint64_t rng_seed = 42;
    bool ordered_pairs = false;
    double monitor_fraction = 0.1;

    /// Every violated constraint, in a stable order. Empty when valid.
    std::vector<std::string> validate(std::size_t kg_count = 0) const {
        std::vector<std::string> errors;
        if (!(margin > 0.0)) errors.emplace_back("margin must be > 0");
        if (negative_groups < 1) errors.emplace_back("negative_groups must be >= 1");
        if (!(learning_rate > 0.0)) errors.emplace_back("learning_rate must be > 0");
        if (dim < 1) errors.emplace_back("dim must be >= 1");
        if (layer_count < 1) errors.emplace_back("layer_count must be >= 1");
        if (patience < 1) errors.emplace_back("patience must be >= 1");
        if (max_epochs < 1) errors.emplace_back("max_epochs must be >= 1");
        if (!(monitor_fraction >= 0.0 && monitor_fraction < 1.0)) errors.emplace_back("monitor_fraction must lie in [0, 1)");
        if (strategy == Strategy::anchor && !anchor_index)
            errors.emplace_back("strategy 'anchor' requires anchor_index");
        if (anchor_index && kg_count > 0 && *anchor_index >= kg_count)
            errors.emplace_back("anchor_index " + std::to_string(*anchor_index) + " out of range for " +
                                std::to_string(kg_count) + " KGs");
        return errors;
    }
};

/// Embeddings of the M members of one tuple.
using EmbeddingTuple = std::vector<std::span<const double>>;

/// Gradients of a tuple distance, one vector per member.
using TupleGradient = std::vector<std::vector<double>>;

namespace detail {
inline void prepare_gradient(TupleGradient* grads, const EmbeddingTuple& embs) {
    if (!grads) return;
    grads->assign(embs.size(), std::vector<double>(embs.empty() ? 0 : embs[0].size(), 0.0));
}

/// Adds scale * (a - b) / ||a - b|| into `out` (nothing when a == b).
inline void add_unit_difference(std::span<const double> a, std::span<const double> b, double dist, double scale,
                                std::vector<double>& out) {
    if (dist == 0.0) return;
    for (std::size_t c = 0; c < a.size(); ++c) out[c] += scale * (a[c] - b[c]) / dist;
}
} // namespace detail

/// Sum of distances to the tuple mean.
inline double distance_mean(const EmbeddingTuple& embs, TupleGradient* grads = nullptr) {
    const auto m = embs.size();
    if (m < 2) throw ConfigError("distance needs at least two embeddings");
    const auto d = embs[0].size();
    const double inv_m = 1.0 / static_cast<double>(m);

    detail::prepare_gradient(grads, embs);
    std::vector<double> unit_sum(d, 0.0);
    const std::vector<double> origin(d, 0.0);
    std::vector<double> dev(d);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        // h_i - mean as an average of member differences, so equal members give an exact zero.
        std::fill(dev.begin(), dev.end(), 0.0);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t c = 0; c < d; ++c) dev[c] += embs[i][c] - embs[k][c];
        for (auto& v : dev) v *= inv_m;
        const double dist = norm2(dev);
        total += dist;
        if (grads) {
            detail::add_unit_difference(dev, origin, dist, 1.0, (*grads)[i]);
            detail::add_unit_difference(dev, origin, dist, 1.0, unit_sum);
        }
    }
    if (grads)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < d; ++c) (*grads)[i][c] -= unit_sum[c] / static_cast<double>(m);
    return total;
}

/// Sum of distances to the anchor member; the anchor's own term is zero.
inline double distance_anchor(const EmbeddingTuple& embs, std::size_t anchor, TupleGradient* grads = nullptr) {
    if (embs.size() < 2) throw ConfigError("distance needs at least two embeddings");
    if (anchor >= embs.size()) throw ConfigError("anchor index out of range");
    detail::prepare_gradient(grads, embs);
    double total = 0.0;
    for (std::size_t i = 0; i < embs.size(); ++i) {
        if (i == anchor) continue;
        const double dist = euclidean_distance(embs[i], embs[anchor]);
        total += dist;
        if (grads) {
            detail::add_unit_difference(embs[i], embs[anchor], dist, 1.0, (*grads)[i]);
            detail::add_unit_difference(embs[i], embs[anchor], dist, -1.0, (*grads)[anchor]);
        }
    }
    return total;
}

/// Sum of pairwise distances over unordered pairs (ordered pairs double it).
inline double distance_each(const EmbeddingTuple& embs, bool ordered_pairs = false, TupleGradient* grads = nullptr) {
    if (embs.size() < 2) throw ConfigError("distance needs at least two embeddings");
    detail::prepare_gradient(grads, embs);
    const double factor = ordered_pairs ? 2.0 : 1.0;
    double total = 0.0;
    for (std::size_t i = 0; i < embs.size(); ++i)
        for (std::size_t j = i + 1; j < embs.size(); ++j) {
            const double dist = euclidean_distance(embs[i], embs[j]);
            total += factor * dist;
            if (grads) {
                detail::add_unit_difference(embs[i], embs[j], dist, factor, (*grads)[i]);
                detail::add_unit_difference(embs[i], embs[j], dist, -factor, (*grads)[j]);
            }
        }
    return total;
}

/// The distance selected by a strategy.
struct TupleDistance {
    Strategy strategy = Strategy::each;
    std::size_t anchor = 0;
    bool ordered_pairs = false;

    double operator()(const EmbeddingTuple& embs, TupleGradient* grads = nullptr) const {
        switch (strategy) {
        case Strategy::mean: return distance_mean(embs, grads);
        case Strategy::anchor: return distance_anchor(embs, anchor, grads);
        case Strategy::each: return distance_each(embs, ordered_pairs, grads);
        }
        return 0.0;
    }
};

/// eta groups of M corrupted labels; the m-th label of a group keeps position m
/// and replaces every other position with a different entity of that KG.
template <typename Rng>
std::vector<AlignmentLabel> sample_negatives(const AlignmentLabel& label, std::span<const std::size_t> entity_counts,
                                             std::size_t eta, Rng& rng) {
    const auto m = label.size();
    if (entity_counts.size() != m) throw DataError("label arity does not match KG count");
    for (std::size_t i = 0; i < m; ++i)
        if (entity_counts[i] < 2)
            throw DataError("KG " + std::to_string(i) + " has fewer than two entities; cannot corrupt labels");
    std::vector<AlignmentLabel> out;
    out.reserve(eta * m);
    for (std::size_t g = 0; g < eta; ++g)
        for (std::size_t keep = 0; keep < m; ++keep) {
            AlignmentLabel corrupted = label;
            for (std::size_t i = 0; i < m; ++i) {
                if (i == keep) continue;
                std::uniform_int_distribution<std::size_t> pick(0, entity_counts[i] - 2);
                auto e = pick(rng);
                if (e >= label[i]) ++e;
                corrupted[i] = e;
            }
            out.push_back(std::move(corrupted));
        }
    return out;
}

/// Sum over positives p and their own negatives n of max(d(p) - d(n) + margin, 0).
inline double margin_loss(std::span<const double> positive, std::span<const double> negative,
                          std::size_t negatives_per_positive, double margin) {
    if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
    if (negative.size() != positive.size() * negatives_per_positive)
        throw DataError("margin_loss: each positive needs its own negatives");
    double total = 0.0;
    for (std::size_t p = 0; p < positive.size(); ++p)
        for (std::size_t n = 0; n < negatives_per_positive; ++n)
            total += std::max(positive[p] - negative[p * negatives_per_positive + n] + margin, 0.0);
    return total;
}

/// Margin ranking loss over encoder outputs as a tape node. `negatives` holds
/// negatives_per_positive corrupted labels per positive, contiguously.
inline Var alignment_loss(Tape& tape, const std::vector<Var>& outputs, const std::vector<AlignmentLabel>& positives,
                          const std::vector<AlignmentLabel>& negatives, std::size_t negatives_per_positive,
                          const TupleDistance& distance, double margin) {
    if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
    if (negatives.size() != positives.size() * negatives_per_positive)
        throw DataError("alignment_loss: each positive needs its own negatives");
    const auto m = outputs.size();
    std::vector<Tensor> grads;
    for (auto v : outputs) grads.emplace_back(tape.value(v).rows, tape.value(v).cols, 0.0);

    auto tuple_of = [&](const AlignmentLabel& label) {
        EmbeddingTuple t;
        for (std::size_t i = 0; i < m; ++i) t.push_back(tape.value(outputs[i]).row(label[i]));
        return t;
    };
    auto scatter = [&](const AlignmentLabel& label, const TupleGradient& g, double sign) {
        for (std::size_t i = 0; i < m; ++i) {
            auto dst = grads[i].row(label[i]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += sign * g[i][c];
        }
    };

    double total = 0.0;
    TupleGradient pos_grad, neg_grad;
    for (std::size_t p = 0; p < positives.size(); ++p) {
        const double dp = distance(tuple_of(positives[p]), &pos_grad);
        std::size_t active = 0;
        for (std::size_t n = 0; n < negatives_per_positive; ++n) {
            const auto& neg = negatives[p * negatives_per_positive + n];
            const double dn = distance(tuple_of(neg), &neg_grad);
            const double hinge = dp - dn + margin;
            if (hinge > 0.0) {
                total += hinge;
                ++active;
                scatter(neg, neg_grad, -1.0);
            }
        }
        if (active > 0) scatter(positives[p], pos_grad, static_cast<double>(active));
    }

    return tape.record(Tensor(1, 1, total), [outputs, grads = std::move(grads)](Tape& t, const Tensor& g) {
        const double s = g.values[0];
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            auto& dst = t.grad_mut(outputs[i]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst.values[c] += s * grads[i].values[c];
        }
    });
}

/// Adam with bias correction.
class Adam {
public:
    Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
        if (first_.empty()) {
            for (auto* p : params) {
                first_.emplace_back(p->size(), 0.0);
                second_.emplace_back(p->size(), 0.0);
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i]->values;
            const auto& g = grads[i]->values;
            auto& m = first_[i];
            auto& v = second_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> first_, second_;
};

struct TrainResult {
    ModelParams params;               // parameters at the best monitored epoch
    std::vector<double> loss_curve;   // per epoch
    std::vector<double> monitor_curve; // per epoch, empty when no monitor split
    std::vector<double> epoch_seconds;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
};

/// Full-batch trainer. Each epoch encodes every KG, scores the monitor split,
/// resamples negatives, and takes one Adam step on the margin loss.
class Trainer {
public:
    Trainer(const MultiKgDataset& dataset, TrainConfig config) : config_(std::move(config)), rng_(config_.rng_seed) {
        dataset.validate();
        if (auto errors = config_.validate(dataset.arity()); !errors.empty()) throw ConfigError(errors.front());
        if (dataset.train_labels.empty()) throw DataError("no training labels");
        for (const auto& kg : dataset.kgs) contexts_.push_back(make_graph_context(kg));
        entity_counts_ = dataset.entity_counts();
        names_ = dataset.names;
        distance_ = TupleDistance{config_.strategy, config_.anchor_index.value_or(0), config_.ordered_pairs};

        std::vector<KnowledgeGraph> augmented;
        for (const auto& ctx : contexts_) augmented.push_back(ctx.kg);
        params_ = init_params(augmented, config_.dim, config_.layer_count, rng_);
        split_monitor(dataset.train_labels);
        optimizer_.emplace(config_.learning_rate);
    }

    const ModelParams& params() const noexcept { return params_; }
    ModelParams& params() noexcept { return params_; }
    const std::vector<GraphContext>& contexts() const noexcept { return contexts_; }
    const std::vector<AlignmentLabel>& loss_labels() const noexcept { return loss_labels_; }
    const std::vector<AlignmentLabel>& monitor_labels() const noexcept { return monitor_labels_; }
    const TrainConfig& config() const noexcept { return config_; }

    struct EpochStats {
        double loss = 0.0;
        std::optional<double> monitor; // score of the parameters *before* the update
        double seconds = 0.0;
    };

    /// One full-batch epoch. Optionally returns the pre-update parameters via `snapshot`.
    EpochStats epoch(ModelParams* snapshot = nullptr) {
        try {
            return run_epoch(snapshot);
        } catch (const NumericError& e) {
            throw DivergenceError("numerical failure at epoch " + std::to_string(epochs_ + 1) + ": " + e.what(),
                                  epochs_ + 1);
        }
    }

private:
    EpochStats run_epoch(ModelParams* snapshot) {
        const auto start = std::chrono::steady_clock::now();
        EpochStats stats;
        Tape tape;
        const auto vars = encode(tape, contexts_, params_);

        if (!monitor_labels_.empty()) {
            EncodedEmbeddings encoded;
            for (auto v : vars.outputs) encoded.tables.push_back(tape.value(v));
            stats.monitor = monitor_score(encoded);
        }
        if (snapshot) *snapshot = params_;

        std::vector<AlignmentLabel> negatives;
        negatives.reserve(loss_labels_.size() * per_positive());
        for (const auto& label : loss_labels_) {
            auto batch = sample_negatives(label, entity_counts_, config_.negative_groups, rng_);
            std::move(batch.begin(), batch.end(), std::back_inserter(negatives));
        }
        const Var loss = alignment_loss(tape, vars.outputs, loss_labels_, negatives, per_positive(), distance_,
                                        config_.margin);
        stats.loss = tape.value(loss).values[0];
        if (!std::isfinite(stats.loss))
            throw DivergenceError("loss became non-finite at epoch " + std::to_string(epochs_ + 1), epochs_ + 1);
        tape.backward(loss);

        std::vector<const Tensor*> grads;
        for (auto v : vars.entity) grads.push_back(&tape.grad(v));
        for (auto v : vars.relation) grads.push_back(&tape.grad(v));
        grads.push_back(&tape.grad(vars.attention.head));
        grads.push_back(&tape.grad(vars.attention.relation));
        grads.push_back(&tape.grad(vars.attention.tail));
        for (const auto* g : grads)
            for (double x : g->values)
                if (!std::isfinite(x))
                    throw DivergenceError("gradient became non-finite at epoch " + std::to_string(epochs_ + 1),
                                          epochs_ + 1);
        optimizer_->step(params_.tensors(), grads);
        for (const auto* t : params_.tensors())
            for (double x : t->values)
                if (!std::isfinite(x))
                    throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epochs_ + 1),
                                          epochs_ + 1);
        ++epochs_;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return stats;
    }

public:
    /// Runs until the monitor stalls for `patience` epochs or max_epochs is
    /// reached. Returns the latest parameters scoring the best monitor value
    /// (the final ones when there is no monitor split).
    TrainResult run() {
        TrainResult result;
        double best = -1.0;
        std::size_t stale = 0;
        ModelParams before;
        for (std::size_t e = 0; e < config_.max_epochs; ++e) {
            const auto stats = epoch(&before);
            result.loss_curve.push_back(stats.loss);
            result.epoch_seconds.push_back(stats.seconds);
            if (stats.monitor) {
                result.monitor_curve.push_back(*stats.monitor);
                // Ties keep the newer parameters but do not reset patience.
                if (*stats.monitor >= best) {
                    result.params = std::move(before);
                    result.best_epoch = e;
                }
                if (*stats.monitor > best) {
                    best = *stats.monitor;
                    stale = 0;
                } else if (++stale >= config_.patience) {
                    result.stopped_early = true;
                    break;
                }
            }
        }
        result.epochs_run = epochs_;
        if (monitor_labels_.empty()) {
            result.params = params_;
            result.best_epoch = epochs_ == 0 ? 0 : epochs_ - 1;
        }
        return result;
    }

    /// M-Hits@1 (Hits@1 for two KGs) of the monitor labels against every entity
    /// not used by the loss labels.
    double monitor_score(const EncodedEmbeddings& encoded) const {
        const auto m = encoded.tables.size();
        auto sims = first_order_similarities(encoded.tables, monitor_pools_);
        if (m > 2) return m_hits_at_k(sims, monitor_labels_, m, 1).value;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (const auto& l : monitor_labels_) pairs.emplace_back(l[0], l[1]);
        return hits_at_k(sims.at({0, 1}), pairs, 1).hits;
    }

private:
    std::size_t per_positive() const { return config_.negative_groups * contexts_.size(); }

    void split_monitor(const std::vector<AlignmentLabel>& train) {
        const auto n = train.size();
        std::size_t monitor_count = 0;
        if (config_.monitor_fraction > 0.0 && n >= 2) {
            monitor_count = static_cast<std::size_t>(std::floor(config_.monitor_fraction * static_cast<double>(n) + 0.5));
            monitor_count = std::clamp<std::size_t>(monitor_count, 1, n - 1);
        }
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::mt19937_64 split_rng(config_.rng_seed ^ 0x9e3779b97f4a7c15ULL);
        std::shuffle(order.begin(), order.end(), split_rng);
        for (std::size_t i = 0; i < n; ++i) {
            auto& dst = i < monitor_count ? monitor_labels_ : loss_labels_;
            dst.push_back(train[order[i]]);
        }
        if (monitor_labels_.empty()) return;

        const auto m = contexts_.size();
        std::vector<std::vector<char>> used(m);
        for (std::size_t i = 0; i < m; ++i) used[i].assign(entity_counts_[i], 0);
        for (const auto& l : loss_labels_)
            for (std::size_t i = 0; i < m; ++i) used[i][l[i]] = 1;
        monitor_pools_.assign(m, {});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t e = 0; e < entity_counts_[i]; ++e)
                if (!used[i][e]) monitor_pools_[i].push_back(e);
    }

    TrainConfig config_;
    std::mt19937_64 rng_;
    std::vector<GraphContext> contexts_;
    std::vector<std::size_t> entity_counts_;
    std::vector<std::string> names_;
    TupleDistance distance_;
    ModelParams params_;
    std::vector<AlignmentLabel> loss_labels_;
    std::vector<AlignmentLabel> monitor_labels_;
    std::vector<std::vector<std::size_t>> monitor_pools_;
    std::optional<Adam> optimizer_;
    std::size_t epochs_ = 0;
};

inline TrainResult train(const MultiKgDataset& dataset, const TrainConfig& config) {
    Trainer trainer(dataset, config);
    return trainer.run();
}

} // namespace multiea
