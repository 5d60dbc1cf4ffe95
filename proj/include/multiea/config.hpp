#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "multiea/metrics.hpp"
#include "multiea/training.hpp"

namespace multiea {

/// Everything a run needs: dataset location plus training and evaluation settings.
struct RunConfig {
    std::string dataset;
    TrainConfig train;
    EvalOptions eval;
};

namespace detail {

template <typename T>
void read_count(const toml::table& tbl, const char* key, T& dst, std::vector<std::string>& errors,
                       const std::string& where) {
    const auto* node = tbl.get(key);
    if (!node) return;
    if (const auto* v = node->as_integer()) {
        if (v->get() < 0) {
            errors.push_back(where + "." + key + " must be non-negative");
            return;
        }
        dst = static_cast<T>(v->get());
    } else {
        errors.push_back(where + "." + key + " must be an integer");
    }
}

inline void read_real(const toml::table& tbl, const char* key, double& dst, std::vector<std::string>& errors,
                      const std::string& where) {
    const auto* node = tbl.get(key);
    if (!node) return;
    if (auto v = node->value<double>())
        dst = *v;
    else
        errors.push_back(where + "." + key + " must be a number");
}

inline void read_bool(const toml::table& tbl, const char* key, bool& dst, std::vector<std::string>& errors,
                      const std::string& where) {
    const auto* node = tbl.get(key);
    if (!node) return;
    if (const auto* v = node->as_boolean())
        dst = v->get();
    else
        errors.push_back(where + "." + key + " must be a boolean");
}

} // namespace detail

/// Checks evaluation settings, appending every problem found.
inline void validate_eval(const EvalOptions& eval, std::vector<std::string>& errors) {
    if (eval.ks.empty()) errors.emplace_back("eval.ks must not be empty");
    for (auto k : eval.ks)
        if (k == 0) errors.emplace_back("eval.ks entries must be >= 1");
    if (!(eval.first_order_weight >= 0.0 && eval.first_order_weight <= 1.0))
        errors.emplace_back("eval.gamma must lie in [0, 1]");
    if (!eval.weights.empty()) {
        try {
            EnhancementWeights{eval.weights}.validate();
        } catch (const ConfigError& e) {
            errors.emplace_back(std::string("eval.weights: ") + e.what());
        }
    }
}

/// Parses TOML text:
///
///   dataset = "path"
///   [train]  strategy, anchor_index, margin, negative_groups, learning_rate, dim,
///            layer_count, patience, max_epochs, seed, ordered_pairs, monitor_fraction
///   [eval]   infer, gamma, weights, ks, full_pool
///
/// Problems are appended to `errors`; parsing continues past them.
inline RunConfig parse_config(std::string_view text, std::vector<std::string>& errors,
                              const std::string& source = "config") {
    RunConfig cfg;
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
        errors.push_back(os.str());
        return cfg;
    }

    for (const auto& [key, node] : root) {
        const auto k = std::string(key.str());
        if (k != "dataset" && k != "train" && k != "eval") errors.push_back("unknown top-level key '" + k + "'");
    }
    if (const auto* ds = root.get("dataset")) {
        if (auto v = ds->value<std::string>())
            cfg.dataset = *v;
        else
            errors.emplace_back("dataset must be a string");
    }

    if (const auto* train = root["train"].as_table()) {
        static const std::vector<std::string> known{"strategy",      "anchor_index", "margin",     "negative_groups",
                                                    "learning_rate", "dim",          "layer_count", "patience",
                                                    "max_epochs",    "seed",         "ordered_pairs", "monitor_fraction"};
        for (const auto& [key, node] : *train)
            if (std::find(known.begin(), known.end(), std::string(key.str())) == known.end())
                errors.push_back("unknown key 'train." + std::string(key.str()) + "'");
        auto& t = cfg.train;
        if (const auto* s = train->get("strategy")) {
            auto name = s->value<std::string>();
            if (!name)
                errors.emplace_back("train.strategy must be a string");
            else if (auto parsed = parse_strategy(*name))
                t.strategy = *parsed;
            else
                errors.push_back("unknown strategy '" + *name + "' (expected mean, anchor or each)");
        }
        if (train->get("anchor_index")) {
            std::size_t anchor = 0;
            detail::read_count(*train, "anchor_index", anchor, errors, "train");
            t.anchor_index = anchor;
        }
        detail::read_real(*train, "margin", t.margin, errors, "train");
        detail::read_count(*train, "negative_groups", t.negative_groups, errors, "train");
        detail::read_real(*train, "learning_rate", t.learning_rate, errors, "train");
        detail::read_count(*train, "dim", t.dim, errors, "train");
        detail::read_count(*train, "layer_count", t.layer_count, errors, "train");
        detail::read_count(*train, "patience", t.patience, errors, "train");
        detail::read_count(*train, "max_epochs", t.max_epochs, errors, "train");
        detail::read_count(*train, "seed", t.rng_seed, errors, "train");
        detail::read_bool(*train, "ordered_pairs", t.ordered_pairs, errors, "train");
        detail::read_real(*train, "monitor_fraction", t.monitor_fraction, errors, "train");
    } else if (root.get("train")) {
        errors.emplace_back("train must be a table");
    }

    if (const auto* eval = root["eval"].as_table()) {
        static const std::vector<std::string> known{"infer", "gamma", "weights", "ks", "full_pool"};
        for (const auto& [key, node] : *eval)
            if (std::find(known.begin(), known.end(), std::string(key.str())) == known.end())
                errors.push_back("unknown key 'eval." + std::string(key.str()) + "'");
        auto& e = cfg.eval;
        detail::read_bool(*eval, "infer", e.enhance, errors, "eval");
        detail::read_real(*eval, "gamma", e.first_order_weight, errors, "eval");
        detail::read_bool(*eval, "full_pool", e.full_pool, errors, "eval");
        if (const auto* arr = eval->get_as<toml::array>("ks")) {
            e.ks.clear();
            for (const auto& item : *arr) {
                auto v = item.value<std::int64_t>();
                if (!v || *v < 1)
                    errors.emplace_back("eval.ks entries must be positive integers");
                else
                    e.ks.push_back(static_cast<std::size_t>(*v));
            }
        } else if (eval->get("ks")) {
            errors.emplace_back("eval.ks must be an array");
        }
        if (const auto* arr = eval->get_as<toml::array>("weights")) {
            for (const auto& item : *arr) {
                if (auto v = item.value<double>())
                    e.weights.push_back(*v);
                else
                    errors.emplace_back("eval.weights entries must be numbers");
            }
        } else if (eval->get("weights")) {
            errors.emplace_back("eval.weights must be an array");
        }
    } else if (root.get("eval")) {
        errors.emplace_back("eval must be a table");
    }
    return cfg;
}

/// Collects every problem in a fully assembled configuration.
inline std::vector<std::string> validate(const RunConfig& cfg, std::size_t kg_count = 0) {
    auto errors = cfg.train.validate(kg_count);
    validate_eval(cfg.eval, errors);
    if (!cfg.eval.weights.empty() && kg_count > 2 && cfg.eval.weights.size() != kg_count - 1)
        errors.push_back("eval.weights needs " + std::to_string(kg_count - 1) + " entries for " +
                         std::to_string(kg_count) + " KGs");
    return errors;
}

} // namespace multiea
