#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "../features.hpp"
#include "../parallel.hpp"
#include "../rng.hpp"
#include "model.hpp"
#include "params.hpp"
#include "tree.hpp"

namespace tomoclass {

//---------------------------------------------------------------------------//
// Multinomial log-loss helpers
//---------------------------------------------------------------------------//

//! -log softmax(scores)[true_k]
inline double multinomial_log_loss(std::span<double const> scores,
                                   std::size_t true_k)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores)
        mx = std::max(mx, s);
    double z = 0;
    for (double s : scores)
        z += std::exp(s - mx);
    return std::log(z) + mx - scores[true_k];
}

//! Negative gradient of the log-loss: r_k = 1{k = true_k} - softmax_k.
inline void multinomial_residuals(std::span<double const> scores,
                                  std::size_t true_k, std::span<double> out)
{
    detail::softmax(scores, out);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = (k == true_k ? 1.0 : 0.0) - out[k];
}

namespace detail {

struct EncodedLabels
{
    std::vector<int> classes;
    std::vector<std::uint16_t> index;  //!< class index per row
    std::vector<double> weight;        //!< per-row class weight
};

inline EncodedLabels encode_labels(FeatureTable const& t, bool balanced)
{
    if (t.empty())
        throw DataError("training table is empty");
    EncodedLabels e;
    e.classes = class_list(t);
    std::vector<std::size_t> freq(e.classes.size(), 0);
    e.index.reserve(t.n_rows());
    for (auto l : t.labels)
    {
        auto it = std::lower_bound(e.classes.begin(), e.classes.end(), int(l));
        auto const k = std::uint16_t(it - e.classes.begin());
        e.index.push_back(k);
        ++freq[k];
    }
    e.weight.assign(t.n_rows(), 1.0);
    if (balanced)
    {
        double const n = double(t.n_rows()), K = double(e.classes.size());
        for (std::size_t i = 0; i < t.n_rows(); ++i)
            e.weight[i] = n / (K * double(freq[e.index[i]]));
    }
    return e;
}

inline Model model_header(ModelKind kind, FeatureTable const& t,
                          std::vector<int> classes, std::uint64_t seed)
{
    Model m;
    m.kind = kind;
    m.classes = std::move(classes);
    m.schema_hash = t.schema_hash();
    m.seed = seed;
    m.n_features = std::uint32_t(t.n_features());
    return m;
}

inline DecisionTree grow_class_tree(SortedColumns const& cols,
                                    FeatureTable const& table,
                                    EncodedLabels const& enc,
                                    TreeParams const& p,
                                    std::span<std::uint32_t const> counts,
                                    Rng& rng)
{
    std::vector<double> w(enc.weight.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = enc.weight[i] * counts[i];
    GiniCriterion crit{enc.index, w, enc.classes.size()};
    TreeBuilder<GiniCriterion> builder(cols, table, crit, p, counts, &rng);
    return builder.build();
}

}  // namespace detail

//---------------------------------------------------------------------------//
// CART
//---------------------------------------------------------------------------//

inline Model train_tree(FeatureTable const& train, TreeParams const& p,
                        std::uint64_t seed)
{
    p.validate();
    auto const enc = detail::encode_labels(train, p.balanced_class_weights);
    auto const cols = detail::SortedColumns::build(train);
    std::vector<std::uint32_t> counts(train.n_rows(), 1);
    Rng rng(seed, 0);
    Model m = detail::model_header(ModelKind::TREE, train, enc.classes, seed);
    m.trees.push_back(detail::grow_class_tree(cols, train, enc, p, counts, rng));
    return m;
}

//---------------------------------------------------------------------------//
// Random forest
//---------------------------------------------------------------------------//

/*!
 * Bagged CART ensemble. Tree t draws its bootstrap sample and feature
 * subsets from stream_seed(seed, t), so the model does not depend on the
 * number of workers or the order trees finish in.
 */
inline Model train_forest(FeatureTable const& train, ForestParams const& p,
                          std::uint64_t seed, unsigned workers = 0)
{
    p.validate();
    auto const enc = detail::encode_labels(train, p.tree.balanced_class_weights);
    auto const cols = detail::SortedColumns::build(train);
    std::size_t const n = train.n_rows();
    Model m = detail::model_header(ModelKind::FOREST, train, enc.classes, seed);
    m.trees.resize(p.n_trees);
    parallel_for(p.n_trees, workers, [&](std::size_t t) {
        Rng rng(stream_seed(seed, t));
        std::vector<std::uint32_t> counts(n, p.bootstrap ? 0 : 1);
        if (p.bootstrap)
            for (std::size_t i = 0; i < n; ++i)
                ++counts[rng.below(n)];
        m.trees[t] = detail::grow_class_tree(cols, train, enc, p.tree, counts, rng);
    });
    return m;
}

//---------------------------------------------------------------------------//
// Gradient boosting
//---------------------------------------------------------------------------//

struct GbmTrace
{
    //! Mean training log-loss; entry 0 is before the first round.
    std::vector<double> train_loss;
};

/*!
 * Multiclass softmax boosting from zero initial scores.
 *
 * Each round fits one least-squares regression tree per class to the
 * residuals r_ik = 1{y_i = k} - p_ik, sets leaves by a Newton step and adds
 * learning_rate times the tree output to F_k. With subsample < 1 each round
 * draws round(subsample * n) rows without replacement from
 * stream_seed(seed, round).
 */
inline Model train_gbm(FeatureTable const& train, GbmParams const& p,
                       std::uint64_t seed, unsigned workers = 0,
                       GbmTrace* trace = nullptr)
{
    p.validate();
    auto const enc = detail::encode_labels(train, p.tree.balanced_class_weights);
    std::size_t const K = enc.classes.size();
    if (K < 2)
        throw DomainError("gradient boosting needs at least two classes");
    auto const cols = detail::SortedColumns::build(train);
    std::size_t const n = train.n_rows();

    Model m = detail::model_header(ModelKind::GBM, train, enc.classes, seed);
    m.learning_rate = p.learning_rate;
    m.n_rounds = std::uint32_t(p.n_rounds);
    m.trees.resize(p.n_rounds * K);

    std::vector<double> scores(n * K, 0.0);
    std::vector<double> residual(K * n);  // class-major
    std::vector<double> prob(K);
    std::vector<std::uint32_t> counts(n, 1);
    std::vector<double> weight(n);

    auto mean_loss = [&] {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            s += multinomial_log_loss({scores.data() + i * K, K}, enc.index[i]);
        return s / double(n);
    };
    if (trace)
        trace->train_loss.assign(1, mean_loss());

    std::vector<std::uint32_t> order(n);
    for (std::size_t round = 0; round < p.n_rounds; ++round)
    {
        if (p.subsample < 1.0)
        {
            auto const take = std::max<std::size_t>(
                1, std::size_t(std::llround(p.subsample * double(n))));
            std::iota(order.begin(), order.end(), std::uint32_t{0});
            Rng rng(stream_seed(seed, round));
            for (std::size_t i = 0; i < take; ++i)
                std::swap(order[i], order[i + rng.below(n - i)]);
            std::fill(counts.begin(), counts.end(), 0u);
            for (std::size_t i = 0; i < take; ++i)
                counts[order[i]] = 1;
        }
        for (std::size_t i = 0; i < n; ++i)
        {
            multinomial_residuals({scores.data() + i * K, K}, enc.index[i], prob);
            for (std::size_t k = 0; k < K; ++k)
                residual[k * n + i] = prob[k];
            weight[i] = enc.weight[i] * counts[i];
        }

        parallel_for(K, workers, [&](std::size_t k) {
            detail::ResidualCriterion crit{
                std::span<double const>(residual.data() + k * n, n), weight, K};
            Rng rng(stream_seed(seed, (round + 1) * K + k) ^ 0x6762'6d74ULL);
            detail::TreeBuilder<detail::ResidualCriterion> builder(
                cols, train, crit, p.tree, counts, &rng);
            m.trees[round * K + k] = builder.build();
        });

        for (std::size_t k = 0; k < K; ++k)
        {
            auto const& tree = m.trees[round * K + k];
            for (std::size_t i = 0; i < n; ++i)
                scores[i * K + k] += p.learning_rate * tree.predict(train.row(i))[0];
        }
        if (trace)
            trace->train_loss.push_back(mean_loss());
    }
    return m;
}

}  // namespace tomoclass
