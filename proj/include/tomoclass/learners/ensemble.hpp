#pragma once

#include <algorithm>
#include <vector>

#include "../eval.hpp"
#include "model.hpp"

namespace tomoclass {

enum class EnsembleObjective : std::uint8_t
{
    ACCURACY,
    BALANCED_ACCURACY
};

inline constexpr std::size_t max_ensemble_steps = 25;

namespace detail {

//! Accuracy or balanced accuracy of argmax(sum) against truth.
inline double ensemble_objective(std::vector<double> const& sum,
                                 std::vector<int> const& classes,
                                 std::vector<std::size_t> const& truth,
                                 EnsembleObjective obj)
{
    std::size_t const K = classes.size();
    std::size_t const n = truth.size();
    std::vector<std::uint64_t> support(K, 0), hit(K, 0);
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        double const* p = sum.data() + i * K;
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (p[k] > p[best])
                best = k;
        ++support[truth[i]];
        if (best == truth[i])
        {
            ++hit[truth[i]];
            ++correct;
        }
    }
    if (obj == EnsembleObjective::ACCURACY)
        return double(correct) / double(n);
    double acc = 0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < K; ++k)
        if (support[k])
        {
            acc += double(hit[k]) / double(support[k]);
            ++m;
        }
    return acc / double(m);
}

}  // namespace detail

struct EnsembleResult
{
    Model model;
    double objective = 0;
    std::vector<std::size_t> selection;  //!< candidate index chosen at each step
};

/*!
 * Greedy forward selection with replacement over probability-averaged
 * ensembles. Each step adds the candidate that maximises the objective on
 * `val` (ties to the lowest index); the search stops after 25 steps or when
 * no addition strictly improves the objective. Weights are selection counts
 * over the number of steps.
 */
inline EnsembleResult greedy_ensemble(std::vector<Model> const& models,
                                      FeatureTable const& val,
                                      EnsembleObjective objective,
                                      unsigned workers = 1)
{
    if (models.empty())
        throw ParameterError("ensemble needs at least one candidate model");
    if (val.empty())
        throw DataError("ensemble validation table is empty");
    std::vector<int> classes;
    for (auto const& m : models)
    {
        if (m.schema_hash != models.front().schema_hash)
            throw SchemaError("ensemble candidates disagree on feature schema");
        classes.insert(classes.end(), m.classes.begin(), m.classes.end());
    }
    for (auto l : val.labels)
        classes.push_back(l);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::size_t const K = classes.size(), n = val.n_rows();
    auto class_index = [&](int c) {
        return std::size_t(std::lower_bound(classes.begin(), classes.end(), c)
                           - classes.begin());
    };

    // Candidate probabilities aligned to the union class list.
    std::vector<std::vector<double>> proba(models.size(), std::vector<double>(n * K, 0.0));
    for (std::size_t m = 0; m < models.size(); ++m)
    {
        auto const pred = predict(models[m], val, workers);
        for (std::size_t k = 0; k < pred.classes.size(); ++k)
        {
            std::size_t const ck = class_index(pred.classes[k]);
            for (std::size_t i = 0; i < n; ++i)
                proba[m][i * K + ck] = pred.probabilities[i * pred.classes.size() + k];
        }
    }
    std::vector<std::size_t> truth(n);
    for (std::size_t i = 0; i < n; ++i)
        truth[i] = class_index(val.labels[i]);

    std::vector<double> sum(n * K, 0.0), trial(n * K);
    EnsembleResult res;
    double current = -1.0;
    for (std::size_t step = 0; step < max_ensemble_steps; ++step)
    {
        double best = -1.0;
        std::size_t best_m = 0;
        for (std::size_t m = 0; m < models.size(); ++m)
        {
            for (std::size_t j = 0; j < n * K; ++j)
                trial[j] = sum[j] + proba[m][j];
            double const s = detail::ensemble_objective(trial, classes, truth, objective);
            if (s > best)
            {
                best = s;
                best_m = m;
            }
        }
        if (step > 0 && !(best > current))
            break;
        current = best;
        res.selection.push_back(best_m);
        for (std::size_t j = 0; j < n * K; ++j)
            sum[j] += proba[best_m][j];
    }
    res.objective = current;

    std::vector<std::size_t> count(models.size(), 0);
    for (auto m : res.selection)
        ++count[m];
    Model& e = res.model;
    e.kind = ModelKind::ENSEMBLE;
    e.classes = classes;
    e.schema_hash = models.front().schema_hash;
    e.n_features = models.front().n_features;
    e.seed = models.front().seed;
    for (std::size_t m = 0; m < models.size(); ++m)
        if (count[m])
        {
            e.members.push_back(models[m]);
            e.weights.push_back(double(count[m]) / double(res.selection.size()));
        }
    return res;
}

}  // namespace tomoclass
