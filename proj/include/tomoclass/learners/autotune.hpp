#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "../eval.hpp"
#include "../features.hpp"
#include "../hpo.hpp"
#include "../rng.hpp"
#include "ensemble.hpp"
#include "model.hpp"
#include "train.hpp"

namespace tomoclass {

struct Holdout
{
    FeatureTable fit;
    FeatureTable val;
};

//! Seeded random partition; `val_frac` of the rows (at least one) go to val.
inline Holdout random_holdout(FeatureTable const& t, double val_frac, std::uint64_t seed)
{
    if (!(val_frac > 0 && val_frac < 1))
        throw ParameterError("validation fraction must be in (0,1)");
    if (t.n_rows() < 2)
        throw DataError("need at least two rows for a validation holdout");
    std::vector<std::size_t> idx(t.n_rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed, 0x686f6c64);
    for (std::size_t i = idx.size() - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.below(i + 1)]);
    auto n_val = std::size_t(std::llround(val_frac * double(t.n_rows())));
    n_val = std::clamp<std::size_t>(n_val, 1, t.n_rows() - 1);
    std::vector<std::size_t> val(idx.begin(), idx.begin() + std::ptrdiff_t(n_val));
    std::vector<std::size_t> fit(idx.begin() + std::ptrdiff_t(n_val), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(fit.begin(), fit.end());
    return {t.subset(std::span<std::size_t const>(fit)),
            t.subset(std::span<std::size_t const>(val))};
}

//! Accuracy or balanced accuracy of `model` on `val`.
inline double score_model(Model const& model, FeatureTable const& val,
                          EnsembleObjective objective, unsigned workers = 1)
{
    auto const pred = predict(model, val, workers);
    std::vector<int> truth(val.labels.begin(), val.labels.end());
    std::vector<int> classes = model.classes;
    for (int l : truth)
        if (std::find(classes.begin(), classes.end(), l) == classes.end())
            classes.push_back(l);
    std::sort(classes.begin(), classes.end());
    auto const rep = classification_report(confusion_matrix(truth, pred.labels, classes));
    return objective == EnsembleObjective::ACCURACY ? rep.accuracy
                                                    : rep.balanced_accuracy;
}

//! GBM parameters from a decoded (learning_rate, max_depth, n_rounds) point.
inline GbmParams gbm_params_from(std::vector<double> const& v, GbmParams base = {})
{
    base.learning_rate = v.at(0);
    base.tree.max_depth = std::size_t(v.at(1));
    base.n_rounds = std::size_t(v.at(2));
    return base;
}

//! Forest parameters from a decoded (n_trees, max_depth) point.
inline ForestParams forest_params_from(std::vector<double> const& v,
                                       ForestParams base = {})
{
    base.n_trees = std::size_t(v.at(0));
    base.tree.max_depth = std::size_t(v.at(1));
    return base;
}

enum class TunedLearner : std::uint8_t
{
    GBM,
    FOREST
};

struct TunedModel
{
    Model model;  //!< refit on the full training table
    TuneResult search;
    ParamSpace space;
};

/*!
 * Tune GBM or forest hyperparameters by Bayesian optimisation against
 * validation accuracy (negated) on a seeded holdout of `train`, then refit
 * the best configuration on all of `train`.
 */
inline TunedModel tune_learner(FeatureTable const& train, TunedLearner learner,
                               ParamSpace const& space, std::size_t budget,
                               std::uint64_t seed,
                               EnsembleObjective objective = EnsembleObjective::ACCURACY,
                               double val_frac = 0.2, unsigned workers = 0)
{
    auto const split = random_holdout(train, val_frac, seed);
    auto fit_model = [&](FeatureTable const& t, std::vector<double> const& v) {
        if (learner == TunedLearner::GBM)
            return train_gbm(t, gbm_params_from(v), seed, workers);
        return train_forest(t, forest_params_from(v), seed, workers);
    };
    Objective f = [&](std::vector<double> const& v) {
        return -score_model(fit_model(split.fit, v), split.val, objective, workers);
    };
    TunedModel out{{}, tune(f, space, budget, seed), space};
    out.model = fit_model(train, out.search.best_params);
    return out;
}

}  // namespace tomoclass
