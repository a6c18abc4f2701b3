#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "../error.hpp"

namespace tomoclass {

//! How many features a node may examine.
struct FeatureCandidates
{
    enum class Mode : std::uint8_t
    {
        ALL,
        SQRT,
        COUNT
    };
    Mode mode = Mode::ALL;
    std::size_t count = 0;

    static FeatureCandidates all() { return {}; }
    static FeatureCandidates sqrt() { return {Mode::SQRT, 0}; }
    static FeatureCandidates fixed(std::size_t n) { return {Mode::COUNT, n}; }

    std::size_t resolve(std::size_t n_features) const
    {
        switch (mode)
        {
            case Mode::ALL: return n_features;
            case Mode::SQRT:
                return std::max<std::size_t>(
                    1, std::size_t(std::sqrt(double(n_features)) + 1e-9));
            case Mode::COUNT:
                return std::clamp<std::size_t>(count, 1, n_features);
        }
        return n_features;
    }
};

struct TreeParams
{
    std::size_t max_depth = 12;
    std::size_t min_samples_leaf = 5;
    FeatureCandidates features = FeatureCandidates::all();
    //! Inverse-frequency class weights (off by default).
    bool balanced_class_weights = false;

    void validate() const
    {
        if (max_depth < 1)
            throw ParameterError("max_depth must be >= 1");
        if (min_samples_leaf < 1)
            throw ParameterError("min_samples_leaf must be >= 1");
    }
};

struct ForestParams
{
    std::size_t n_trees = 200;
    TreeParams tree{12, 5, FeatureCandidates::sqrt(), false};
    bool bootstrap = true;

    void validate() const
    {
        if (n_trees < 1)
            throw ParameterError("n_trees must be >= 1");
        tree.validate();
    }
};

struct GbmParams
{
    std::size_t n_rounds = 100;
    double learning_rate = 0.1;
    TreeParams tree{6, 5, FeatureCandidates::all(), false};
    double subsample = 1.0;

    void validate() const
    {
        if (n_rounds < 1)
            throw ParameterError("n_rounds must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw ParameterError("learning_rate must be in (0, 1]");
        if (!(subsample > 0.0 && subsample <= 1.0))
            throw ParameterError("subsample must be in (0, 1]");
        tree.validate();
    }
};

}  // namespace tomoclass
