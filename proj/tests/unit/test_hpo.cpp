#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "support/test_util.hpp"

namespace tomoclass {
namespace {

// Independent dense GP posterior on standardized targets.
GpPrediction eigen_posterior(std::vector<Observation> const& obs, std::vector<double> const& x,
                             KernelSettings const& ks, double noise)
{
    auto const n = Eigen::Index(obs.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y(i) = obs[std::size_t(i)].y;
    double const mu = y.mean();
    double const sd = std::sqrt((y.array() - mu).square().mean());
    double const scale = sd > 0 ? sd : 1.0;
    Eigen::VectorXd z = (y.array() - mu) / scale;
    auto kern = [&](std::vector<double> const& a, std::vector<double> const& b) {
        double d2 = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            d2 += std::pow((a[i] - b[i]) / ks.lengthscale, 2);
        return ks.signal_variance * std::exp(-0.5 * d2);
    };
    Eigen::MatrixXd K(n, n);
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        k(i) = kern(x, obs[std::size_t(i)].x);
        for (Eigen::Index j = 0; j < n; ++j)
            K(i, j) = kern(obs[std::size_t(i)].x, obs[std::size_t(j)].x);
    }
    K.diagonal().array() += noise;
    Eigen::LDLT<Eigen::MatrixXd> const ldlt(K);
    double const m = k.dot(ldlt.solve(z));
    double const v = ks.signal_variance - k.dot(ldlt.solve(k));
    return {mu + scale * m, std::max(v, 0.0) * scale * scale};
}

TEST(Gp, MatchesDenseOracle)
{
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial)
    {
        std::size_t const dim = 1 + rng.below(3);
        std::size_t const n = 3 + rng.below(10);
        std::vector<Observation> obs(n);
        for (auto& o : obs)
        {
            o.x.resize(dim);
            for (auto& v : o.x)
                v = rng.uniform();
            o.y = rng.normal() * 3.0 + 1.0;
        }
        KernelSettings ks;
        ks.lengthscale = 0.3;
        ks.noise_variance = 1e-4;
        GpPosterior const gp(obs, ks);
        for (int q = 0; q < 5; ++q)
        {
            std::vector<double> x(dim);
            for (auto& v : x)
                v = rng.uniform();
            auto const got = gp.predict(x);
            auto const want = eigen_posterior(obs, x, ks, gp.noise_variance());
            EXPECT_NEAR(got.mean, want.mean, 1e-6 * (1 + std::abs(want.mean)));
            EXPECT_NEAR(got.variance, want.variance, 1e-6 * gp.prior_variance());
        }
    }
}

TEST(Gp, InterpolatesAndBoundsVariance)
{
    std::vector<Observation> obs{{{0.1}, 1.0}, {{0.5}, -2.0}, {{0.9}, 0.5}};
    GpPosterior const gp(obs, KernelSettings{});
    for (auto const& o : obs)
    {
        auto const p = gp.predict(o.x);
        EXPECT_NEAR(p.mean, o.y, 1e-3);
        EXPECT_LT(p.variance, 1e-3 * gp.prior_variance());
    }
    Rng rng(1);
    for (int i = 0; i < 1000; ++i)
    {
        std::vector<double> x{rng.uniform(-1.0, 2.0)};
        auto const p = gp.predict(x);
        EXPECT_GE(p.variance, 0.0);
        EXPECT_LE(p.variance, gp.prior_variance() * (1 + 1e-12));
    }
}

TEST(Gp, DuplicatePointsEscalateJitter)
{
    std::vector<Observation> obs{{{0.5}, 1.0}, {{0.5}, 1.0}, {{0.5}, 1.0}};
    KernelSettings ks;
    ks.noise_variance = 0;
    GpPosterior const gp(obs, ks);
    EXPECT_GE(gp.noise_variance(), gp_jitter_floor);
    EXPECT_THROW(GpPosterior({}, ks), ParameterError);
}

TEST(ExpectedImprovement, NonnegativeAndZeroAtCertainty)
{
    Rng rng(11);
    for (int i = 0; i < 100'000; ++i)
    {
        double const m = rng.uniform(-10, 10), s = rng.uniform(0, 5), b = rng.uniform(-10, 10);
        ASSERT_GE(expected_improvement(m, s, b), 0.0);
    }
    EXPECT_EQ(expected_improvement(1.0, 0.0, 0.5), 0.0);
    EXPECT_EQ(expected_improvement(0.5, 0.0, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(expected_improvement(0.2, 0.0, 0.5), 0.3);
}

TEST(ExpectedImprovement, MatchesMonteCarlo)
{
    EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0), 0.39894, 1e-3);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    double const mean = 0.3, sd = 0.7, best = 0.5;
    double acc = 0;
    int const n = 1'000'000;
    for (int i = 0; i < n; ++i)
        acc += std::max(best - (mean + sd * nd(gen)), 0.0);
    EXPECT_NEAR(expected_improvement(mean, sd, best), acc / n, 2e-3);
}

TEST(ParamSpace, EncodeDecodeRoundTrip)
{
    ParamSpace const s({{"a", ParamKind::REAL, -1, 3},
                        {"b", ParamKind::LOG_REAL, 1e-3, 10},
                        {"c", ParamKind::INT, 2, 9}});
    for (double u : {0.0, 0.13, 0.5, 0.77, 1.0})
    {
        EXPECT_NEAR(s.encode(0, s.decode(0, u)), u, 1e-12);
        EXPECT_NEAR(s.encode(1, s.decode(1, u)), u, 1e-12);
        double const c = s.decode(2, u);
        EXPECT_EQ(c, std::round(c));
        EXPECT_GE(c, 2);
        EXPECT_LE(c, 9);
    }
    EXPECT_NEAR(s.decode(1, 0.5), std::sqrt(1e-3 * 10), 1e-12);
    EXPECT_THROW(ParamSpace({{"x", ParamKind::LOG_REAL, 0, 1}}), ParameterError);
    EXPECT_THROW(ParamSpace({{"x", ParamKind::REAL, 1, 1}}), ParameterError);
}

TEST(Tune, FindsQuadraticMinimum)
{
    ParamSpace const s({{"x", ParamKind::REAL, 0, 1}});
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        auto const r = tune([](auto const& v) { return (v[0] - 0.3) * (v[0] - 0.3); }, s, 25,
                            seed);
        EXPECT_EQ(r.trace.size(), 25u);
        hits += std::abs(r.best_params[0] - 0.3) <= 0.05;
    }
    EXPECT_GE(hits, 19);
}

TEST(Tune, IncumbentIsMonotoneAndDeterministic)
{
    ParamSpace const s({{"x", ParamKind::REAL, -2, 2}, {"y", ParamKind::REAL, -2, 2}});
    auto f = [](auto const& v) { return std::pow(v[0] - 1, 2) + std::pow(v[1] + 0.5, 2); };
    auto const a = tune(f, s, 15, 42);
    auto const b = tune(f, s, 15, 42);
    ASSERT_EQ(a.trace.size(), 15u);
    for (std::size_t i = 0; i < a.trace.size(); ++i)
    {
        EXPECT_EQ(a.trace[i].params, b.trace[i].params);
        if (i > 0)
            EXPECT_LE(a.trace[i].incumbent, a.trace[i - 1].incumbent);
    }
    EXPECT_EQ(initial_design_size(15), 5u);
    EXPECT_EQ(initial_design_size(40), 10u);
}

TEST(Tune, FailingObjectiveRecordsInfinity)
{
    ParamSpace const s({{"x", ParamKind::REAL, 0, 1}});
    auto const r = tune([](auto const& v) -> double {
        if (v[0] < 0.5)
            throw std::runtime_error("boom");
        return v[0];
    }, s, 12, 3);
    bool any_failed = false;
    for (auto const& t : r.trace)
        if (t.failed)
        {
            any_failed = true;
            EXPECT_TRUE(std::isinf(t.objective));
        }
    EXPECT_TRUE(any_failed);
    EXPECT_TRUE(std::isfinite(r.best_value));
    EXPECT_GE(r.best_params[0], 0.5);
}

TEST(Tune, IntegerSpaceCachesDuplicates)
{
    ParamSpace const s({{"n", ParamKind::INT, 1, 3}});
    int calls = 0;
    auto const r = tune([&](auto const& v) {
        ++calls;
        return std::abs(v[0] - 2);
    }, s, 10, 1);
    EXPECT_LE(calls, 3);
    EXPECT_EQ(r.best_params[0], 2.0);
    EXPECT_THROW(tune([](auto const&) { return 0.0; }, s, 1, 1), ParameterError);
}

TEST(Tune, TraceCsvLayout)
{
    ParamSpace const s({{"lr", ParamKind::REAL, 0, 1}});
    auto const r = tune([](auto const& v) { return v[0]; }, s, 6, 2);
    std::ostringstream os;
    write_trace_csv(os, s, r);
    auto const text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "trial,lr,objective,incumbent");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

TEST(TuneLearner, RefitsBestConfiguration)
{
    auto const t = testing::blob_table({{0, 0}, {2, 0}, {0, 2}}, 0.6, 40, 1);
    ParamSpace const s({{"learning_rate", ParamKind::LOG_REAL, 0.05, 0.3},
                        {"max_depth", ParamKind::INT, 2, 3},
                        {"n_rounds", ParamKind::INT, 5, 15}});
    auto const tm = tune_learner(t, TunedLearner::GBM, s, 6, 3);
    EXPECT_EQ(tm.model.kind, ModelKind::GBM);
    EXPECT_EQ(tm.model.n_rounds, std::uint32_t(tm.search.best_params[2]));
    EXPECT_LT(tm.search.best_value, -0.8);
}

}  // namespace
}  // namespace tomoclass
