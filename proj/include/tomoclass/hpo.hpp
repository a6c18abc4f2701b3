#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace tomoclass {

//---------------------------------------------------------------------------//
// Search space
//---------------------------------------------------------------------------//

enum class ParamKind : std::uint8_t
{
    REAL,
    LOG_REAL,
    INT
};

struct ParamDim
{
    std::string name;
    ParamKind kind = ParamKind::REAL;
    double lower = 0;
    double upper = 1;
};

class ParamSpace
{
  public:
    ParamSpace() = default;
    explicit ParamSpace(std::vector<ParamDim> dims) : dims_(std::move(dims))
    {
        for (auto const& d : dims_)
        {
            if (!(d.lower < d.upper))
                throw ParameterError("parameter '" + d.name + "' needs lower < upper");
            if (d.kind == ParamKind::LOG_REAL && !(d.lower > 0))
                throw ParameterError("log-scaled parameter '" + d.name
                                     + "' needs a positive lower bound");
        }
    }

    std::size_t size() const { return dims_.size(); }
    std::vector<ParamDim> const& dims() const { return dims_; }

    //! Unit-cube coordinate to parameter value (INT dims rounded).
    double decode(std::size_t i, double u) const
    {
        auto const& d = dims_[i];
        u = std::clamp(u, 0.0, 1.0);
        switch (d.kind)
        {
            case ParamKind::REAL: return d.lower + u * (d.upper - d.lower);
            case ParamKind::LOG_REAL:
                return std::exp(std::log(d.lower)
                                + u * (std::log(d.upper) - std::log(d.lower)));
            case ParamKind::INT:
                return std::clamp(std::round(d.lower + u * (d.upper - d.lower)),
                                  d.lower, d.upper);
        }
        return d.lower;
    }

    double encode(std::size_t i, double v) const
    {
        auto const& d = dims_[i];
        switch (d.kind)
        {
            case ParamKind::REAL:
            case ParamKind::INT: return (v - d.lower) / (d.upper - d.lower);
            case ParamKind::LOG_REAL:
                return (std::log(v) - std::log(d.lower))
                       / (std::log(d.upper) - std::log(d.lower));
        }
        return 0;
    }

    std::vector<double> decode(std::span<double const> u) const
    {
        std::vector<double> v(size());
        for (std::size_t i = 0; i < size(); ++i)
            v[i] = decode(i, u[i]);
        return v;
    }

  private:
    std::vector<ParamDim> dims_;
};

//! GBM: learning_rate, max_depth, n_rounds.
inline ParamSpace default_gbm_space()
{
    return ParamSpace({{"learning_rate", ParamKind::LOG_REAL, 0.01, 0.3},
                       {"max_depth", ParamKind::INT, 3, 8},
                       {"n_rounds", ParamKind::INT, 50, 300}});
}

//! Forest: n_trees, max_depth.
inline ParamSpace default_forest_space()
{
    return ParamSpace({{"n_trees", ParamKind::INT, 50, 400},
                       {"max_depth", ParamKind::INT, 4, 16}});
}

//---------------------------------------------------------------------------//
// Gaussian process
//---------------------------------------------------------------------------//

struct Observation
{
    std::vector<double> x;  //!< unit cube
    double y = 0;           //!< minimised
};

struct KernelSettings
{
    double signal_variance = 1.0;
    double lengthscale = 0.2;  //!< same for every unit-cube dimension
    double noise_variance = 1e-6;
};

inline constexpr double gp_jitter_floor = 1e-9;
inline constexpr double gp_jitter_ceiling = 1e-4;

namespace detail {

//! In-place lower Cholesky of a row-major n x n SPD matrix. False on failure.
inline bool cholesky(std::vector<double>& a, std::size_t n)
{
    for (std::size_t j = 0; j < n; ++j)
    {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k)
            d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0) || !std::isfinite(d))
            return false;
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i)
        {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k)
                s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
        for (std::size_t i = 0; i < j; ++i)
            a[i * n + j] = 0.0;
    }
    return true;
}

inline void forward_subst(std::vector<double> const& l, std::size_t n,
                          std::span<double> b)
{
    for (std::size_t i = 0; i < n; ++i)
    {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k)
            s -= l[i * n + k] * b[k];
        b[i] = s / l[i * n + i];
    }
}

inline void backward_subst(std::vector<double> const& l, std::size_t n,
                           std::span<double> b)
{
    for (std::size_t i = n; i-- > 0;)
    {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k)
            s -= l[k * n + i] * b[k];
        b[i] = s / l[i * n + i];
    }
}

}  // namespace detail

inline double se_kernel(std::span<double const> a, std::span<double const> b,
                        KernelSettings const& k)
{
    double d2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        double const t = (a[i] - b[i]) / k.lengthscale;
        d2 += t * t;
    }
    return k.signal_variance * std::exp(-0.5 * d2);
}

struct GpPrediction
{
    double mean = 0;
    double variance = 0;
};

/*!
 * Exact GP regression with a squared-exponential kernel.
 *
 * Targets are standardised internally; predictions are returned in the
 * original units. Prior mean is the target mean, prior variance is
 * signal_variance times the target variance.
 */
class GpPosterior
{
  public:
    GpPosterior(std::vector<Observation> obs, KernelSettings kernel)
        : obs_(std::move(obs)), kernel_(kernel)
    {
        if (obs_.empty())
            throw ParameterError("GP needs at least one observation");
        std::size_t const n = obs_.size();
        double mean = 0;
        for (auto const& o : obs_)
        {
            if (!std::isfinite(o.y))
                throw ParameterError("GP observation target must be finite");
            mean += o.y;
        }
        mean /= double(n);
        double var = 0;
        for (auto const& o : obs_)
            var += (o.y - mean) * (o.y - mean);
        var /= double(n);
        y_mean_ = mean;
        y_scale_ = var > 0 ? std::sqrt(var) : 1.0;

        double noise = std::max(kernel_.noise_variance, gp_jitter_floor);
        for (;;)
        {
            chol_.assign(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i; ++j)
                {
                    double const k = se_kernel(obs_[i].x, obs_[j].x, kernel_);
                    chol_[i * n + j] = k;
                    chol_[j * n + i] = k;
                }
            for (std::size_t i = 0; i < n; ++i)
                chol_[i * n + i] += noise;
            if (detail::cholesky(chol_, n))
                break;
            noise *= 10.0;
            if (noise > gp_jitter_ceiling * (1 + 1e-12))
                throw ConditioningError("GP kernel matrix not positive definite "
                                        "after jitter escalation");
        }
        noise_used_ = noise;
        alpha_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            alpha_[i] = (obs_[i].y - y_mean_) / y_scale_;
        detail::forward_subst(chol_, n, alpha_);
        detail::backward_subst(chol_, n, alpha_);
    }

    GpPrediction predict(std::span<double const> x) const
    {
        std::size_t const n = obs_.size();
        std::vector<double> k(n);
        for (std::size_t i = 0; i < n; ++i)
            k[i] = se_kernel(x, obs_[i].x, kernel_);
        double mu = 0;
        for (std::size_t i = 0; i < n; ++i)
            mu += k[i] * alpha_[i];
        detail::forward_subst(chol_, n, k);
        double v = kernel_.signal_variance;
        for (double t : k)
            v -= t * t;
        v = std::max(v, 0.0);
        return {y_mean_ + y_scale_ * mu, v * y_scale_ * y_scale_};
    }

    double prior_mean() const { return y_mean_; }
    double prior_variance() const
    {
        return kernel_.signal_variance * y_scale_ * y_scale_;
    }
    double noise_variance() const { return noise_used_; }
    std::vector<Observation> const& observations() const { return obs_; }

  private:
    std::vector<Observation> obs_;
    KernelSettings kernel_;
    double y_mean_ = 0;
    double y_scale_ = 1;
    double noise_used_ = 0;
    std::vector<double> chol_;
    std::vector<double> alpha_;
};

inline GpPosterior gp_fit(std::vector<Observation> obs, KernelSettings const& k = {})
{
    return GpPosterior(std::move(obs), k);
}

//---------------------------------------------------------------------------//
// Acquisition
//---------------------------------------------------------------------------//

inline double normal_pdf(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

//! EI for minimisation: (best - mean) Phi(z) + sd phi(z), z = (best - mean)/sd.
inline double expected_improvement(double mean, double stdev, double best)
{
    if (!(stdev > 0))
        return std::max(best - mean, 0.0);
    double const gap = best - mean;
    double const z = gap / stdev;
    return std::max(gap * normal_cdf(z) + stdev * normal_pdf(z), 0.0);
}

//---------------------------------------------------------------------------//
// Tuning loop
//---------------------------------------------------------------------------//

struct Trial
{
    std::size_t index = 0;
    std::vector<double> x;       //!< unit cube
    std::vector<double> params;  //!< decoded
    double objective = 0;        //!< +inf when the callback threw
    double incumbent = 0;
    bool failed = false;
    bool cached = false;  //!< duplicate integer configuration, not re-run
};

struct TuneResult
{
    std::vector<double> best_params;
    std::vector<double> best_x;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<Trial> trace;
};

struct TuneOptions
{
    KernelSettings kernel{};
    std::size_t n_candidates = 1024;
};

using Objective = std::function<double(std::vector<double> const&)>;

inline std::size_t initial_design_size(std::size_t budget)
{
    return std::min(budget, std::max<std::size_t>(5, budget / 4));
}

/*!
 * Bayesian optimisation of `objective` (minimised) over `space`.
 *
 * The first max(5, budget/4) trials come from a seeded Latin hypercube;
 * each later trial maximises EI under the GP posterior over a fresh set of
 * seeded uniform candidates. Candidates that decode to an already evaluated
 * configuration are skipped; if every candidate is a duplicate the cached
 * value is recorded instead of re-running the objective. A throwing
 * callback records +inf; failed trials enter the GP at the worst finite
 * value seen.
 */
inline TuneResult tune(Objective const& objective, ParamSpace const& space,
                       std::size_t budget, std::uint64_t seed,
                       TuneOptions const& opt = {})
{
    if (budget < 2)
        throw ParameterError("tuning budget must be >= 2");
    if (space.size() == 0)
        throw ParameterError("tuning space is empty");
    std::size_t const dim = space.size();
    std::size_t const n_init = initial_design_size(budget);

    // Latin hypercube for the initial design.
    std::vector<std::vector<double>> design(n_init, std::vector<double>(dim));
    {
        Rng rng(seed, 1);
        std::vector<std::size_t> perm(n_init);
        for (std::size_t j = 0; j < dim; ++j)
        {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            for (std::size_t i = n_init; i > 1; --i)
                std::swap(perm[i - 1], perm[rng.below(i)]);
            for (std::size_t i = 0; i < n_init; ++i)
                design[i][j] = (double(perm[i]) + rng.uniform()) / double(n_init);
        }
    }

    TuneResult res;
    std::map<std::vector<double>, double> evaluated;
    auto run = [&](std::vector<double> x) {
        Trial t;
        t.index = res.trace.size();
        t.params = space.decode(x);
        t.x = std::move(x);
        if (auto it = evaluated.find(t.params); it != evaluated.end())
        {
            t.objective = it->second;
            t.cached = true;
        }
        else
        {
            try
            {
                t.objective = objective(t.params);
                if (std::isnan(t.objective))
                    throw Error("objective returned NaN");
            }
            catch (std::exception const&)
            {
                t.objective = std::numeric_limits<double>::infinity();
                t.failed = true;
            }
            evaluated.emplace(t.params, t.objective);
        }
        if (t.objective < res.best_value)
        {
            res.best_value = t.objective;
            res.best_params = t.params;
            res.best_x = t.x;
        }
        t.incumbent = res.best_value;
        res.trace.push_back(std::move(t));
    };

    for (auto& x : design)
        run(x);

    for (std::size_t iter = n_init; iter < budget; ++iter)
    {
        double worst = -std::numeric_limits<double>::infinity();
        for (auto const& t : res.trace)
            if (std::isfinite(t.objective))
                worst = std::max(worst, t.objective);
        Rng rng(seed, 1000 + iter);
        std::vector<double> cand(dim);
        if (!std::isfinite(worst))
        {
            for (auto& c : cand)
                c = rng.uniform();
            run(cand);
            continue;
        }

        std::vector<Observation> obs;
        std::map<std::vector<double>, bool> seen_x;
        for (auto const& t : res.trace)
        {
            if (t.cached || seen_x.count(t.x))
                continue;
            seen_x[t.x] = true;
            obs.push_back({t.x, std::isfinite(t.objective) ? t.objective : worst});
        }
        GpPosterior const gp(std::move(obs), opt.kernel);

        double best_ei = -1.0;
        std::vector<double> best_fresh, best_any;
        double best_any_ei = -1.0;
        for (std::size_t c = 0; c < opt.n_candidates; ++c)
        {
            for (auto& v : cand)
                v = rng.uniform();
            auto const post = gp.predict(cand);
            double const ei = expected_improvement(
                post.mean, std::sqrt(post.variance), res.best_value);
            if (ei > best_any_ei)
            {
                best_any_ei = ei;
                best_any = cand;
            }
            if (ei > best_ei && !evaluated.count(space.decode(cand)))
            {
                best_ei = ei;
                best_fresh = cand;
            }
        }
        run(best_fresh.empty() ? best_any : best_fresh);
    }
    return res;
}

//! trial, <param names>..., objective, incumbent
inline void write_trace_csv(std::ostream& os, ParamSpace const& space,
                            TuneResult const& r)
{
    os << "trial";
    for (auto const& d : space.dims())
        os << ',' << d.name;
    os << ",objective,incumbent\n" << std::setprecision(17);
    for (auto const& t : r.trace)
    {
        os << t.index;
        for (double p : t.params)
            os << ',' << p;
        os << ',' << t.objective << ',' << t.incumbent << '\n';
    }
}

}  // namespace tomoclass
