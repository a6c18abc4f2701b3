#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace tomoclass {

//! SplitMix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

//! Seed for sub-stream `index` of a run seeded with `seed`.
constexpr std::uint64_t stream_seed(std::uint64_t seed,
                                    std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL));
}

/*!
 * Seeded generator with portable distributions.
 *
 * The standard distribution objects are implementation defined, so uniform
 * and normal draws are derived directly from the engine output. Results are
 * bit-identical across standard libraries.
 */
class Rng
{
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
    Rng(std::uint64_t seed, std::uint64_t stream)
        : engine_(stream_seed(seed, stream))
    {
    }

    std::uint64_t next() { return engine_(); }

    //! Uniform on [0, 1) with 53 random bits.
    double uniform()
    {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    //! Uniform integer on [0, n), n > 0. Lemire's nearly-divisionless method.
    std::uint64_t below(std::uint64_t n)
    {
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n)
        {
            std::uint64_t const threshold = (0 - n) % n;
            while (low < threshold)
            {
                x = engine_();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    //! Standard normal via Box-Muller (no cached second variate).
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        double const u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1))
               * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace tomoclass
