#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <string>
#include <vector>

#include "cube_io.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace tomoclass {

/*!
 * Parameters of the synthetic forest scene.
 *
 * Per-class arrays are indexed by class id - 1.
 */
struct SceneConfig
{
    std::uint32_t n_range = 168;
    std::uint32_t n_azimuth = 120;
    std::uint32_t n_height = 36;
    double height_min_m = -10.0;
    double height_step_m = 2.0;

    //! Reference inventory shares: pixel counts / 106707.
    std::array<double, n_species> proportions{
        64389.0 / 106707, 5199.0 / 106707, 2884.0 / 106707, 11593.0 / 106707,
        18120.0 / 106707, 2590.0 / 106707, 869.0 / 106707,  1063.0 / 106707};
    std::array<double, n_species> height_mean_m{22.9, 22.5, 19.6, 17.1,
                                                18.8, 16.5, 17.2, 19.0};
    std::array<double, n_species> height_sd_m{5.2, 4.2, 6.7, 4.0, 4.1, 6.9, 3.1, 4.2};
    //! Canopy amplitude per class, (HH, HV, VV).
    std::array<std::array<double, 3>, n_species> signature{{
        {1.00, 0.30, 0.70},
        {0.60, 0.50, 0.60},
        {0.62, 0.48, 0.58},
        {0.40, 0.70, 0.90},
        {0.90, 0.60, 0.30},
        {0.58, 0.52, 0.62},
        {0.61, 0.49, 0.61},
        {0.30, 0.20, 0.45},
    }};
    //! Ground return amplitude relative to the canopy amplitude.
    double ground_ratio = 0.25;
    double height_clip_min_m = 4.0;
    double height_clip_max_m = 45.0;
    double bump_sigma_m = 1.5;

    double patch_granularity = 8.0;  //!< mean Voronoi cell side, pixels
    double noise = 0.2;               //!< log-sd of multiplicative voxel noise
    double nw_coverage = 0.6;         //!< fraction of columns seen by each heading
    std::uint32_t lidar_points_per_pixel = 2;
    double proportion_tolerance = 0.03;
    std::uint64_t seed = 7;

    void validate() const
    {
        if (n_range == 0 || n_azimuth == 0 || n_height == 0)
            throw ConfigError("scene dimensions must be positive");
        if (!(height_step_m > 0))
            throw ConfigError("height step must be positive");
        double sum = 0;
        for (double p : proportions)
        {
            if (!(p >= 0))
                throw ConfigError("class proportions must be nonnegative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ConfigError("class proportions must sum to 1");
        double const top = height_min_m + n_height * height_step_m;
        if (!(height_clip_min_m >= height_min_m && height_clip_max_m < top
              && height_clip_min_m <= height_clip_max_m))
            throw ConfigError("canopy height range outside the cube height axis");
        for (int k = 0; k < n_species; ++k)
        {
            if (!(height_sd_m[k] >= 0))
                throw ConfigError("height spread must be nonnegative");
            for (double s : signature[k])
                if (!(s >= 0))
                    throw ConfigError("signature amplitudes must be nonnegative");
        }
        if (!(bump_sigma_m > 0))
            throw ConfigError("bump width must be positive");
        if (!(patch_granularity >= 1))
            throw ConfigError("patch granularity must be at least 1 pixel");
        if (!(noise >= 0))
            throw ConfigError("noise level must be nonnegative");
        if (!(nw_coverage >= 0.5 && nw_coverage <= 1))
            throw ConfigError("heading coverage must lie in [0.5, 1]");
        if (lidar_points_per_pixel == 0)
            throw ConfigError("need at least one LiDAR point per pixel");
    }
};

struct Scene
{
    TomoCube nw;
    TomoCube se;
    SpeciesMap map;
    LidarPoints lidar;
    HeightRaster true_height;  //!< canopy height used to build each profile
};

namespace detail {

inline constexpr std::uint64_t stream_sites = 1;
inline constexpr std::uint64_t stream_height = 2;
inline constexpr std::uint64_t stream_noise_nw = 3;
inline constexpr std::uint64_t stream_noise_se = 4;
inline constexpr std::uint64_t stream_lidar = 5;

//! Voronoi patches, classes dealt to cells largest first by remaining deficit.
inline std::vector<std::uint8_t> voronoi_labels(SceneConfig const& cfg)
{
    std::size_t const nr = cfg.n_range, na = cfg.n_azimuth, n = nr * na;
    auto const n_sites = std::max<std::size_t>(
        1, std::size_t(std::ceil(double(n) / (cfg.patch_granularity * cfg.patch_granularity))));
    Rng rng(cfg.seed, stream_sites);
    std::vector<double> sr(n_sites), sa(n_sites);
    for (std::size_t s = 0; s < n_sites; ++s)
    {
        sr[s] = rng.uniform() * double(nr);
        sa[s] = rng.uniform() * double(na);
    }

    // Bucket sites on a coarse grid so nearest-site search stays local.
    double const cell = std::max(1.0, cfg.patch_granularity);
    std::size_t const br = std::size_t(std::ceil(double(nr) / cell));
    std::size_t const ba = std::size_t(std::ceil(double(na) / cell));
    std::vector<std::vector<std::uint32_t>> buckets(br * ba);
    for (std::size_t s = 0; s < n_sites; ++s)
    {
        std::size_t const i = std::min(br - 1, std::size_t(sr[s] / cell));
        std::size_t const j = std::min(ba - 1, std::size_t(sa[s] / cell));
        buckets[i * ba + j].push_back(std::uint32_t(s));
    }

    std::vector<std::uint32_t> owner(n);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t a = 0; a < na; ++a)
        {
            double const pr = double(r) + 0.5, pa = double(a) + 0.5;
            std::size_t const bi = std::min(br - 1, std::size_t(pr / cell));
            std::size_t const bj = std::min(ba - 1, std::size_t(pa / cell));
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            // Grow the search ring until the nearest candidate is provably closest.
            for (std::size_t ring = 0;; ++ring)
            {
                bool any_bucket = false;
                std::int64_t const lo_i = std::int64_t(bi) - std::int64_t(ring);
                std::int64_t const hi_i = std::int64_t(bi) + std::int64_t(ring);
                std::int64_t const lo_j = std::int64_t(bj) - std::int64_t(ring);
                std::int64_t const hi_j = std::int64_t(bj) + std::int64_t(ring);
                for (std::int64_t i = lo_i; i <= hi_i; ++i)
                    for (std::int64_t j = lo_j; j <= hi_j; ++j)
                    {
                        if (i != lo_i && i != hi_i && j != lo_j && j != hi_j)
                            continue;
                        if (i < 0 || j < 0 || i >= std::int64_t(br) || j >= std::int64_t(ba))
                            continue;
                        any_bucket = true;
                        for (auto s : buckets[std::size_t(i) * ba + std::size_t(j)])
                        {
                            double const d = (sr[s] - pr) * (sr[s] - pr)
                                             + (sa[s] - pa) * (sa[s] - pa);
                            if (d < best || (d == best && s < arg))
                            {
                                best = d;
                                arg = s;
                            }
                        }
                    }
                double const reach = double(ring) * cell;
                if ((std::isfinite(best) && best <= reach * reach) || !any_bucket)
                    break;
            }
            owner[r * na + a] = arg;
        }

    std::vector<std::size_t> size(n_sites, 0);
    for (auto o : owner)
        ++size[o];
    std::vector<std::uint32_t> order(n_sites);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto x, auto y) { return size[x] > size[y]; });

    std::array<double, n_species> deficit{};
    for (int k = 0; k < n_species; ++k)
        deficit[k] = cfg.proportions[k] * double(n);
    std::vector<std::uint8_t> cls(n_sites, 0);
    for (auto s : order)
    {
        if (size[s] == 0)
            continue;
        int best = 0;
        for (int k = 1; k < n_species; ++k)
            if (deficit[k] > deficit[best])
                best = k;
        cls[s] = std::uint8_t(best + 1);
        deficit[best] -= double(size[s]);
    }

    std::vector<std::uint8_t> labels(n);
    std::array<std::size_t, n_species> got{};
    for (std::size_t p = 0; p < n; ++p)
    {
        labels[p] = cls[owner[p]];
        ++got[labels[p] - 1];
    }
    for (int k = 0; k < n_species; ++k)
    {
        double const share = double(got[k]) / double(n);
        if (std::abs(share - cfg.proportions[k]) > cfg.proportion_tolerance)
            throw ConfigError("class " + std::to_string(k + 1) + " share "
                              + std::to_string(share) + " cannot meet target "
                              + std::to_string(cfg.proportions[k])
                              + " at this grid size and patch granularity");
    }
    return labels;
}

}  // namespace detail

/*!
 * Canopy profile of one class at one pixel, (height, channel) layout.
 *
 * A Gaussian bump of width bump_sigma_m sits on the centre of the bin
 * containing the canopy height, truncated at 3 sigma, plus a ground bump at
 * the bin containing 0 m.
 */
inline void scene_profile(SceneConfig const& cfg, int class_id, double canopy_m,
                          std::span<float> out)
{
    std::size_t const nh = cfg.n_height;
    auto bin_of = [&](double z) {
        double const i = std::floor((z - cfg.height_min_m) / cfg.height_step_m);
        return std::clamp(i, 0.0, double(nh - 1));
    };
    auto centre = [&](double bin) {
        return cfg.height_min_m + (bin + 0.5) * cfg.height_step_m;
    };
    double const c_top = centre(bin_of(canopy_m));
    double const c_gnd = centre(bin_of(0.0));
    double const s = cfg.bump_sigma_m, cut = 3.0 * s;
    auto const& sig = cfg.signature[std::size_t(class_id - 1)];
    for (std::size_t h = 0; h < nh; ++h)
    {
        double const z = cfg.height_min_m + (double(h) + 0.5) * cfg.height_step_m;
        double shape = 0;
        if (std::abs(z - c_top) <= cut)
            shape += std::exp(-0.5 * (z - c_top) * (z - c_top) / (s * s));
        if (std::abs(z - c_gnd) <= cut)
            shape += cfg.ground_ratio
                     * std::exp(-0.5 * (z - c_gnd) * (z - c_gnd) / (s * s));
        for (std::size_t c = 0; c < 3; ++c)
            out[h * 3 + c] = float(sig[c] * shape);
    }
}

//! Deterministic scene: NW/SE cubes, species map, LiDAR and true heights.
inline Scene generate_scene(SceneConfig const& cfg)
{
    cfg.validate();
    std::size_t const nr = cfg.n_range, na = cfg.n_azimuth, nh = cfg.n_height;
    std::size_t const per_pixel = nh * 3;

    auto labels = detail::voronoi_labels(cfg);

    HeightRaster truth(cfg.n_range, cfg.n_azimuth);
    Rng hrng(cfg.seed, detail::stream_height);
    for (std::size_t p = 0; p < nr * na; ++p)
    {
        auto const k = std::size_t(labels[p] - 1);
        double const h = cfg.height_mean_m[k] + cfg.height_sd_m[k] * hrng.normal();
        truth.height_m[p] = std::clamp(h, cfg.height_clip_min_m, cfg.height_clip_max_m);
    }

    std::vector<float> clean(nr * na * per_pixel);
    for (std::size_t p = 0; p < nr * na; ++p)
        scene_profile(cfg, labels[p], truth.height_m[p],
                      std::span<float>(clean.data() + p * per_pixel, per_pixel));

    auto nw_end = std::size_t(std::ceil(cfg.nw_coverage * double(na)));
    auto se_begin = std::size_t(std::floor((1.0 - cfg.nw_coverage) * double(na)));
    auto make_cube = [&](Heading heading, std::uint64_t stream) {
        Rng rng(cfg.seed, stream);
        double const bias = -0.5 * cfg.noise * cfg.noise;
        std::vector<float> data(clean.size(), nodata_f32);
        for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t a = 0; a < na; ++a)
            {
                bool const seen = heading == Heading::NW ? a < nw_end : a >= se_begin;
                if (!seen)
                    continue;
                std::size_t const off = (r * na + a) * per_pixel;
                for (std::size_t k = 0; k < per_pixel; ++k)
                {
                    double const g = cfg.noise > 0
                                         ? std::exp(cfg.noise * rng.normal() + bias)
                                         : 1.0;
                    data[off + k] = float(clean[off + k] * g);
                }
            }
        CubeAxes ax;
        ax.n_range = cfg.n_range;
        ax.n_azimuth = cfg.n_azimuth;
        ax.n_height = cfg.n_height;
        ax.channels = {PolChannel::HH, PolChannel::HV, PolChannel::VV};
        ax.height_min_m = float(cfg.height_min_m);
        ax.height_step_m = float(cfg.height_step_m);
        ax.band = "P";
        ax.heading = heading;
        return TomoCube(std::move(ax), std::move(data));
    };

    Scene scene{make_cube(Heading::NW, detail::stream_noise_nw),
                make_cube(Heading::SE, detail::stream_noise_se),
                SpeciesMap(cfg.n_range, cfg.n_azimuth, std::move(labels)),
                {},
                std::move(truth)};

    Rng lrng(cfg.seed, detail::stream_lidar);
    scene.lidar.reserve(nr * na * cfg.lidar_points_per_pixel);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t a = 0; a < na; ++a)
            for (std::uint32_t k = 0; k < cfg.lidar_points_per_pixel; ++k)
            {
                LidarPoint pt;
                pt.x = double(a) + lrng.uniform();
                pt.y = double(r) + lrng.uniform();
                pt.z = scene.true_height.at(r, a) + lrng.uniform(-0.5, 0.5);
                scene.lidar.push_back(pt);
            }
    return scene;
}

inline void write_truth_csv(std::string const& path, HeightRaster const& truth)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    os << "range,azimuth,true_height_m\n" << std::setprecision(17);
    for (std::size_t r = 0; r < truth.n_range; ++r)
        for (std::size_t a = 0; a < truth.n_azimuth; ++a)
            os << r << ',' << a << ',' << truth.at(r, a) << '\n';
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

}  // namespace tomoclass
