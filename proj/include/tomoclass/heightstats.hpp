#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cube_io.hpp"
#include "error.hpp"
#include "geosplit.hpp"

namespace tomoclass {

//---------------------------------------------------------------------------//
// Sample statistics
//---------------------------------------------------------------------------//

inline double sample_mean(std::span<double const> s)
{
    double m = 0;
    for (double v : s)
        m += v;
    return m / double(s.size());
}

//! Population standard deviation.
inline double population_std(std::span<double const> s)
{
    double const m = sample_mean(s);
    double v = 0;
    for (double x : s)
        v += (x - m) * (x - m);
    return std::sqrt(v / double(s.size()));
}

//! Fisher excess kurtosis m4 / m2^2 - 3 with population moments.
inline double excess_kurtosis(std::span<double const> s)
{
    if (s.size() < 4)
        throw StatisticError("kurtosis needs at least 4 samples");
    double const m = sample_mean(s);
    double m2 = 0, m4 = 0;
    for (double x : s)
    {
        double const d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= double(s.size());
    m4 /= double(s.size());
    if (!(m2 > 0))
        throw StatisticError("kurtosis undefined for zero variance");
    return m4 / (m2 * m2) - 3.0;
}

//! Quantile by linear interpolation between order statistics (type 7).
inline double quantile_sorted(std::span<double const> sorted, double q)
{
    if (sorted.empty())
        throw StatisticError("quantile of empty sample");
    double const h = (double(sorted.size()) - 1.0) * q;
    auto const lo = std::size_t(std::floor(h));
    std::size_t const hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> s, double q)
{
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, q);
}

//---------------------------------------------------------------------------//
// Kernel density
//---------------------------------------------------------------------------//

struct DensityCurve
{
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth_m = 0;
};

//! Silverman: 0.9 min(sd, IQR/1.34) n^(-1/5); falls back to sd when IQR = 0.
inline double silverman_bandwidth(std::span<double const> samples)
{
    if (samples.size() < 2)
        throw BandwidthError("bandwidth needs at least 2 samples");
    double const n = double(samples.size());
    double const m = sample_mean(samples);
    double v = 0;
    for (double x : samples)
        v += (x - m) * (x - m);
    double const sd = std::sqrt(v / (n - 1.0));
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    double const iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    double spread = iqr > 0 ? std::min(sd, iqr / 1.34) : sd;
    if (!(spread > 0))
        throw BandwidthError("degenerate sample spread");
    return 0.9 * spread * std::pow(n, -0.2);
}

inline constexpr double kde_cut_bandwidths = 4.0;

//! Gaussian mixture density at `x`.
inline double kde_evaluate(std::span<double const> samples, double h, double x)
{
    double s = 0;
    for (double v : samples)
    {
        double const z = (x - v) / h;
        s += std::exp(-0.5 * z * z);
    }
    return s / (double(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

/*!
 * Gaussian KDE with the Silverman bandwidth on `grid_points` equally spaced
 * heights spanning [min - 4h, max + 4h]. The 4h margin keeps the tail mass
 * outside the grid below 1e-4 even for two samples.
 */
inline DensityCurve kde(std::span<double const> samples, std::size_t grid_points = 512)
{
    if (grid_points < 2)
        throw ParameterError("KDE grid needs at least 2 points");
    double const h = silverman_bandwidth(samples);
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double const lo = *lo_it - kde_cut_bandwidths * h;
    double const hi = *hi_it + kde_cut_bandwidths * h;
    DensityCurve c;
    c.bandwidth_m = h;
    c.grid.resize(grid_points);
    c.density.resize(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
    {
        c.grid[i] = lo + (hi - lo) * double(i) / double(grid_points - 1);
        c.density[i] = kde_evaluate(samples, h, c.grid[i]);
    }
    return c;
}

inline double trapezoid(std::span<double const> x, std::span<double const> y)
{
    double s = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

//---------------------------------------------------------------------------//
// Tomographic height
//---------------------------------------------------------------------------//

/*!
 * Canopy top from an intensity profile: the upper edge of the highest bin
 * whose intensity is within `rel_threshold_db` of the profile peak.
 * Returns nullopt for an all-zero profile.
 */
inline std::optional<double> estimate_height(std::span<double const> profile,
                                             double height_min_m,
                                             double height_step_m,
                                             double rel_threshold_db = -3.0)
{
    double peak = 0;
    for (double v : profile)
        if (std::isfinite(v))
            peak = std::max(peak, v);
    if (!(peak > 0))
        return std::nullopt;
    double const cut = peak * std::pow(10.0, rel_threshold_db / 10.0);
    for (std::size_t i = profile.size(); i-- > 0;)
        if (profile[i] >= cut)
            return height_min_m + double(i + 1) * height_step_m;
    return std::nullopt;
}

enum class ProfileSource : std::uint8_t
{
    FIRST_CHANNEL,
    CHANNEL,
    CHANNEL_MEAN
};

struct HeightEstimateOptions
{
    ProfileSource source = ProfileSource::FIRST_CHANNEL;
    PolChannel channel = PolChannel::HH;  //!< for ProfileSource::CHANNEL
    double rel_threshold_db = -3.0;
};

//! estimate_height for every valid pixel of `cube`.
inline HeightRaster estimate_height_raster(TomoCube const& cube,
                                           HeightEstimateOptions const& opt = {})
{
    auto const& ax = cube.axes();
    std::size_t const nh = ax.n_height, nc = ax.channels.size();
    std::size_t ci = 0;
    if (opt.source == ProfileSource::CHANNEL)
    {
        auto idx = ax.channel_index(opt.channel);
        if (!idx)
            throw ChannelError("channel " + std::string(to_string(opt.channel))
                               + " not present in cube");
        ci = *idx;
    }
    HeightRaster out(ax.n_range, ax.n_azimuth);
    std::vector<double> prof(nh);
    for (std::size_t r = 0; r < ax.n_range; ++r)
        for (std::size_t a = 0; a < ax.n_azimuth; ++a)
        {
            if (!cube.valid(r, a))
                continue;
            auto const px = cube.pixel(r, a);
            for (std::size_t h = 0; h < nh; ++h)
            {
                if (opt.source == ProfileSource::CHANNEL_MEAN)
                {
                    double s = 0;
                    for (std::size_t c = 0; c < nc; ++c)
                        s += px[h * nc + c];
                    prof[h] = s / double(nc);
                }
                else
                    prof[h] = px[h * nc + ci];
            }
            if (auto e = estimate_height(prof, ax.height_min_m, ax.height_step_m,
                                         opt.rel_threshold_db))
                out.at(r, a) = *e;
        }
    return out;
}

//---------------------------------------------------------------------------//
// Per-class statistics
//---------------------------------------------------------------------------//

inline constexpr std::size_t min_stats_samples = 4;

struct HeightStatsRow
{
    int class_id = 0;
    SplitTag split = SplitTag::TRAIN;
    std::size_t n = 0;
    //! Empty when the statistic is undefined for the group.
    std::optional<double> min_m, max_m, mean_m, std_m, excess_kurtosis, rmse_m;
};

/*!
 * LiDAR height statistics per (split, class) over labeled pixels with a
 * valid CHM value, rows ordered TEST block then TRAIN block, class
 * ascending within each. rmse is the RMS of (est - chm) over those pixels
 * where `est` is valid. Groups with fewer than 4 pixels carry only n.
 */
inline std::vector<HeightStatsRow> class_height_stats(HeightRaster const& chm,
                                                      SpeciesMap const& map,
                                                      SplitMask const& mask,
                                                      HeightRaster const& est)
{
    if (chm.n_range != map.n_range() || chm.n_azimuth != map.n_azimuth()
        || est.n_range != map.n_range() || est.n_azimuth != map.n_azimuth()
        || mask.n_range != map.n_range() || mask.n_azimuth != map.n_azimuth())
        throw ShapeError("height rasters, species map and mask dimensions differ");

    struct Group
    {
        std::vector<double> h;
        double se = 0;
        std::size_t n_err = 0;
    };
    // [split][class]
    std::vector<std::vector<Group>> groups(2, std::vector<Group>(n_species + 1));
    for (std::size_t r = 0; r < map.n_range(); ++r)
        for (std::size_t a = 0; a < map.n_azimuth(); ++a)
        {
            int const l = map.label(r, a);
            auto const tag = mask.at(r, a);
            if (l == 0 || tag == SplitTag::EXCLUDED || !chm.valid(r, a))
                continue;
            auto& g = groups[tag == SplitTag::TEST ? 0 : 1][std::size_t(l)];
            double const h = chm.at(r, a);
            g.h.push_back(h);
            if (est.valid(r, a))
            {
                double const d = est.at(r, a) - h;
                g.se += d * d;
                ++g.n_err;
            }
        }

    std::vector<HeightStatsRow> rows;
    for (int s = 0; s < 2; ++s)
        for (int l = 1; l <= n_species; ++l)
        {
            auto const& g = groups[std::size_t(s)][std::size_t(l)];
            if (g.h.empty())
                continue;
            HeightStatsRow row;
            row.class_id = l;
            row.split = s == 0 ? SplitTag::TEST : SplitTag::TRAIN;
            row.n = g.h.size();
            if (row.n >= min_stats_samples)
            {
                auto [lo, hi] = std::minmax_element(g.h.begin(), g.h.end());
                row.min_m = *lo;
                row.max_m = *hi;
                row.mean_m = sample_mean(g.h);
                row.std_m = population_std(g.h);
                try
                {
                    row.excess_kurtosis = excess_kurtosis(g.h);
                }
                catch (StatisticError const&)
                {
                }
                if (g.n_err > 0)
                    row.rmse_m = std::sqrt(g.se / double(g.n_err));
            }
            rows.push_back(row);
        }
    return rows;
}

inline std::string class_display_name(int id)
{
    auto const& d = default_class_dictionary();
    auto it = d.find(id);
    return it == d.end() ? std::to_string(id) : it->second.name;
}

//! Aligned text: Tree Name, Min, Max, Mean, Std Dev, Kurtosis, RMSE, Split.
inline std::string format_height_stats(std::vector<HeightStatsRow> const& rows)
{
    std::ostringstream os;
    auto cell = [&](std::optional<double> const& v) {
        if (v)
            os << std::setw(10) << std::fixed << std::setprecision(2) << *v;
        else
            os << std::setw(10) << "n/a";
    };
    os << std::left << std::setw(50) << "Tree Name" << std::right << std::setw(10)
       << "Min (m)" << std::setw(10) << "Max (m)" << std::setw(10) << "Mean (m)"
       << std::setw(10) << "Std (m)" << std::setw(10) << "Kurtosis" << std::setw(10)
       << "RMSE (m)" << std::setw(8) << "Split" << std::setw(8) << "N" << '\n';
    for (auto const& r : rows)
    {
        os << std::left << std::setw(50) << class_display_name(r.class_id)
           << std::right;
        cell(r.min_m);
        cell(r.max_m);
        cell(r.mean_m);
        cell(r.std_m);
        cell(r.excess_kurtosis);
        cell(r.rmse_m);
        os << std::setw(8) << (r.split == SplitTag::TEST ? "Test" : "Train")
           << std::setw(8) << r.n << '\n';
    }
    return os.str();
}

inline void write_height_stats_csv(std::ostream& os,
                                   std::vector<HeightStatsRow> const& rows)
{
    os << "class,name,split,n,min_m,max_m,mean_m,std_m,excess_kurtosis,rmse_m\n";
    os << std::setprecision(17);
    auto cell = [&](std::optional<double> const& v) {
        os << ',';
        if (v)
            os << *v;
    };
    for (auto const& r : rows)
    {
        os << r.class_id << ",\"" << class_display_name(r.class_id) << "\","
           << (r.split == SplitTag::TEST ? "test" : "train") << ',' << r.n;
        cell(r.min_m);
        cell(r.max_m);
        cell(r.mean_m);
        cell(r.std_m);
        cell(r.excess_kurtosis);
        cell(r.rmse_m);
        os << '\n';
    }
}

//---------------------------------------------------------------------------//
// Violin data
//---------------------------------------------------------------------------//

struct BoxStats
{
    double q1 = 0, median = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0;  //!< 1.5 IQR rule
};

inline BoxStats box_stats(std::vector<double> s)
{
    std::sort(s.begin(), s.end());
    BoxStats b;
    b.q1 = quantile_sorted(s, 0.25);
    b.median = quantile_sorted(s, 0.5);
    b.q3 = quantile_sorted(s, 0.75);
    double const iqr = b.q3 - b.q1;
    double const lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
    b.whisker_low = *std::lower_bound(s.begin(), s.end(), lo);
    b.whisker_high = *(std::upper_bound(s.begin(), s.end(), hi) - 1);
    return b;
}

enum class ViolinGrouping : std::uint8_t
{
    TRUE_CLASS,
    PREDICTED_CLASS
};

struct ViolinGroup
{
    int class_id = 0;
    SplitTag split = SplitTag::TEST;
    ViolinGrouping grouping = ViolinGrouping::TRUE_CLASS;
    std::vector<double> heights;
};

/*!
 * LiDAR heights grouped by (grouping, split, class); `labels` is either the
 * species map labels or a per-pixel prediction raster.
 */
inline std::vector<ViolinGroup> violin_groups(HeightRaster const& chm,
                                              std::span<std::uint8_t const> labels,
                                              SplitMask const& mask,
                                              ViolinGrouping grouping)
{
    if (labels.size() != chm.height_m.size()
        || mask.assignment.size() != chm.height_m.size())
        throw ShapeError("violin inputs have different pixel counts");
    std::vector<ViolinGroup> out;
    for (SplitTag tag : {SplitTag::TEST, SplitTag::TRAIN})
        for (int l = 1; l <= n_species; ++l)
        {
            ViolinGroup g{l, tag, grouping, {}};
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == l && mask.assignment[i] == tag
                    && !std::isnan(chm.height_m[i]))
                    g.heights.push_back(chm.height_m[i]);
            if (!g.heights.empty())
                out.push_back(std::move(g));
        }
    return out;
}

/*!
 * Violin CSV. Each group writes one `box` record (quartiles, whiskers) and,
 * when a density is defined, `grid_points` `density` records. Groups whose
 * KDE is undefined carry flag=degenerate on the box record. Groups appear
 * in the order given; violin_groups emits class-id order per split.
 *
 * Columns: grouping,split,class,record,height_m,density,q1,median,q3,
 *          whisker_low,whisker_high,n,flag
 */
inline void violin_export(std::ostream& os, std::vector<ViolinGroup> const& groups,
                          std::size_t grid_points = 128)
{
    os << "grouping,split,class,record,height_m,density,q1,median,q3,"
          "whisker_low,whisker_high,n,flag\n";
    os << std::setprecision(10);
    for (auto const& g : groups)
    {
        std::string const prefix
            = std::string(g.grouping == ViolinGrouping::TRUE_CLASS ? "true" : "predicted")
              + ',' + std::string(to_string(g.split)) + ',' + std::to_string(g.class_id);
        BoxStats const b = box_stats(g.heights);
        std::optional<DensityCurve> curve;
        try
        {
            curve = kde(g.heights, grid_points);
        }
        catch (StatisticError const&)
        {
        }
        os << prefix << ",box,,," << b.q1 << ',' << b.median << ',' << b.q3 << ','
           << b.whisker_low << ',' << b.whisker_high << ',' << g.heights.size() << ','
           << (curve ? "" : "degenerate") << '\n';
        if (curve)
            for (std::size_t i = 0; i < curve->grid.size(); ++i)
                os << prefix << ",density," << curve->grid[i] << ','
                   << curve->density[i] << ",,,,,," << g.heights.size() << ",\n";
    }
}

inline void violin_export(std::string const& path,
                          std::vector<ViolinGroup> const& groups,
                          std::size_t grid_points = 128)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    violin_export(os, groups, grid_points);
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

}  // namespace tomoclass
