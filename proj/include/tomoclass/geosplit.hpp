#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cube_io.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace tomoclass {

enum class SplitTag : std::uint8_t
{
    EXCLUDED = 0,
    TRAIN = 1,
    TEST = 2
};

enum class SplitMethod : std::uint8_t
{
    SWATH,
    SQUARE
};

inline std::string_view to_string(SplitTag t)
{
    switch (t)
    {
        case SplitTag::EXCLUDED: return "excluded";
        case SplitTag::TRAIN: return "train";
        case SplitTag::TEST: return "test";
    }
    return "?";
}

inline std::string_view to_string(SplitMethod m)
{
    return m == SplitMethod::SWATH ? "swath" : "square";
}

inline constexpr double default_fraction_tolerance = 0.02;

enum class SwathOrientation : std::uint8_t
{
    VERTICAL,   //!< band of azimuth columns
    HORIZONTAL  //!< band of range rows
};

struct SwathParams
{
    double test_width_frac = 0.20;
    SwathOrientation orientation = SwathOrientation::VERTICAL;
    std::uint32_t buffer = 0;  //!< EXCLUDED columns each side of the band
    double tolerance = default_fraction_tolerance;
};

struct SquareParams
{
    double square_side_frac = 0.05;
    double target_test_frac = 0.20;
    std::uint32_t buffer = 0;  //!< EXCLUDED ring around each square
    std::size_t max_attempts = 10'000;
    double tolerance = default_fraction_tolerance;
};

struct PlacedSquare
{
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    std::uint32_t side = 0;
};

struct SplitMask
{
    std::uint32_t n_range = 0;
    std::uint32_t n_azimuth = 0;
    std::vector<SplitTag> assignment;
    SplitMethod method = SplitMethod::SWATH;
    std::uint64_t seed = 0;
    SwathParams swath;
    SquareParams square;
    std::uint32_t band_start = 0;        //!< swath only
    std::uint32_t band_width = 0;        //!< swath only
    std::vector<PlacedSquare> squares;   //!< square only

    SplitTag at(std::size_t r, std::size_t a) const
    {
        return assignment[r * n_azimuth + a];
    }
};

namespace detail {

inline double labeled_test_fraction(std::vector<SplitTag> const& assignment,
                                    SpeciesMap const& map)
{
    std::size_t labeled = 0, test = 0;
    auto const& labels = map.labels();
    for (std::size_t i = 0; i < labels.size(); ++i)
    {
        if (labels[i] == 0)
            continue;
        ++labeled;
        test += assignment[i] == SplitTag::TEST;
    }
    if (labeled == 0)
        return 0.0;
    return double(test) / double(labeled);
}

}  // namespace detail

/*!
 * One contiguous band of TEST columns (rows, if horizontal), width
 * round(frac * extent), everything else TRAIN.
 *
 * The band start is drawn uniformly by `seed` among in-bounds starts whose
 * labeled-pixel test fraction is within tolerance of `test_width_frac`. On a
 * fully labeled grid every in-bounds start qualifies.
 */
inline SplitMask swath_split(SpeciesMap const& map, SwathParams const& p,
                             std::uint64_t seed)
{
    if (!(p.test_width_frac > 0.0 && p.test_width_frac < 1.0))
        throw ParameterError("test-frac must be in (0,1)");
    bool const vertical = p.orientation == SwathOrientation::VERTICAL;
    std::uint32_t const extent = vertical ? map.n_azimuth() : map.n_range();
    auto const width = static_cast<std::uint32_t>(
        std::llround(p.test_width_frac * extent));
    if (width == 0 || width > extent)
        throw ParameterError("swath band of width " + std::to_string(width)
                             + " does not fit a grid extent of "
                             + std::to_string(extent));

    // Per-line labeled counts along the band axis.
    std::vector<std::size_t> line_labeled(extent, 0);
    std::size_t total_labeled = 0;
    for (std::uint32_t r = 0; r < map.n_range(); ++r)
        for (std::uint32_t a = 0; a < map.n_azimuth(); ++a)
            if (map.label(r, a) != 0)
            {
                ++line_labeled[vertical ? a : r];
                ++total_labeled;
            }

    std::vector<std::uint32_t> starts;
    std::size_t window = 0;
    for (std::uint32_t i = 0; i < width; ++i)
        window += line_labeled[i];
    for (std::uint32_t s = 0; s + width <= extent; ++s)
    {
        if (s > 0)
            window += line_labeled[s + width - 1] - line_labeled[s - 1];
        double const frac = total_labeled
                                ? double(window) / double(total_labeled)
                                : double(width) / double(extent);
        if (std::abs(frac - p.test_width_frac) <= p.tolerance + 1e-12)
            starts.push_back(s);
    }
    if (starts.empty())
        throw ParameterError("no swath position reaches a labeled test "
                             "fraction within tolerance");

    Rng rng(seed, 0x5a47);
    std::uint32_t const start = starts[rng.below(starts.size())];

    SplitMask m;
    m.n_range = map.n_range();
    m.n_azimuth = map.n_azimuth();
    m.method = SplitMethod::SWATH;
    m.seed = seed;
    m.swath = p;
    m.band_start = start;
    m.band_width = width;
    m.assignment.assign(std::size_t(m.n_range) * m.n_azimuth, SplitTag::TRAIN);
    std::int64_t const lo = std::int64_t(start) - p.buffer;
    std::int64_t const hi = std::int64_t(start) + width + p.buffer;
    for (std::uint32_t r = 0; r < m.n_range; ++r)
        for (std::uint32_t a = 0; a < m.n_azimuth; ++a)
        {
            std::int64_t const pos = vertical ? a : r;
            SplitTag t = SplitTag::TRAIN;
            if (pos >= start && pos < std::int64_t(start) + width)
                t = SplitTag::TEST;
            else if (pos >= lo && pos < hi)
                t = SplitTag::EXCLUDED;
            m.assignment[std::size_t(r) * m.n_azimuth + a] = t;
        }
    return m;
}

inline SplitMask swath_split(SpeciesMap const& map, double test_width_frac,
                             std::uint64_t seed)
{
    SwathParams p;
    p.test_width_frac = test_width_frac;
    return swath_split(map, p, seed);
}

/*!
 * Random non-overlapping TEST squares of side round(frac * n_azimuth).
 *
 * Squares are placed by rejection sampling; a candidate is rejected if it
 * overlaps or touches (8-neighbourhood) an existing square, or if it would
 * push the labeled test fraction above target + tolerance. Placement stops
 * once the fraction reaches target - tolerance.
 */
inline SplitMask square_split(SpeciesMap const& map, SquareParams const& p,
                              std::uint64_t seed)
{
    if (!(p.square_side_frac > 0.0 && p.square_side_frac < 1.0))
        throw ParameterError("square side fraction must be in (0,1)");
    if (!(p.target_test_frac > 0.0 && p.target_test_frac < 1.0))
        throw ParameterError("target test fraction must be in (0,1)");
    std::uint32_t const nr = map.n_range(), na = map.n_azimuth();
    auto const side = static_cast<std::uint32_t>(
        std::llround(p.square_side_frac * na));
    if (side == 0 || side > nr || side > na)
        throw ParameterError("square side " + std::to_string(side)
                             + " does not fit the grid");

    std::size_t const total_labeled = map.labeled_pixels();
    auto const denom = double(total_labeled ? total_labeled : std::size_t(nr) * na);
    auto const& labels = map.labels();

    // occupied: square cells dilated by one pixel plus the buffer ring.
    std::vector<std::uint8_t> occupied(std::size_t(nr) * na, 0);
    std::vector<PlacedSquare> squares;
    std::size_t test_labeled = 0;
    double const lower = p.target_test_frac - p.tolerance;
    double const upper = p.target_test_frac + p.tolerance;
    Rng rng(seed, 0x5a48);

    std::size_t attempts = 0;
    while (squares.empty() || double(test_labeled) / denom < lower)
    {
        if (attempts++ >= p.max_attempts)
            throw SaturationError(
                "square placement saturated after "
                    + std::to_string(p.max_attempts) + " attempts",
                double(test_labeled) / denom);
        auto const row = std::uint32_t(rng.below(nr - side + 1));
        auto const col = std::uint32_t(rng.below(na - side + 1));
        bool clash = false;
        std::size_t gain = 0;
        for (std::uint32_t r = row; r < row + side && !clash; ++r)
            for (std::uint32_t a = col; a < col + side; ++a)
            {
                std::size_t const i = std::size_t(r) * na + a;
                if (occupied[i])
                {
                    clash = true;
                    break;
                }
                gain += total_labeled ? labels[i] != 0 : 1;
            }
        if (clash || double(test_labeled + gain) / denom > upper + 1e-12)
            continue;
        squares.push_back({row, col, side});
        test_labeled += gain;
        std::int64_t const halo = 1 + std::int64_t(p.buffer);
        std::int64_t const r0 = std::max<std::int64_t>(0, std::int64_t(row) - halo);
        std::int64_t const r1 = std::min<std::int64_t>(nr, std::int64_t(row) + side + halo);
        std::int64_t const a0 = std::max<std::int64_t>(0, std::int64_t(col) - halo);
        std::int64_t const a1 = std::min<std::int64_t>(na, std::int64_t(col) + side + halo);
        for (std::int64_t r = r0; r < r1; ++r)
            for (std::int64_t a = a0; a < a1; ++a)
                occupied[std::size_t(r) * na + std::size_t(a)] = 1;
    }

    SplitMask m;
    m.n_range = nr;
    m.n_azimuth = na;
    m.method = SplitMethod::SQUARE;
    m.seed = seed;
    m.square = p;
    m.squares = squares;
    m.assignment.assign(std::size_t(nr) * na, SplitTag::TRAIN);
    if (p.buffer > 0)
    {
        std::int64_t const b = p.buffer;
        for (auto const& s : squares)
            for (std::int64_t r = std::max<std::int64_t>(0, s.row - b);
                 r < std::min<std::int64_t>(nr, std::int64_t(s.row) + s.side + b); ++r)
                for (std::int64_t a = std::max<std::int64_t>(0, s.col - b);
                     a < std::min<std::int64_t>(na, std::int64_t(s.col) + s.side + b);
                     ++a)
                    m.assignment[std::size_t(r) * na + std::size_t(a)]
                        = SplitTag::EXCLUDED;
    }
    for (auto const& s : squares)
        for (std::uint32_t r = s.row; r < s.row + s.side; ++r)
            for (std::uint32_t a = s.col; a < s.col + s.side; ++a)
                m.assignment[std::size_t(r) * na + a] = SplitTag::TEST;
    return m;
}

inline SplitMask square_split(SpeciesMap const& map, double square_side_frac,
                              double target_test_frac, std::uint64_t seed)
{
    SquareParams p;
    p.square_side_frac = square_side_frac;
    p.target_test_frac = target_test_frac;
    return square_split(map, p, seed);
}

//! Number of 4-connected components of `tag` cells.
inline std::size_t count_components(SplitMask const& m, SplitTag tag)
{
    std::size_t const nr = m.n_range, na = m.n_azimuth;
    std::vector<std::uint8_t> seen(nr * na, 0);
    std::vector<std::size_t> stack;
    std::size_t components = 0;
    for (std::size_t start = 0; start < nr * na; ++start)
    {
        if (seen[start] || m.assignment[start] != tag)
            continue;
        ++components;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty())
        {
            std::size_t const i = stack.back();
            stack.pop_back();
            std::size_t const r = i / na, a = i % na;
            auto visit = [&](std::size_t j) {
                if (!seen[j] && m.assignment[j] == tag)
                {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            };
            if (r > 0) visit(i - na);
            if (r + 1 < nr) visit(i + na);
            if (a > 0) visit(i - 1);
            if (a + 1 < na) visit(i + 1);
        }
    }
    return components;
}

struct ClassSplitCounts
{
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t excluded = 0;
};

struct SplitReport
{
    std::map<int, ClassSplitCounts> per_class;
    std::size_t labeled_total = 0;
    std::size_t train_total = 0;
    std::size_t test_total = 0;
    std::size_t excluded_total = 0;
    double test_fraction = 0.0;       //!< test / labeled
    std::size_t test_components = 0;  //!< 4-connected, over all pixels
    std::vector<std::string> warnings;
};

inline SplitReport validate_split(SplitMask const& mask, SpeciesMap const& map)
{
    if (mask.n_range != map.n_range() || mask.n_azimuth != map.n_azimuth())
        throw ShapeError("split mask and species map dimensions differ");
    SplitReport rep;
    auto const& labels = map.labels();
    for (std::size_t i = 0; i < labels.size(); ++i)
    {
        int const l = labels[i];
        if (l == 0)
            continue;
        ++rep.labeled_total;
        auto& c = rep.per_class[l];
        switch (mask.assignment[i])
        {
            case SplitTag::TRAIN: ++c.train; ++rep.train_total; break;
            case SplitTag::TEST: ++c.test; ++rep.test_total; break;
            case SplitTag::EXCLUDED: ++c.excluded; ++rep.excluded_total; break;
        }
    }
    rep.test_fraction = rep.labeled_total
                            ? double(rep.test_total) / double(rep.labeled_total)
                            : 0.0;
    rep.test_components = count_components(mask, SplitTag::TEST);
    for (auto const& [cls, c] : rep.per_class)
    {
        if (c.train == 0 && c.test > 0)
            rep.warnings.push_back("class " + std::to_string(cls)
                                   + " absent from train");
        else if (c.test == 0 && c.train > 0)
            rep.warnings.push_back("class " + std::to_string(cls)
                                   + " absent from test");
    }
    return rep;
}

//! Mask as LBL1 (0 excluded, 1 train, 2 test) plus `<path>.meta` sidecar.
inline void write_split_mask(std::string const& path, SplitMask const& m)
{
    LabelRaster r{m.n_range, m.n_azimuth, {}};
    r.values.reserve(m.assignment.size());
    for (auto t : m.assignment)
        r.values.push_back(static_cast<std::uint8_t>(t));
    write_label_raster(path, r);

    std::ofstream meta(path + ".meta");
    if (!meta)
        throw IoError("cannot write '" + path + ".meta'");
    meta << std::setprecision(17);
    meta << "method = " << to_string(m.method) << '\n';
    meta << "seed = " << m.seed << '\n';
    if (m.method == SplitMethod::SWATH)
    {
        meta << "test_width_frac = " << m.swath.test_width_frac << '\n';
        meta << "orientation = "
             << (m.swath.orientation == SwathOrientation::VERTICAL ? "vertical"
                                                                   : "horizontal")
             << '\n';
        meta << "buffer = " << m.swath.buffer << '\n';
        meta << "band_start = " << m.band_start << '\n';
        meta << "band_width = " << m.band_width << '\n';
    }
    else
    {
        meta << "square_side_frac = " << m.square.square_side_frac << '\n';
        meta << "target_test_frac = " << m.square.target_test_frac << '\n';
        meta << "buffer = " << m.square.buffer << '\n';
        meta << "squares = " << m.squares.size() << '\n';
    }
}

//! Reads the raster; method/seed are restored from the sidecar if present.
inline SplitMask read_split_mask(std::string const& path)
{
    auto r = read_label_raster(path);
    SplitMask m;
    m.n_range = r.n_range;
    m.n_azimuth = r.n_azimuth;
    m.assignment.reserve(r.values.size());
    for (auto v : r.values)
    {
        if (v > 2)
            throw FormatError("split mask value " + std::to_string(v)
                              + " outside {0,1,2}");
        m.assignment.push_back(static_cast<SplitTag>(v));
    }
    std::ifstream meta(path + ".meta");
    std::string line;
    while (meta && std::getline(meta, line))
    {
        auto const eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        auto trim = [](std::string s) {
            auto const b = s.find_first_not_of(" \t");
            auto const e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        std::string const key = trim(line.substr(0, eq));
        std::string const val = trim(line.substr(eq + 1));
        if (key == "method")
            m.method = val == "square" ? SplitMethod::SQUARE : SplitMethod::SWATH;
        else if (key == "seed")
            m.seed = std::stoull(val);
    }
    return m;
}

}  // namespace tomoclass
