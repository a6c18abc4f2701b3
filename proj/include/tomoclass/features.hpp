#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "cube_io.hpp"
#include "error.hpp"
#include "geosplit.hpp"
#include "parallel.hpp"

namespace tomoclass {

enum class IntensityScale : std::uint8_t
{
    LINEAR,
    DB
};

struct FeatureSpec
{
    std::vector<PolChannel> channels{PolChannel::HH, PolChannel::HV,
                                     PolChannel::VV};
    bool include_xy = false;
    IntensityScale scale = IntensityScale::LINEAR;
    double db_floor = -60.0;

    void validate() const
    {
        if (channels.empty())
            throw ParameterError("feature spec needs at least one channel");
        if (!std::isfinite(db_floor))
            throw ParameterError("dB floor must be finite");
        for (std::size_t i = 0; i < channels.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (channels[i] == channels[j])
                    throw ParameterError("duplicate channel in feature spec");
    }
};

inline float to_db(float v, double db_floor)
{
    double const floor_lin = std::pow(10.0, db_floor / 10.0);
    return static_cast<float>(10.0 * std::log10(std::max<double>(v, floor_lin)));
}

/*!
 * Labeled rows of the flattened cube.
 *
 * Features are channel-major, height-bin ascending, with the raw grid
 * indices x (azimuth) and y (range) appended when requested. Values are
 * stored row-major as float.
 */
class FeatureTable
{
  public:
    std::vector<std::string> column_names;
    bool include_xy = false;
    IntensityScale scale = IntensityScale::LINEAR;
    std::vector<float> values;       //!< n_rows * n_features, row-major
    std::vector<std::uint8_t> labels;
    std::vector<std::uint32_t> x;    //!< azimuth index
    std::vector<std::uint32_t> y;    //!< range index
    std::vector<SplitTag> split;

    std::size_t n_rows() const { return labels.size(); }
    std::size_t n_features() const { return column_names.size(); }
    bool empty() const { return labels.empty(); }

    std::span<float const> row(std::size_t i) const
    {
        return {values.data() + i * n_features(), n_features()};
    }
    float value(std::size_t i, std::size_t f) const
    {
        return values[i * n_features() + f];
    }

    //! Identifies the column layout; models refuse tables that disagree.
    std::uint64_t schema_hash() const
    {
        std::string key = scale == IntensityScale::DB ? "db|" : "linear|";
        for (auto const& c : column_names)
            key += c + ',';
        return detail::fnv1a(key);
    }

    void push_row(std::span<float const> features, std::uint8_t label,
                  std::uint32_t xi, std::uint32_t yi, SplitTag tag)
    {
        values.insert(values.end(), features.begin(), features.end());
        labels.push_back(label);
        x.push_back(xi);
        y.push_back(yi);
        split.push_back(tag);
    }

    FeatureTable empty_like() const
    {
        FeatureTable t;
        t.column_names = column_names;
        t.include_xy = include_xy;
        t.scale = scale;
        return t;
    }

    //! Rows with the given split tag, in original order.
    FeatureTable subset(SplitTag tag) const
    {
        FeatureTable t = empty_like();
        for (std::size_t i = 0; i < n_rows(); ++i)
            if (split[i] == tag)
                t.push_row(row(i), labels[i], x[i], y[i], split[i]);
        return t;
    }

    FeatureTable subset(std::span<std::size_t const> rows) const
    {
        FeatureTable t = empty_like();
        for (auto i : rows)
            t.push_row(row(i), labels[i], x[i], y[i], split[i]);
        return t;
    }
};

inline std::vector<std::string> feature_columns(FeatureSpec const& spec,
                                                std::uint32_t n_height)
{
    std::vector<std::string> names;
    for (auto c : spec.channels)
        for (std::uint32_t h = 0; h < n_height; ++h)
            names.push_back("f_" + std::string(to_string(c)) + "_"
                            + std::to_string(h));
    if (spec.include_xy)
    {
        names.emplace_back("x");
        names.emplace_back("y");
    }
    return names;
}

/*!
 * One row per pixel with label != 0, valid cube data and mask != EXCLUDED.
 *
 * Rows come out in row-major pixel order. Construction is split over range
 * lines on `workers` threads; line blocks are concatenated in order so the
 * output matches the sequential build byte for byte.
 */
inline FeatureTable build_table(TomoCube const& cube, SpeciesMap const& map,
                                SplitMask const& mask, FeatureSpec const& spec,
                                unsigned workers = 1)
{
    spec.validate();
    if (cube.n_range() != map.n_range() || cube.n_azimuth() != map.n_azimuth()
        || mask.n_range != map.n_range() || mask.n_azimuth != map.n_azimuth())
        throw ShapeError("cube, species map and split mask dimensions differ");
    std::vector<std::size_t> chan_idx;
    for (auto c : spec.channels)
    {
        auto idx = cube.axes().channel_index(c);
        if (!idx)
            throw ChannelError("channel " + std::string(to_string(c))
                               + " not present in cube");
        chan_idx.push_back(*idx);
    }

    FeatureTable table;
    table.column_names = feature_columns(spec, cube.n_height());
    table.include_xy = spec.include_xy;
    table.scale = spec.scale;

    std::size_t const nh = cube.n_height();
    std::size_t const nc = cube.channels().size();
    std::size_t const nf = table.n_features();
    std::vector<FeatureTable> lines(cube.n_range(), table.empty_like());
    parallel_for(cube.n_range(), workers, [&](std::size_t r) {
        FeatureTable& out = lines[r];
        std::vector<float> feat(nf);
        for (std::size_t a = 0; a < cube.n_azimuth(); ++a)
        {
            auto const label = map.label(r, a);
            auto const tag = mask.at(r, a);
            if (label == 0 || tag == SplitTag::EXCLUDED || !cube.valid(r, a))
                continue;
            auto const px = cube.pixel(r, a);
            std::size_t k = 0;
            for (auto ci : chan_idx)
                for (std::size_t h = 0; h < nh; ++h)
                {
                    float const v = px[h * nc + ci];
                    feat[k++] = spec.scale == IntensityScale::DB
                                    ? to_db(v, spec.db_floor)
                                    : v;
                }
            if (spec.include_xy)
            {
                feat[k++] = static_cast<float>(a);
                feat[k++] = static_cast<float>(r);
            }
            out.push_row(feat, label, std::uint32_t(a), std::uint32_t(r), tag);
        }
    });
    for (auto& l : lines)
    {
        table.values.insert(table.values.end(), l.values.begin(), l.values.end());
        table.labels.insert(table.labels.end(), l.labels.begin(), l.labels.end());
        table.x.insert(table.x.end(), l.x.begin(), l.x.end());
        table.y.insert(table.y.end(), l.y.begin(), l.y.end());
        table.split.insert(table.split.end(), l.split.begin(), l.split.end());
    }
    return table;
}

inline std::map<int, std::size_t> class_counts(FeatureTable const& table)
{
    std::map<int, std::size_t> counts;
    for (auto l : table.labels)
        ++counts[l];
    return counts;
}

//! All labels that occur, ascending.
inline std::vector<int> class_list(FeatureTable const& table)
{
    std::vector<int> out;
    for (auto const& [cls, n] : class_counts(table))
        out.push_back(cls);
    return out;
}

//---------------------------------------------------------------------------//
// CSV
//---------------------------------------------------------------------------//

/*!
 * CSV layout: a `# tomoclass-table ...` comment recording the scale and XY
 * flag, then the header row `f_<CH>_<bin>..., x, y, label, split`. When XY
 * features are enabled the trailing `x, y` columns double as features.
 */
inline void write_table_csv(std::ostream& os, FeatureTable const& t)
{
    os << "# tomoclass-table scale="
       << (t.scale == IntensityScale::DB ? "db" : "linear")
       << " include_xy=" << (t.include_xy ? 1 : 0) << '\n';
    std::size_t const n_intensity = t.n_features() - (t.include_xy ? 2 : 0);
    for (std::size_t f = 0; f < n_intensity; ++f)
        os << t.column_names[f] << ',';
    os << "x,y,label,split\n";
    char buf[64];
    for (std::size_t i = 0; i < t.n_rows(); ++i)
    {
        auto const r = t.row(i);
        for (std::size_t f = 0; f < n_intensity; ++f)
        {
            auto res = std::to_chars(buf, buf + sizeof(buf), r[f]);
            os.write(buf, res.ptr - buf);
            os << ',';
        }
        os << t.x[i] << ',' << t.y[i] << ',' << int(t.labels[i]) << ','
           << to_string(t.split[i]) << '\n';
    }
}

inline void write_table_csv(std::string const& path, FeatureTable const& t)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_table_csv(os, t);
}

inline FeatureTable read_table_csv(std::istream& is)
{
    FeatureTable t;
    std::string line;
    if (!std::getline(is, line))
        throw FormatError("empty table CSV");
    if (line.rfind("# tomoclass-table", 0) == 0)
    {
        t.scale = line.find("scale=db") != std::string::npos
                      ? IntensityScale::DB
                      : IntensityScale::LINEAR;
        t.include_xy = line.find("include_xy=1") != std::string::npos;
        if (!std::getline(is, line))
            throw FormatError("table CSV has no header row");
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            header.push_back(cell);
    }
    if (header.size() < 4 || header[header.size() - 4] != "x"
        || header[header.size() - 3] != "y" || header[header.size() - 2] != "label"
        || header.back() != "split")
        throw FormatError("table CSV header must end with x,y,label,split");
    std::size_t const n_intensity = header.size() - 4;
    t.column_names.assign(header.begin(), header.begin() + long(n_intensity));
    if (t.include_xy)
    {
        t.column_names.emplace_back("x");
        t.column_names.emplace_back("y");
    }

    std::vector<float> feat(t.n_features());
    std::size_t lineno = 2;
    while (std::getline(is, line))
    {
        ++lineno;
        if (line.empty())
            continue;
        char const* p = line.data();
        char const* end = p + line.size();
        auto next_field = [&]() -> std::string_view {
            char const* start = p;
            while (p < end && *p != ',')
                ++p;
            std::string_view field(start, std::size_t(p - start));
            if (p < end)
                ++p;
            return field;
        };
        auto fail = [&] {
            throw FormatError("malformed table row on line " + std::to_string(lineno));
        };
        for (std::size_t f = 0; f < n_intensity; ++f)
        {
            auto field = next_field();
            auto res = std::from_chars(field.data(), field.data() + field.size(), feat[f]);
            if (res.ec != std::errc{})
                fail();
        }
        std::uint32_t xi = 0, yi = 0;
        unsigned label = 0;
        auto fx = next_field();
        auto fy = next_field();
        auto fl = next_field();
        std::string_view fs(p, std::size_t(end - p));
        if (!fs.empty() && fs.back() == '\r')
            fs.remove_suffix(1);
        if (std::from_chars(fx.data(), fx.data() + fx.size(), xi).ec != std::errc{}
            || std::from_chars(fy.data(), fy.data() + fy.size(), yi).ec != std::errc{}
            || std::from_chars(fl.data(), fl.data() + fl.size(), label).ec != std::errc{})
            fail();
        if (label < 1 || label > unsigned(n_species))
            throw DomainError("table label outside [1, 8] on line "
                              + std::to_string(lineno));
        SplitTag tag = SplitTag::TRAIN;
        if (fs == "train")
            tag = SplitTag::TRAIN;
        else if (fs == "test")
            tag = SplitTag::TEST;
        else
            fail();
        if (t.include_xy)
        {
            feat[n_intensity] = float(xi);
            feat[n_intensity + 1] = float(yi);
        }
        t.push_row(feat, std::uint8_t(label), xi, yi, tag);
    }
    return t;
}

inline FeatureTable read_table_csv(std::string const& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_table_csv(is);
}

}  // namespace tomoclass
