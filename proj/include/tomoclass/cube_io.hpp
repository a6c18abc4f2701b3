#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"

namespace tomoclass {

enum class PolChannel : std::uint8_t
{
    HH = 0,
    HV = 1,
    VV = 2
};

enum class Heading : std::uint8_t
{
    NW = 0,
    SE = 1,
    MERGED = 2
};

inline constexpr std::array<PolChannel, 3> all_channels{
    PolChannel::HH, PolChannel::HV, PolChannel::VV};

inline std::string_view to_string(PolChannel c)
{
    switch (c)
    {
        case PolChannel::HH: return "HH";
        case PolChannel::HV: return "HV";
        case PolChannel::VV: return "VV";
    }
    return "?";
}

inline std::string_view to_string(Heading h)
{
    switch (h)
    {
        case Heading::NW: return "NW";
        case Heading::SE: return "SE";
        case Heading::MERGED: return "MERGED";
    }
    return "?";
}

inline PolChannel parse_channel(std::string_view s)
{
    for (auto c : all_channels)
        if (to_string(c) == s)
            return c;
    throw ChannelError("unknown polarimetric channel '" + std::string(s) + "'");
}

inline constexpr float nodata_f32 = std::numeric_limits<float>::quiet_NaN();
inline constexpr double nodata_f64 = std::numeric_limits<double>::quiet_NaN();

//---------------------------------------------------------------------------//
// TomoCube
//---------------------------------------------------------------------------//

struct CubeAxes
{
    std::uint32_t n_range = 0;
    std::uint32_t n_azimuth = 0;
    std::uint32_t n_height = 0;
    std::vector<PolChannel> channels;
    float height_min_m = -10.0f;
    float height_step_m = 2.0f;
    std::string band = "P";
    Heading heading = Heading::MERGED;

    std::size_t n_pixels() const
    {
        return std::size_t(n_range) * n_azimuth;
    }
    std::size_t voxels_per_pixel() const
    {
        return std::size_t(n_height) * channels.size();
    }
    //! Centre of height bin `bin`; bins span [min + i*step, min + (i+1)*step).
    double bin_center(std::size_t bin) const
    {
        return double(height_min_m) + (double(bin) + 0.5) * height_step_m;
    }
    //! Index of `c` within `channels`, or nullopt.
    std::optional<std::size_t> channel_index(PolChannel c) const
    {
        auto it = std::find(channels.begin(), channels.end(), c);
        if (it == channels.end())
            return std::nullopt;
        return std::size_t(it - channels.begin());
    }

    bool same_geometry(CubeAxes const& o) const
    {
        return n_range == o.n_range && n_azimuth == o.n_azimuth
               && n_height == o.n_height && channels == o.channels
               && height_min_m == o.height_min_m
               && height_step_m == o.height_step_m;
    }

    void validate() const
    {
        if (n_height < 1)
            throw HeaderError("cube must have at least one height bin");
        if (!(height_step_m > 0.0f) || !std::isfinite(height_step_m))
            throw HeaderError("height step must be positive");
        if (!std::isfinite(height_min_m))
            throw HeaderError("height minimum must be finite");
        if (channels.empty())
            throw HeaderError("cube must carry at least one channel");
        for (std::size_t i = 0; i < channels.size(); ++i)
        {
            if (static_cast<std::uint8_t>(channels[i]) > 2)
                throw HeaderError("invalid channel code");
            for (std::size_t j = 0; j < i; ++j)
                if (channels[i] == channels[j])
                    throw HeaderError("duplicate channel "
                                      + std::string(to_string(channels[i])));
        }
        if (static_cast<std::uint8_t>(heading) > 2)
            throw HeaderError("invalid heading code");
        if (band.size() > 255)
            throw HeaderError("band tag longer than 255 bytes");
    }
};

/*!
 * Tomographic intensity cube, indexed (range, azimuth, height, channel).
 *
 * Intensities are linear power. A pixel is valid iff every voxel of its
 * profile is finite; invalid pixels hold NaN throughout.
 */
class TomoCube
{
  public:
    TomoCube() = default;

    TomoCube(CubeAxes axes, std::vector<float> intensity)
        : axes_(std::move(axes)), intensity_(std::move(intensity))
    {
        axes_.validate();
        std::size_t const per_pixel = axes_.voxels_per_pixel();
        if (intensity_.size() != axes_.n_pixels() * per_pixel)
            throw ShapeError("intensity array size does not match cube axes");
        valid_.assign(axes_.n_pixels(), 1);
        for (std::size_t p = 0; p < axes_.n_pixels(); ++p)
        {
            auto* v = intensity_.data() + p * per_pixel;
            bool ok = true;
            for (std::size_t k = 0; k < per_pixel; ++k)
            {
                if (!std::isfinite(v[k]))
                {
                    ok = false;
                    break;
                }
            }
            if (!ok)
            {
                valid_[p] = 0;
                std::fill(v, v + per_pixel, nodata_f32);
                continue;
            }
            for (std::size_t k = 0; k < per_pixel; ++k)
                if (v[k] < 0.0f)
                    throw DomainError("negative intensity in valid pixel");
        }
    }

    CubeAxes const& axes() const { return axes_; }
    std::uint32_t n_range() const { return axes_.n_range; }
    std::uint32_t n_azimuth() const { return axes_.n_azimuth; }
    std::uint32_t n_height() const { return axes_.n_height; }
    std::vector<PolChannel> const& channels() const { return axes_.channels; }
    Heading heading() const { return axes_.heading; }

    std::size_t pixel_index(std::size_t r, std::size_t a) const
    {
        return r * axes_.n_azimuth + a;
    }
    bool valid(std::size_t r, std::size_t a) const
    {
        return valid_[pixel_index(r, a)] != 0;
    }
    std::vector<std::uint8_t> const& valid_mask() const { return valid_; }

    //! Voxels of one pixel, ordered height-major then channel.
    std::span<float const> pixel(std::size_t r, std::size_t a) const
    {
        std::size_t const n = axes_.voxels_per_pixel();
        return {intensity_.data() + pixel_index(r, a) * n, n};
    }
    float at(std::size_t r, std::size_t a, std::size_t h, std::size_t c) const
    {
        return pixel(r, a)[h * axes_.channels.size() + c];
    }
    std::vector<float> const& intensity() const { return intensity_; }

  private:
    CubeAxes axes_;
    std::vector<float> intensity_;
    std::vector<std::uint8_t> valid_;
};

inline constexpr std::string_view tomo_magic{"TOMO1\0", 6};

inline void write_cube(std::ostream& os, TomoCube const& cube)
{
    auto const& ax = cube.axes();
    os.write(tomo_magic.data(), tomo_magic.size());
    detail::write_le<std::uint32_t>(os, ax.n_range);
    detail::write_le<std::uint32_t>(os, ax.n_azimuth);
    detail::write_le<std::uint32_t>(os, ax.n_height);
    detail::write_le<std::uint32_t>(os,
                                    static_cast<std::uint32_t>(ax.channels.size()));
    detail::write_le<float>(os, ax.height_min_m);
    detail::write_le<float>(os, ax.height_step_m);
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(ax.heading));
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(ax.band.size()));
    os.write(ax.band.data(), static_cast<std::streamsize>(ax.band.size()));
    for (auto c : ax.channels)
        detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c));
    auto const& data = cube.intensity();
    os.write(reinterpret_cast<char const*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!os)
        throw IoError("failed writing cube");
}

inline void write_cube(std::string const& path, TomoCube const& cube)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_cube(os, cube);
}

inline TomoCube read_cube(std::istream& is)
{
    detail::expect_magic(is, std::string(tomo_magic), "TOMO1");
    CubeAxes ax;
    ax.n_range = detail::read_le<std::uint32_t>(is, "n_range");
    ax.n_azimuth = detail::read_le<std::uint32_t>(is, "n_azimuth");
    ax.n_height = detail::read_le<std::uint32_t>(is, "n_height");
    auto const n_channels = detail::read_le<std::uint32_t>(is, "n_channels");
    ax.height_min_m = detail::read_le<float>(is, "height_min_m");
    ax.height_step_m = detail::read_le<float>(is, "height_step_m");
    auto const heading = detail::read_le<std::uint8_t>(is, "heading");
    if (heading > 2)
        throw HeaderError("invalid heading code " + std::to_string(heading));
    ax.heading = static_cast<Heading>(heading);
    auto const band_len = detail::read_le<std::uint8_t>(is, "band length");
    ax.band.assign(band_len, '\0');
    is.read(ax.band.data(), band_len);
    if (is.gcount() != band_len)
        throw TruncationError("unexpected end of file reading band tag");
    if (n_channels == 0 || n_channels > 3)
        throw HeaderError("channel count must be 1..3");
    for (std::uint32_t i = 0; i < n_channels; ++i)
    {
        auto const code = detail::read_le<std::uint8_t>(is, "channel code");
        if (code > 2)
            throw HeaderError("invalid channel code " + std::to_string(code));
        ax.channels.push_back(static_cast<PolChannel>(code));
    }
    if (!(ax.height_step_m > 0.0f))
        throw HeaderError("height step must be positive");
    ax.validate();

    std::uint64_t const expected = std::uint64_t(ax.n_range) * ax.n_azimuth
                                   * ax.n_height * n_channels * sizeof(float);
    std::uint64_t const available = detail::remaining_bytes(is);
    if (available != expected)
        throw TruncationError("payload holds " + std::to_string(available)
                              + " bytes, header implies "
                              + std::to_string(expected));
    std::vector<float> data(expected / sizeof(float));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(expected));
    if (static_cast<std::uint64_t>(is.gcount()) != expected)
        throw TruncationError("short read of cube payload");
    return TomoCube(std::move(ax), std::move(data));
}

inline TomoCube read_cube(std::string const& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_cube(is);
}

/*!
 * Combine the two heading acquisitions.
 *
 * Both valid: voxel mean. One valid: that acquisition. Neither: invalid.
 * The operation is symmetric in its arguments.
 */
inline TomoCube merge_headings(TomoCube const& a, TomoCube const& b)
{
    if (!a.axes().same_geometry(b.axes()))
        throw ShapeError("cannot merge cubes with different dimensions, "
                         "channels or height axis");
    bool const tags_ok = (a.heading() == Heading::NW && b.heading() == Heading::SE)
                         || (a.heading() == Heading::SE
                             && b.heading() == Heading::NW);
    if (!tags_ok)
        throw ShapeError("merge expects one NW and one SE acquisition");

    CubeAxes ax = a.axes();
    ax.heading = Heading::MERGED;
    std::size_t const per_pixel = ax.voxels_per_pixel();
    std::vector<float> out(a.intensity().size());
    auto const& da = a.intensity();
    auto const& db = b.intensity();
    for (std::size_t p = 0; p < ax.n_pixels(); ++p)
    {
        bool const va = a.valid_mask()[p] != 0;
        bool const vb = b.valid_mask()[p] != 0;
        std::size_t const off = p * per_pixel;
        for (std::size_t k = 0; k < per_pixel; ++k)
        {
            float v = nodata_f32;
            if (va && vb)
                v = (da[off + k] + db[off + k]) * 0.5f;
            else if (va)
                v = da[off + k];
            else if (vb)
                v = db[off + k];
            out[off + k] = v;
        }
    }
    return TomoCube(std::move(ax), std::move(out));
}

//---------------------------------------------------------------------------//
// Species map
//---------------------------------------------------------------------------//

struct ClassInfo
{
    std::string code;
    std::string name;
};

inline constexpr int n_species = 8;

//! Forest types of the study area, ids 1..8 (id 0 = no ground truth).
inline std::map<int, ClassInfo> const& default_class_dictionary()
{
    static std::map<int, ClassInfo> const dict{
        {1, {"AA0", "Aspen forest"}},
        {2, {"AA1", "Pine forest"}},
        {3, {"AA2", "Beech forest with deciduous woods"}},
        {4, {"AB0", "Douglas fir forest"}},
        {5, {"AJ0", "Mixed spruce forest with native deciduous woods"}},
        {6, {"AJ1", "Oak-beech forest"}},
        {7, {"AK0", "Oak forest"}},
        {8, {"AS0", "Beech forest"}},
    };
    return dict;
}

class SpeciesMap
{
  public:
    SpeciesMap() = default;
    SpeciesMap(std::uint32_t n_range, std::uint32_t n_azimuth,
               std::vector<std::uint8_t> labels,
               std::map<int, ClassInfo> dictionary = default_class_dictionary())
        : n_range_(n_range),
          n_azimuth_(n_azimuth),
          labels_(std::move(labels)),
          dictionary_(std::move(dictionary))
    {
        if (labels_.size() != std::size_t(n_range_) * n_azimuth_)
            throw ShapeError("label array size does not match map dimensions");
        for (auto l : labels_)
            if (l > n_species)
                throw DomainError("class label " + std::to_string(l)
                                  + " outside [0, 8]");
        for (int id = 1; id <= n_species; ++id)
            if (!dictionary_.count(id))
                throw DomainError("class dictionary missing id "
                                  + std::to_string(id));
        if (dictionary_.size() != std::size_t(n_species))
            throw DomainError("class dictionary must cover ids 1..8 exactly");
    }

    std::uint32_t n_range() const { return n_range_; }
    std::uint32_t n_azimuth() const { return n_azimuth_; }
    std::uint8_t label(std::size_t r, std::size_t a) const
    {
        return labels_[r * n_azimuth_ + a];
    }
    std::vector<std::uint8_t> const& labels() const { return labels_; }
    std::map<int, ClassInfo> const& dictionary() const { return dictionary_; }

    //! Pixel count per class id (0 excluded); only ids that occur.
    std::map<int, std::size_t> class_counts() const
    {
        std::map<int, std::size_t> counts;
        for (auto l : labels_)
            if (l != 0)
                ++counts[l];
        return counts;
    }
    std::size_t labeled_pixels() const
    {
        return std::size_t(
            std::count_if(labels_.begin(), labels_.end(),
                          [](std::uint8_t l) { return l != 0; }));
    }

  private:
    std::uint32_t n_range_ = 0;
    std::uint32_t n_azimuth_ = 0;
    std::vector<std::uint8_t> labels_;
    std::map<int, ClassInfo> dictionary_ = default_class_dictionary();
};

//! Raw LBL1 raster: dims plus one byte per pixel.
struct LabelRaster
{
    std::uint32_t n_range = 0;
    std::uint32_t n_azimuth = 0;
    std::vector<std::uint8_t> values;
};

inline constexpr std::string_view label_magic{"LBL1\0", 5};

inline void write_label_raster(std::string const& path, LabelRaster const& r)
{
    if (r.values.size() != std::size_t(r.n_range) * r.n_azimuth)
        throw ShapeError("label raster size does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    os.write(label_magic.data(), label_magic.size());
    detail::write_le<std::uint32_t>(os, r.n_range);
    detail::write_le<std::uint32_t>(os, r.n_azimuth);
    os.write(reinterpret_cast<char const*>(r.values.data()),
             static_cast<std::streamsize>(r.values.size()));
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

inline LabelRaster read_label_raster(std::string const& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    detail::expect_magic(is, std::string(label_magic), "LBL1");
    LabelRaster r;
    r.n_range = detail::read_le<std::uint32_t>(is, "n_range");
    r.n_azimuth = detail::read_le<std::uint32_t>(is, "n_azimuth");
    std::uint64_t const expected = std::uint64_t(r.n_range) * r.n_azimuth;
    if (detail::remaining_bytes(is) != expected)
        throw TruncationError("label payload does not match header dimensions");
    r.values.resize(expected);
    is.read(reinterpret_cast<char*>(r.values.data()),
            static_cast<std::streamsize>(expected));
    return r;
}

inline void write_species_map(std::string const& path, SpeciesMap const& map)
{
    write_label_raster(path, {map.n_range(), map.n_azimuth(), map.labels()});
}

//! Dictionary is always the built-in one; LBL1 carries no class names.
inline SpeciesMap read_species_map(std::string const& path)
{
    auto r = read_label_raster(path);
    return SpeciesMap(r.n_range, r.n_azimuth, std::move(r.values));
}

//---------------------------------------------------------------------------//
// LiDAR and height rasters
//---------------------------------------------------------------------------//

struct LidarPoint
{
    double x = 0;  //!< azimuth axis, cells
    double y = 0;  //!< range axis, cells
    double z = 0;  //!< height, m
};

using LidarPoints = std::vector<LidarPoint>;

inline void write_lidar(std::string const& path, LidarPoints const& pts)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    os << "# x y z\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (auto const& p : pts)
        os << p.x << ' ' << p.y << ' ' << p.z << '\n';
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

inline LidarPoints read_lidar(std::istream& is)
{
    LidarPoints pts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        auto const hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        LidarPoint p;
        std::string extra;
        if (!(ls >> p.x >> p.y >> p.z) || (ls >> extra))
            throw FormatError("malformed LiDAR record on line "
                              + std::to_string(lineno));
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw FormatError("non-finite LiDAR coordinate on line "
                              + std::to_string(lineno));
        pts.push_back(p);
    }
    return pts;
}

inline LidarPoints read_lidar(std::string const& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_lidar(is);
}

//! Per-pixel height in metres; NaN marks nodata.
struct HeightRaster
{
    std::uint32_t n_range = 0;
    std::uint32_t n_azimuth = 0;
    std::vector<double> height_m;

    HeightRaster() = default;
    HeightRaster(std::uint32_t nr, std::uint32_t na)
        : n_range(nr), n_azimuth(na), height_m(std::size_t(nr) * na, nodata_f64)
    {
    }
    double at(std::size_t r, std::size_t a) const
    {
        return height_m[r * n_azimuth + a];
    }
    double& at(std::size_t r, std::size_t a) { return height_m[r * n_azimuth + a]; }
    bool valid(std::size_t r, std::size_t a) const
    {
        return !std::isnan(at(r, a));
    }
};

struct RasterizeResult
{
    HeightRaster raster;
    std::size_t dropped = 0;  //!< points outside the grid
};

//! Canopy height model: max z per 1x1 cell.
inline RasterizeResult rasterize_lidar(LidarPoints const& points,
                                       std::uint32_t n_range,
                                       std::uint32_t n_azimuth)
{
    if (n_range == 0 || n_azimuth == 0)
        throw ParameterError("rasterize_lidar needs positive grid dimensions");
    RasterizeResult out{HeightRaster(n_range, n_azimuth), 0};
    for (auto const& p : points)
    {
        double const col = std::floor(p.x);
        double const row = std::floor(p.y);
        if (!(col >= 0 && col < n_azimuth && row >= 0 && row < n_range))
        {
            ++out.dropped;
            continue;
        }
        double& cell = out.raster.at(std::size_t(row), std::size_t(col));
        if (std::isnan(cell) || p.z > cell)
            cell = p.z;
    }
    return out;
}

}  // namespace tomoclass
