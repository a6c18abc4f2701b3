#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "tomoclass/tomoclass.hpp"

namespace tomoclass::testing {

//! Scratch directory removed on destruction.
class TempDir
{
  public:
    TempDir()
    {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (;;)
        {
            path_ = base / ("tomoclass-test-" + std::to_string(rd()));
            if (std::filesystem::create_directory(path_))
                break;
        }
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(TempDir const&) = delete;
    TempDir& operator=(TempDir const&) = delete;

    std::string file(std::string const& name) const { return (path_ / name).string(); }
    std::filesystem::path const& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline std::string slurp(std::string const& path)
{
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void spit(std::string const& path, std::string const& bytes)
{
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
}

inline CubeAxes make_axes(std::uint32_t nr, std::uint32_t na, std::uint32_t nh,
                          std::vector<PolChannel> ch, Heading h = Heading::MERGED)
{
    CubeAxes ax;
    ax.n_range = nr;
    ax.n_azimuth = na;
    ax.n_height = nh;
    ax.channels = std::move(ch);
    ax.heading = h;
    return ax;
}

inline TomoCube constant_cube(std::uint32_t nr, std::uint32_t na, std::uint32_t nh,
                              float v, Heading h = Heading::MERGED)
{
    auto ax = make_axes(nr, na, nh, {PolChannel::HH, PolChannel::HV, PolChannel::VV}, h);
    return TomoCube(ax, std::vector<float>(ax.n_pixels() * ax.voxels_per_pixel(), v));
}

//! Fully labeled map with every pixel set to `label`.
inline SpeciesMap uniform_map(std::uint32_t nr, std::uint32_t na, std::uint8_t label = 1)
{
    return SpeciesMap(nr, na, std::vector<std::uint8_t>(std::size_t(nr) * na, label));
}

//! Isotropic Gaussian blobs in `dim` dimensions, `per_class` rows each.
inline FeatureTable blob_table(std::vector<std::vector<double>> const& centres,
                               double sigma, std::size_t per_class, std::uint64_t seed)
{
    FeatureTable t;
    std::size_t const d = centres.front().size();
    for (std::size_t f = 0; f < d; ++f)
        t.column_names.push_back("f" + std::to_string(f));
    Rng rng(seed);
    std::vector<float> row(d);
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t k = 0; k < centres.size(); ++k)
        {
            for (std::size_t f = 0; f < d; ++f)
                row[f] = float(centres[k][f] + sigma * rng.normal());
            t.push_row(row, std::uint8_t(k + 1), std::uint32_t(i), std::uint32_t(k),
                       SplitTag::TRAIN);
        }
    return t;
}

//! Table with explicit rows; columns f0..f{d-1}.
inline FeatureTable make_table(std::vector<std::vector<float>> const& rows,
                               std::vector<int> const& labels)
{
    FeatureTable t;
    for (std::size_t f = 0; f < rows.front().size(); ++f)
        t.column_names.push_back("f" + std::to_string(f));
    for (std::size_t i = 0; i < rows.size(); ++i)
        t.push_row(rows[i], std::uint8_t(labels[i]), std::uint32_t(i), 0, SplitTag::TRAIN);
    return t;
}

}  // namespace tomoclass::testing
