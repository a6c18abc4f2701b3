#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "support/test_util.hpp"

namespace tomoclass {
namespace {

using testing::TempDir;

// Hand-assembled TOMO1 header, independent of write_cube.
std::string tomo_header(std::uint32_t nr, std::uint32_t na, std::uint32_t nh,
                        std::vector<std::uint8_t> channels, float hmin, float step,
                        std::uint8_t heading = 2, std::string band = "P")
{
    std::string s("TOMO1\0", 6);
    auto put = [&](auto v) {
        char b[sizeof(v)];
        std::memcpy(b, &v, sizeof(v));
        s.append(b, sizeof(v));
    };
    put(nr);
    put(na);
    put(nh);
    put(std::uint32_t(channels.size()));
    put(hmin);
    put(step);
    put(heading);
    put(std::uint8_t(band.size()));
    s += band;
    for (auto c : channels)
        put(c);
    return s;
}

std::string float_bytes(std::vector<float> const& v)
{
    return std::string(reinterpret_cast<char const*>(v.data()), v.size() * sizeof(float));
}

TEST(PolChannel, ExactlyThreeValues)
{
    ASSERT_EQ(all_channels.size(), 3u);
    EXPECT_EQ(parse_channel("HH"), PolChannel::HH);
    EXPECT_EQ(parse_channel("HV"), PolChannel::HV);
    EXPECT_EQ(parse_channel("VV"), PolChannel::VV);
    EXPECT_THROW(parse_channel("VH"), ChannelError);
}

TEST(ReadCube, FullSceneGeometry)
{
    TempDir dir;
    std::size_t const n = std::size_t(326) * 840 * 36 * 3;
    std::vector<float> payload(n, 0.25f);
    std::string const path = dir.file("full.tomo");
    {
        std::ofstream os(path, std::ios::binary);
        os << tomo_header(326, 840, 36, {0, 1, 2}, -10.0f, 2.0f);
        os.write(reinterpret_cast<char const*>(payload.data()),
                 std::streamsize(n * sizeof(float)));
    }
    auto const cube = read_cube(path);
    EXPECT_EQ(cube.n_range(), 326u);
    EXPECT_EQ(cube.n_azimuth(), 840u);
    EXPECT_EQ(cube.n_height(), 36u);
    EXPECT_EQ(cube.channels().size(), 3u);
    EXPECT_FLOAT_EQ(cube.axes().height_min_m, -10.0f);
    EXPECT_FLOAT_EQ(cube.axes().height_step_m, 2.0f);
    EXPECT_TRUE(cube.valid(325, 839));
}

TEST(ReadCube, MinimalCube)
{
    std::stringstream ss(tomo_header(1, 1, 1, {0}, -10.0f, 2.0f) + float_bytes({0.0f}));
    auto const cube = read_cube(ss);
    ASSERT_EQ(cube.intensity().size(), 1u);
    EXPECT_EQ(cube.at(0, 0, 0, 0), 0.0f);
    EXPECT_TRUE(cube.valid(0, 0));
}

TEST(ReadCube, RoundTripIsByteExact)
{
    TempDir dir;
    auto ax = testing::make_axes(8, 8, 6, {PolChannel::HV, PolChannel::VV}, Heading::SE);
    ax.band = "P";
    Rng rng(42);
    std::vector<float> v(ax.n_pixels() * ax.voxels_per_pixel());
    for (auto& x : v)
        x = float(rng.uniform(0.0, 5.0));
    TomoCube const cube(ax, v);
    write_cube(dir.file("a.tomo"), cube);
    auto const back = read_cube(dir.file("a.tomo"));
    EXPECT_EQ(float_bytes(back.intensity()), float_bytes(v));
    write_cube(dir.file("b.tomo"), back);
    EXPECT_EQ(testing::slurp(dir.file("a.tomo")), testing::slurp(dir.file("b.tomo")));
    EXPECT_EQ(back.heading(), Heading::SE);
    EXPECT_EQ(back.channels(), ax.channels);
    // The written header matches the documented layout byte for byte.
    std::string const expect = tomo_header(8, 8, 6, {1, 2}, -10.0f, 2.0f, 1) + float_bytes(v);
    EXPECT_EQ(testing::slurp(dir.file("a.tomo")), expect);
}

TEST(ReadCube, NodataSurvivesRoundTrip)
{
    auto ax = testing::make_axes(2, 2, 2, {PolChannel::HH});
    std::vector<float> v(8, 1.0f);
    v[2] = nodata_f32;  // pixel (0,1)
    TomoCube const cube(ax, v);
    std::stringstream ss;
    write_cube(ss, cube);
    auto const back = read_cube(ss);
    EXPECT_TRUE(back.valid(0, 0));
    EXPECT_FALSE(back.valid(0, 1));
    EXPECT_TRUE(std::isnan(back.at(0, 1, 1, 0)));
}

TEST(ReadCube, BadMagicIsFormatError)
{
    std::string bytes = tomo_header(1, 1, 1, {0}, 0.0f, 1.0f) + float_bytes({1.0f});
    bytes[0] = 'X';
    std::stringstream ss(bytes);
    EXPECT_THROW(read_cube(ss), FormatError);
}

TEST(ReadCube, PayloadLengthMismatchIsTruncation)
{
    std::stringstream short_ss(tomo_header(2, 2, 1, {0}, 0.0f, 1.0f)
                               + float_bytes({1.0f, 2.0f, 3.0f}));
    EXPECT_THROW(read_cube(short_ss), TruncationError);
    std::stringstream long_ss(tomo_header(1, 1, 1, {0}, 0.0f, 1.0f)
                              + float_bytes({1.0f, 2.0f}));
    EXPECT_THROW(read_cube(long_ss), TruncationError);
    std::stringstream cut_header(tomo_header(1, 1, 1, {0}, 0.0f, 1.0f).substr(0, 12));
    EXPECT_THROW(read_cube(cut_header), TruncationError);
}

TEST(ReadCube, NegativeStepIsHeaderError)
{
    std::stringstream ss(tomo_header(1, 1, 1, {0}, 0.0f, -2.0f) + float_bytes({1.0f}));
    EXPECT_THROW(read_cube(ss), HeaderError);
}

TEST(ReadCube, InvalidHeaderFieldsAreHeaderErrors)
{
    std::stringstream dup(tomo_header(1, 1, 1, {0, 0}, 0.0f, 1.0f)
                          + float_bytes({1.0f, 1.0f}));
    EXPECT_THROW(read_cube(dup), HeaderError);
    std::stringstream bad_code(tomo_header(1, 1, 1, {5}, 0.0f, 1.0f) + float_bytes({1.0f}));
    EXPECT_THROW(read_cube(bad_code), HeaderError);
    std::stringstream no_bins(tomo_header(1, 1, 0, {0}, 0.0f, 1.0f));
    EXPECT_THROW(read_cube(no_bins), HeaderError);
    std::stringstream bad_heading(tomo_header(1, 1, 1, {0}, 0.0f, 1.0f, 7)
                                  + float_bytes({1.0f}));
    EXPECT_THROW(read_cube(bad_heading), HeaderError);
}

TEST(TomoCube, RejectsNegativeIntensityInValidPixel)
{
    auto ax = testing::make_axes(1, 2, 1, {PolChannel::HH});
    EXPECT_THROW(TomoCube(ax, {1.0f, -0.5f}), DomainError);
    // A partially NaN pixel is invalid as a whole; its other voxels are cleared.
    auto ax2 = testing::make_axes(1, 1, 2, {PolChannel::HH});
    TomoCube const c(ax2, {-1.0f, nodata_f32});
    EXPECT_FALSE(c.valid(0, 0));
    EXPECT_TRUE(std::isnan(c.at(0, 0, 0, 0)));
}

TEST(TomoCube, SizeMismatchIsShapeError)
{
    auto ax = testing::make_axes(2, 2, 1, {PolChannel::HH});
    EXPECT_THROW(TomoCube(ax, std::vector<float>(3, 0.0f)), ShapeError);
}

TEST(TomoCube, LayoutIsRangeAzimuthHeightChannel)
{
    auto ax = testing::make_axes(2, 3, 4, {PolChannel::HH, PolChannel::VV});
    std::vector<float> v(ax.n_pixels() * ax.voxels_per_pixel());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = float(i);
    TomoCube const c(ax, v);
    EXPECT_EQ(c.at(1, 2, 3, 1), float(((1 * 3 + 2) * 4 + 3) * 2 + 1));
    EXPECT_DOUBLE_EQ(ax.bin_center(0), -9.0);
    EXPECT_DOUBLE_EQ(ax.bin_center(15), 21.0);
}

//---------------------------------------------------------------------------//

TomoCube one_pixel(Heading h, std::vector<float> v)
{
    auto ax = testing::make_axes(1, std::uint32_t(v.size()), 1, {PolChannel::HH}, h);
    return TomoCube(ax, std::move(v));
}

TEST(MergeHeadings, SingleSourceMeanAndNodata)
{
    auto const nw = one_pixel(Heading::NW, {3.0f, 2.0f, nodata_f32, nodata_f32});
    auto const se = one_pixel(Heading::SE, {nodata_f32, 4.0f, 5.0f, nodata_f32});
    auto const m = merge_headings(nw, se);
    EXPECT_EQ(m.heading(), Heading::MERGED);
    EXPECT_EQ(m.at(0, 0, 0, 0), 3.0f);
    EXPECT_EQ(m.at(0, 1, 0, 0), 3.0f);
    EXPECT_EQ(m.at(0, 2, 0, 0), 5.0f);
    EXPECT_FALSE(m.valid(0, 3));
}

TEST(MergeHeadings, IsSymmetric)
{
    Scene const s = generate_scene(SceneConfig{.n_range = 20, .n_azimuth = 30, .patch_granularity = 2});
    auto const ab = merge_headings(s.nw, s.se);
    auto const ba = merge_headings(s.se, s.nw);
    EXPECT_EQ(float_bytes(ab.intensity()), float_bytes(ba.intensity()));
}

TEST(MergeHeadings, MismatchesAreShapeErrors)
{
    auto const nw = one_pixel(Heading::NW, {1.0f});
    auto const se2 = one_pixel(Heading::SE, {1.0f, 2.0f});
    EXPECT_THROW(merge_headings(nw, se2), ShapeError);
    auto ax = testing::make_axes(1, 1, 1, {PolChannel::HV}, Heading::SE);
    EXPECT_THROW(merge_headings(nw, TomoCube(ax, {1.0f})), ShapeError);
    EXPECT_THROW(merge_headings(nw, one_pixel(Heading::NW, {1.0f})), ShapeError);
}

//---------------------------------------------------------------------------//

TEST(SpeciesMap, AllOnesIsAspen)
{
    TempDir dir;
    write_label_raster(dir.file("m.lbl"), {3, 4, std::vector<std::uint8_t>(12, 1)});
    auto const m = read_species_map(dir.file("m.lbl"));
    EXPECT_EQ(m.labeled_pixels(), 12u);
    EXPECT_EQ(m.class_counts().at(1), 12u);
    EXPECT_EQ(m.dictionary().at(1).code, "AA0");
    EXPECT_EQ(m.dictionary().at(1).name, "Aspen forest");
}

TEST(SpeciesMap, AllZerosHasNoLabels)
{
    auto const m = SpeciesMap(4, 4, std::vector<std::uint8_t>(16, 0));
    EXPECT_EQ(m.labeled_pixels(), 0u);
    EXPECT_TRUE(m.class_counts().empty());
}

TEST(SpeciesMap, CountsMatchDirectScan)
{
    std::vector<std::uint8_t> const v{1, 0, 1, 5, 1, 0};
    auto const m = SpeciesMap(2, 3, v);
    std::map<int, std::size_t> expect;
    for (auto l : v)
        if (l)
            ++expect[l];
    EXPECT_EQ(m.class_counts(), expect);
    EXPECT_EQ(expect, (std::map<int, std::size_t>{{1, 3}, {5, 1}}));
}

TEST(SpeciesMap, LabelOutOfRangeIsDomainError)
{
    TempDir dir;
    write_label_raster(dir.file("m.lbl"), {1, 2, {1, 9}});
    EXPECT_THROW(read_species_map(dir.file("m.lbl")), DomainError);
}

TEST(SpeciesMap, DictionaryCoversTableOfForestTypes)
{
    auto const& d = default_class_dictionary();
    ASSERT_EQ(d.size(), 8u);
    std::vector<std::string> const codes{"AA0", "AA1", "AA2", "AB0",
                                         "AJ0", "AJ1", "AK0", "AS0"};
    for (int id = 1; id <= 8; ++id)
        EXPECT_EQ(d.at(id).code, codes[std::size_t(id - 1)]);
    EXPECT_EQ(d.at(5).name, "Mixed spruce forest with native deciduous woods");
    auto bad = d;
    bad.erase(8);
    EXPECT_THROW(SpeciesMap(1, 1, {1}, bad), DomainError);
}

TEST(LabelRaster, TruncatedPayload)
{
    TempDir dir;
    write_label_raster(dir.file("m.lbl"), {2, 2, {1, 1, 1, 1}});
    auto bytes = testing::slurp(dir.file("m.lbl"));
    testing::spit(dir.file("m.lbl"), bytes.substr(0, bytes.size() - 1));
    EXPECT_THROW(read_label_raster(dir.file("m.lbl")), TruncationError);
    testing::spit(dir.file("bad.lbl"), "LBLX" + bytes.substr(4));
    EXPECT_THROW(read_label_raster(dir.file("bad.lbl")), FormatError);
}

//---------------------------------------------------------------------------//

TEST(RasterizeLidar, MaxRule)
{
    auto const r = rasterize_lidar({{0.5, 0.5, 10.0}, {0.5, 0.6, 15.0}}, 2, 2);
    EXPECT_EQ(r.raster.at(0, 0), 15.0);
    EXPECT_FALSE(r.raster.valid(1, 1));
    EXPECT_EQ(r.dropped, 0u);
}

TEST(RasterizeLidar, EmptyIsAllNodata)
{
    auto const r = rasterize_lidar({}, 3, 3);
    for (double h : r.raster.height_m)
        EXPECT_TRUE(std::isnan(h));
}

TEST(RasterizeLidar, RandomPointsInOneCell)
{
    Rng rng(3);
    LidarPoints pts;
    double zmax = -1;
    for (int i = 0; i < 100; ++i)
    {
        pts.push_back({2.0 + rng.uniform(), 1.0 + rng.uniform(), rng.uniform(0.0, 30.0)});
        zmax = std::max(zmax, pts.back().z);
    }
    auto const r = rasterize_lidar(pts, 4, 4);
    EXPECT_EQ(r.raster.at(1, 2), zmax);
    std::size_t valid = 0;
    for (double h : r.raster.height_m)
        valid += !std::isnan(h);
    EXPECT_EQ(valid, 1u);
}

TEST(RasterizeLidar, OutOfGridPointsAreCounted)
{
    auto const r = rasterize_lidar({{-0.1, 0, 1}, {0, 3.0, 1}, {2.5, 0, 1}, {1, 1, 4}}, 3, 2);
    EXPECT_EQ(r.dropped, 3u);
    EXPECT_EQ(r.raster.at(1, 1), 4.0);
    EXPECT_THROW(rasterize_lidar({}, 0, 3), ParameterError);
}

TEST(RasterizeLidar, NeverExceedsInputMax)
{
    Scene const s = generate_scene(SceneConfig{.n_range = 16, .n_azimuth = 16, .patch_granularity = 2});
    double zmax = -1e300;
    for (auto const& p : s.lidar)
        zmax = std::max(zmax, p.z);
    auto const r = rasterize_lidar(s.lidar, 16, 16);
    for (double h : r.raster.height_m)
        EXPECT_LE(h, zmax);
}

TEST(Lidar, TextRoundTripAndComments)
{
    TempDir dir;
    LidarPoints const pts{{0.25, 1.5, 12.125}, {3.0, 4.0, -1.0}};
    write_lidar(dir.file("p.txt"), pts);
    auto const back = read_lidar(dir.file("p.txt"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].x, 0.25);
    EXPECT_EQ(back[1].z, -1.0);

    std::stringstream ss("# header\n\n1 2 3 # trailing\n  4 5 6\n");
    auto const parsed = read_lidar(ss);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[1].y, 5.0);
}

TEST(Lidar, MalformedLinesAreFormatErrors)
{
    std::stringstream two("1 2\n");
    EXPECT_THROW(read_lidar(two), FormatError);
    std::stringstream four("1 2 3 4\n");
    EXPECT_THROW(read_lidar(four), FormatError);
    std::stringstream nan("1 nan 3\n");
    EXPECT_THROW(read_lidar(nan), FormatError);
    std::stringstream empty("");
    EXPECT_TRUE(read_lidar(empty).empty());
}

}  // namespace
}  // namespace tomoclass
