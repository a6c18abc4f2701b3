#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cube_io.hpp"
#include "error.hpp"

namespace tomoclass {

//! counts[i * K + j] = rows of true class i predicted as class j.
struct ConfusionMatrix
{
    std::vector<int> classes;
    std::vector<std::uint64_t> counts;

    std::size_t size() const { return classes.size(); }
    std::uint64_t at(std::size_t i, std::size_t j) const
    {
        return counts[i * size() + j];
    }
    std::uint64_t total() const
    {
        std::uint64_t t = 0;
        for (auto c : counts)
            t += c;
        return t;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<int const> truth,
                                        std::span<int const> pred,
                                        std::vector<int> classes)
{
    if (truth.size() != pred.size())
        throw DataError("truth and prediction lengths differ");
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes.size() * classes.size(), 0)};
    auto index = [&](int label) {
        auto it = std::lower_bound(classes.begin(), classes.end(), label);
        if (it == classes.end() || *it != label)
            throw DataError("label " + std::to_string(label)
                            + " not in the class list");
        return std::size_t(it - classes.begin());
    };
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++cm.counts[index(truth[i]) * classes.size() + index(pred[i])];
    return cm;
}

struct ClassMetrics
{
    int class_id = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::uint64_t support = 0;
    bool precision_undefined = false;  //!< nothing predicted as this class
    bool recall_undefined = false;     //!< no support
};

struct AveragedMetrics
{
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct ClassReport
{
    std::vector<ClassMetrics> per_class;
    double accuracy = 0;
    double balanced_accuracy = 0;
    AveragedMetrics macro;
    AveragedMetrics weighted;
    std::uint64_t total_support = 0;
};

/*!
 * Per-class precision/recall/F1 and overall scores.
 *
 * Undefined ratios are reported as 0 and flagged. Balanced accuracy and the
 * macro average run over classes with support > 0; the weighted average is
 * support-weighted, so weighted recall equals accuracy.
 */
inline ClassReport classification_report(ConfusionMatrix const& cm)
{
    std::size_t const K = cm.size();
    std::uint64_t const total = cm.total();
    if (K == 0 || total == 0)
        throw EmptyEvaluationError("classification report over zero rows");
    ClassReport rep;
    rep.total_support = total;
    std::uint64_t trace = 0;
    std::size_t supported = 0;
    for (std::size_t k = 0; k < K; ++k)
    {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < K; ++j)
        {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        std::uint64_t const tp = cm.at(k, k);
        trace += tp;
        ClassMetrics m;
        m.class_id = cm.classes[k];
        m.support = row;
        m.precision_undefined = col == 0;
        m.recall_undefined = row == 0;
        m.precision = col ? double(tp) / double(col) : 0.0;
        m.recall = row ? double(tp) / double(row) : 0.0;
        m.f1 = (m.precision + m.recall) > 0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (row > 0)
        {
            ++supported;
            rep.macro.precision += m.precision;
            rep.macro.recall += m.recall;
            rep.macro.f1 += m.f1;
        }
        double const w = double(row) / double(total);
        rep.weighted.precision += w * m.precision;
        rep.weighted.recall += w * m.recall;
        rep.weighted.f1 += w * m.f1;
        rep.per_class.push_back(m);
    }
    rep.accuracy = double(trace) / double(total);
    rep.macro.precision /= double(supported);
    rep.macro.recall /= double(supported);
    rep.macro.f1 /= double(supported);
    rep.balanced_accuracy = rep.macro.recall;
    return rep;
}

inline ClassReport classification_report(std::span<int const> truth,
                                         std::span<int const> pred,
                                         std::vector<int> classes)
{
    return classification_report(confusion_matrix(truth, pred, std::move(classes)));
}

//! Aligned text in the class-wise / overall two-block layout, 2 decimals.
inline std::string format_report(ClassReport const& r)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(14) << "Class" << std::right << std::setw(10)
       << "Precision" << std::setw(10) << "Recall" << std::setw(10) << "F1-Score"
       << std::setw(10) << "Support" << '\n';
    for (auto const& m : r.per_class)
        os << std::left << std::setw(14) << m.class_id << std::right
           << std::setw(10) << m.precision << std::setw(10) << m.recall
           << std::setw(10) << m.f1 << std::setw(10) << m.support << '\n';
    os << '\n';
    os << std::left << std::setw(18) << "Metric" << std::right << std::setw(10)
       << "Value" << std::setw(10) << "Support" << '\n';
    auto line = [&](char const* name, double v) {
        os << std::left << std::setw(18) << name << std::right << std::setw(10)
           << v << std::setw(10) << r.total_support << '\n';
    };
    line("Accuracy", r.accuracy);
    line("Balanced Acc", r.balanced_accuracy);
    line("Macro Avg", r.macro.f1);
    line("Weighted Avg", r.weighted.f1);
    return os.str();
}

//! Full-precision CSV: one row per class then the overall rows.
inline void write_report_csv(std::ostream& os, ClassReport const& r)
{
    os << "row,precision,recall,f1,support,precision_undefined,recall_undefined\n";
    os << std::setprecision(17);
    for (auto const& m : r.per_class)
        os << m.class_id << ',' << m.precision << ',' << m.recall << ',' << m.f1
           << ',' << m.support << ',' << int(m.precision_undefined) << ','
           << int(m.recall_undefined) << '\n';
    os << "accuracy,," << r.accuracy << ",," << r.total_support << ",,\n";
    os << "balanced_accuracy,," << r.balanced_accuracy << ",," << r.total_support
       << ",,\n";
    os << "macro_avg," << r.macro.precision << ',' << r.macro.recall << ','
       << r.macro.f1 << ',' << r.total_support << ",,\n";
    os << "weighted_avg," << r.weighted.precision << ',' << r.weighted.recall
       << ',' << r.weighted.f1 << ',' << r.total_support << ",,\n";
}

inline void write_confusion_csv(std::ostream& os, ConfusionMatrix const& cm)
{
    os << "true\\pred";
    for (int c : cm.classes)
        os << ',' << c;
    os << '\n';
    for (std::size_t i = 0; i < cm.size(); ++i)
    {
        os << cm.classes[i];
        for (std::size_t j = 0; j < cm.size(); ++j)
            os << ',' << cm.at(i, j);
        os << '\n';
    }
}

//---------------------------------------------------------------------------//
// Class map rendering
//---------------------------------------------------------------------------//

struct Rgb
{
    std::uint8_t r, g, b;
    bool operator==(Rgb const&) const = default;
};

//! Index 0 is background (no label / no prediction); 1..8 are the classes.
inline constexpr std::array<Rgb, 9> class_palette{{
    {0, 0, 0},        // background
    {230, 159, 0},    // 1 Aspen
    {86, 180, 233},   // 2 Pine
    {0, 158, 115},    // 3 Beech w/ deciduous
    {240, 228, 66},   // 4 Douglas fir
    {0, 114, 178},    // 5 Mixed spruce
    {213, 94, 0},     // 6 Oak-beech
    {204, 121, 167},  // 7 Oak
    {255, 255, 255},  // 8 Beech
}};

/*!
 * Two-panel binary PPM (P6): truth on top, prediction below, each panel
 * n_azimuth wide and n_range tall. `pred` holds one label per pixel
 * (0 = none).
 */
inline std::string render_map_ppm(SpeciesMap const& map,
                                  std::span<std::uint8_t const> pred)
{
    std::size_t const nr = map.n_range(), na = map.n_azimuth();
    if (pred.size() != nr * na)
        throw ShapeError("prediction raster does not match the species map");
    std::string header = "P6\n" + std::to_string(na) + " " + std::to_string(2 * nr)
                         + "\n255\n";
    std::string out = header;
    out.reserve(header.size() + 2 * nr * na * 3);
    auto emit = [&](std::uint8_t label) {
        Rgb const c = class_palette[label <= 8 ? label : 0];
        out.push_back(char(c.r));
        out.push_back(char(c.g));
        out.push_back(char(c.b));
    };
    for (auto l : map.labels())
        emit(l);
    for (auto l : pred)
        emit(l);
    return out;
}

inline void render_map(SpeciesMap const& map, std::span<std::uint8_t const> pred,
                       std::string const& path)
{
    std::string const bytes = render_map_ppm(map, pred);
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

//! Per-pixel predicted labels from a predictions CSV (x,y,label,split,pred,...).
inline std::vector<std::uint8_t> read_prediction_raster(std::string const& path,
                                                        std::uint32_t n_range,
                                                        std::uint32_t n_azimuth)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> raster(std::size_t(n_range) * n_azimuth, 0);
    std::string line;
    std::getline(is, line);
    if (line.rfind("x,y,label,split,pred", 0) != 0)
        throw FormatError("'" + path + "' is not a predictions CSV");
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        unsigned x = 0, y = 0, label = 0, pred = 0;
        char split[16] = {};
        if (std::sscanf(line.c_str(), "%u,%u,%u,%15[^,],%u", &x, &y, &label, split,
                        &pred)
            != 5)
            throw FormatError("malformed prediction row '" + line + "'");
        if (x >= n_azimuth || y >= n_range || pred > 8)
            throw FormatError("prediction outside the grid or class range");
        raster[std::size_t(y) * n_azimuth + x] = std::uint8_t(pred);
    }
    return raster;
}

}  // namespace tomoclass
