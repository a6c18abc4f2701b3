#include <gtest/gtest.h>

#include <sstream>

#include "support/test_util.hpp"

namespace tomoclass {
namespace {

TEST(ClassificationReport, HandComputedFixture)
{
    std::vector<int> truth{1, 1, 1, 2, 2, 3};
    std::vector<int> pred{1, 1, 2, 2, 3, 3};
    auto const r = classification_report(truth, pred, {1, 2, 3});
    ASSERT_EQ(r.per_class.size(), 3u);
    EXPECT_DOUBLE_EQ(r.per_class[0].precision, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[0].recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.per_class[0].f1, 0.8);
    EXPECT_DOUBLE_EQ(r.per_class[1].precision, 0.5);
    EXPECT_DOUBLE_EQ(r.per_class[1].recall, 0.5);
    EXPECT_DOUBLE_EQ(r.per_class[1].f1, 0.5);
    EXPECT_DOUBLE_EQ(r.per_class[2].precision, 0.5);
    EXPECT_DOUBLE_EQ(r.per_class[2].recall, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[2].f1, 2.0 / 3.0);
    EXPECT_EQ(r.per_class[0].support, 3u);
    EXPECT_DOUBLE_EQ(r.accuracy, 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.balanced_accuracy, 13.0 / 18.0);
    EXPECT_DOUBLE_EQ(r.macro.f1, (0.8 + 0.5 + 2.0 / 3.0) / 3.0);
    EXPECT_DOUBLE_EQ(r.weighted.f1, (3 * 0.8 + 2 * 0.5 + 2.0 / 3.0) / 6.0);
    EXPECT_DOUBLE_EQ(r.weighted.recall, r.accuracy);
    EXPECT_EQ(r.total_support, 6u);
}

TEST(ClassificationReport, UndefinedRatiosAreZeroAndFlagged)
{
    // Class 2 never predicted; class 3 predicted but absent from truth.
    std::vector<int> truth{1, 1, 2, 2};
    std::vector<int> pred{1, 3, 1, 1};
    auto const r = classification_report(truth, pred, {1, 2, 3});
    EXPECT_TRUE(r.per_class[1].precision_undefined);
    EXPECT_EQ(r.per_class[1].precision, 0.0);
    EXPECT_EQ(r.per_class[1].f1, 0.0);
    EXPECT_TRUE(r.per_class[2].recall_undefined);
    EXPECT_EQ(r.per_class[2].support, 0u);
    // Balanced accuracy ignores the unsupported class.
    EXPECT_DOUBLE_EQ(r.balanced_accuracy, (0.5 + 0.0) / 2.0);
    EXPECT_DOUBLE_EQ(r.per_class[0].precision, 1.0 / 3.0);
}

TEST(ClassificationReport, PerfectPrediction)
{
    std::vector<int> y{4, 5, 4, 8};
    auto const r = classification_report(y, y, {4, 5, 8});
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.balanced_accuracy, 1.0);
    EXPECT_EQ(r.macro.f1, 1.0);
    EXPECT_EQ(r.weighted.f1, 1.0);
}

TEST(ClassificationReport, EmptyAndUnknownLabelsThrow)
{
    std::vector<int> none;
    EXPECT_THROW(classification_report(none, none, {1, 2}), EmptyEvaluationError);
    std::vector<int> t{1}, p{9};
    EXPECT_THROW(confusion_matrix(t, p, {1, 2}), DataError);
    std::vector<int> shorter{};
    EXPECT_THROW(confusion_matrix(t, shorter, {1}), DataError);
}

TEST(ClassificationReport, RandomMatricesMatchBruteForce)
{
    Rng rng(99);
    for (int c = 0; c < 100; ++c)
    {
        std::size_t const K = 2 + rng.below(7);
        std::vector<int> classes(K);
        for (std::size_t k = 0; k < K; ++k)
            classes[k] = int(k + 1);
        std::vector<int> truth, pred;
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j)
            {
                auto const n = rng.below(i == j ? 40 : 10);
                for (std::size_t t = 0; t < n; ++t)
                {
                    truth.push_back(classes[i]);
                    pred.push_back(classes[j]);
                }
            }
        if (truth.empty())
            continue;
        auto const r = classification_report(truth, pred, classes);

        double recall_sum = 0;
        std::size_t supported = 0, correct = 0;
        for (std::size_t i = 0; i < truth.size(); ++i)
            correct += truth[i] == pred[i];
        for (std::size_t k = 0; k < K; ++k)
        {
            std::size_t tp = 0, support = 0, predicted = 0;
            for (std::size_t i = 0; i < truth.size(); ++i)
            {
                tp += truth[i] == classes[k] && pred[i] == classes[k];
                support += truth[i] == classes[k];
                predicted += pred[i] == classes[k];
            }
            double const rec = support ? double(tp) / double(support) : 0.0;
            double const prec = predicted ? double(tp) / double(predicted) : 0.0;
            EXPECT_NEAR(r.per_class[k].recall, rec, 1e-15);
            EXPECT_NEAR(r.per_class[k].precision, prec, 1e-15);
            if (support)
            {
                recall_sum += rec;
                ++supported;
            }
        }
        double const acc = double(correct) / double(truth.size());
        EXPECT_NEAR(r.accuracy, acc, 1e-15);
        EXPECT_NEAR(r.weighted.recall, r.accuracy, 1e-12);
        EXPECT_NEAR(r.balanced_accuracy, recall_sum / double(supported), 1e-12);
    }
}

TEST(ReportOutput, TextAndCsvLayout)
{
    std::vector<int> truth{1, 1, 2}, pred{1, 2, 2};
    auto const r = classification_report(truth, pred, {1, 2});
    auto const text = format_report(r);
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "Class          Precision    Recall  F1-Score   Support");
    EXPECT_NE(text.find("Accuracy                0.67         3"), std::string::npos);
    EXPECT_NE(text.find("Balanced Acc"), std::string::npos);
    EXPECT_NE(text.find("Weighted Avg"), std::string::npos);
    std::ostringstream csv;
    write_report_csv(csv, r);
    auto const s = csv.str();
    EXPECT_EQ(s.substr(0, s.find('\n')),
              "row,precision,recall,f1,support,precision_undefined,recall_undefined");
    EXPECT_NE(s.find("\nbalanced_accuracy,,0.75,,3,,\n"), std::string::npos);
    std::ostringstream cm;
    write_confusion_csv(cm, confusion_matrix(truth, pred, {1, 2}));
    EXPECT_EQ(cm.str(), "true\\pred,1,2\n1,1,1\n2,0,1\n");
}

TEST(RenderMap, PpmHeaderAndPaletteBytes)
{
    SpeciesMap const map(1, 3, {0, 1, 8});
    std::vector<std::uint8_t> pred{2, 0, 7};
    auto const ppm = render_map_ppm(map, pred);
    std::string const header = "P6\n3 2\n255\n";
    ASSERT_EQ(ppm.size(), header.size() + 18);
    EXPECT_EQ(ppm.substr(0, header.size()), header);
    auto px = [&](std::size_t i) {
        auto const* b = reinterpret_cast<unsigned char const*>(ppm.data() + header.size() + 3 * i);
        return Rgb{b[0], b[1], b[2]};
    };
    EXPECT_EQ(px(0), (Rgb{0, 0, 0}));
    EXPECT_EQ(px(1), (Rgb{230, 159, 0}));
    EXPECT_EQ(px(2), (Rgb{255, 255, 255}));
    EXPECT_EQ(px(3), (Rgb{86, 180, 233}));
    EXPECT_EQ(px(4), (Rgb{0, 0, 0}));
    EXPECT_EQ(px(5), (Rgb{204, 121, 167}));
    EXPECT_THROW(render_map_ppm(map, std::vector<std::uint8_t>(2, 1)), ShapeError);
}

TEST(RenderMap, PredictionRasterFromCsv)
{
    testing::TempDir dir;
    testing::spit(dir.file("p.csv"),
                  "x,y,label,split,pred,p_1,p_2\n1,0,1,test,2,0.1,0.9\n0,1,2,train,1,0.8,0.2\n");
    auto const r = read_prediction_raster(dir.file("p.csv"), 2, 2);
    EXPECT_EQ(r, (std::vector<std::uint8_t>{0, 2, 1, 0}));
    testing::spit(dir.file("bad.csv"), "a,b\n");
    EXPECT_THROW(read_prediction_raster(dir.file("bad.csv"), 2, 2), FormatError);
}

}  // namespace
}  // namespace tomoclass
