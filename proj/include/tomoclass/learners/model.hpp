#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "../binary_io.hpp"
#include "../features.hpp"
#include "../parallel.hpp"
#include "tree.hpp"

namespace tomoclass {

enum class ModelKind : std::uint8_t
{
    TREE = 0,
    FOREST = 1,
    GBM = 2,
    ENSEMBLE = 3
};

inline std::string_view to_string(ModelKind k)
{
    switch (k)
    {
        case ModelKind::TREE: return "tree";
        case ModelKind::FOREST: return "forest";
        case ModelKind::GBM: return "gbm";
        case ModelKind::ENSEMBLE: return "ensemble";
    }
    return "?";
}

/*!
 * Trained classifier.
 *
 * TREE and FOREST hold classification trees whose node values are class
 * probability vectors. GBM holds `n_rounds * classes.size()` regression
 * trees, round-major. ENSEMBLE holds weighted member models.
 */
struct Model
{
    ModelKind kind = ModelKind::TREE;
    std::vector<int> classes;  //!< ascending class ids
    std::uint64_t schema_hash = 0;
    std::uint64_t seed = 0;
    std::uint32_t n_features = 0;

    std::vector<DecisionTree> trees;
    double learning_rate = 0.0;
    std::uint32_t n_rounds = 0;

    std::vector<Model> members;
    std::vector<double> weights;

    std::size_t n_classes() const { return classes.size(); }
    bool operator==(Model const&) const = default;
};

struct Prediction
{
    std::vector<int> classes;
    std::vector<int> labels;
    std::vector<double> probabilities;  //!< n_rows * classes.size()

    std::size_t n_rows() const { return labels.size(); }
    std::span<double const> proba(std::size_t i) const
    {
        return {probabilities.data() + i * classes.size(), classes.size()};
    }
};

namespace detail {

inline void softmax(std::span<double const> scores, std::span<double> out)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores)
        mx = std::max(mx, s);
    double z = 0;
    for (std::size_t k = 0; k < scores.size(); ++k)
    {
        out[k] = std::exp(scores[k] - mx);
        z += out[k];
    }
    for (auto& v : out)
        v /= z;
}

//! Class probabilities of one row, aligned with m.classes.
inline void predict_row(Model const& m, std::span<float const> row,
                        std::span<double> out)
{
    std::size_t const K = m.n_classes();
    std::fill(out.begin(), out.end(), 0.0);
    switch (m.kind)
    {
        case ModelKind::TREE:
        case ModelKind::FOREST:
        {
            for (auto const& t : m.trees)
            {
                auto v = t.predict(row);
                for (std::size_t k = 0; k < K; ++k)
                    out[k] += v[k];
            }
            double const n = double(m.trees.size());
            for (auto& v : out)
                v /= n;
            break;
        }
        case ModelKind::GBM:
        {
            std::vector<double> score(K, 0.0);
            for (std::size_t r = 0; r < m.n_rounds; ++r)
                for (std::size_t k = 0; k < K; ++k)
                    score[k] += m.learning_rate
                                * m.trees[r * K + k].predict(row)[0];
            softmax(score, out);
            break;
        }
        case ModelKind::ENSEMBLE:
        {
            std::vector<double> sub;
            for (std::size_t i = 0; i < m.members.size(); ++i)
            {
                auto const& mem = m.members[i];
                sub.assign(mem.n_classes(), 0.0);
                predict_row(mem, row, sub);
                for (std::size_t k = 0; k < mem.n_classes(); ++k)
                {
                    auto it = std::lower_bound(m.classes.begin(), m.classes.end(),
                                               mem.classes[k]);
                    out[std::size_t(it - m.classes.begin())] += m.weights[i] * sub[k];
                }
            }
            break;
        }
    }
}

inline int argmax_label(std::span<double const> p, std::vector<int> const& classes)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[best])
            best = k;
    return classes[best];
}

}  // namespace detail

/*!
 * Labels and simplex probability vectors for every row of `rows`.
 * Argmax ties resolve to the lowest class id.
 */
inline Prediction predict(Model const& model, FeatureTable const& rows,
                          unsigned workers = 1)
{
    if (rows.schema_hash() != model.schema_hash
        || rows.n_features() != model.n_features)
        throw SchemaError("feature table schema does not match the model");
    Prediction out;
    out.classes = model.classes;
    std::size_t const K = model.n_classes();
    std::size_t const n = rows.n_rows();
    out.labels.resize(n);
    out.probabilities.resize(n * K);
    std::size_t const block = 256;
    std::size_t const n_blocks = (n + block - 1) / block;
    parallel_for(n_blocks, workers, [&](std::size_t b) {
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i)
        {
            std::span<double> p(out.probabilities.data() + i * K, K);
            detail::predict_row(model, rows.row(i), p);
            out.labels[i] = detail::argmax_label(p, model.classes);
        }
    });
    return out;
}

//---------------------------------------------------------------------------//
// Serialization: "TCML1", version, kind, payload.
//---------------------------------------------------------------------------//

inline constexpr std::string_view model_magic{"TCML1"};
inline constexpr std::uint8_t model_version = 1;

namespace detail {

inline void write_tree(std::ostream& os, DecisionTree const& t)
{
    write_le<std::uint32_t>(os, t.value_width);
    write_le<std::uint32_t>(os, std::uint32_t(t.n_nodes()));
    for (std::size_t n = 0; n < t.n_nodes(); ++n)
    {
        write_le<std::int32_t>(os, t.feature[n]);
        write_le<double>(os, t.threshold[n]);
        write_le<std::int32_t>(os, t.left[n]);
        write_le<std::int32_t>(os, t.right[n]);
        for (double v : t.node_values(n))
            write_le<double>(os, v);
    }
}

inline DecisionTree read_tree(std::istream& is)
{
    DecisionTree t;
    t.value_width = read_le<std::uint32_t>(is, "tree value width");
    auto const n = read_le<std::uint32_t>(is, "tree node count");
    if (t.value_width == 0 || n == 0)
        throw FormatError("malformed tree record");
    for (std::uint32_t i = 0; i < n; ++i)
    {
        t.feature.push_back(read_le<std::int32_t>(is, "node feature"));
        t.threshold.push_back(read_le<double>(is, "node threshold"));
        t.left.push_back(read_le<std::int32_t>(is, "node left"));
        t.right.push_back(read_le<std::int32_t>(is, "node right"));
        for (std::uint32_t k = 0; k < t.value_width; ++k)
            t.values.push_back(read_le<double>(is, "node value"));
    }
    for (std::uint32_t i = 0; i < n; ++i)
        if (t.feature[i] >= 0
            && (t.left[i] <= std::int32_t(i) || t.right[i] <= std::int32_t(i)
                || t.left[i] >= std::int32_t(n) || t.right[i] >= std::int32_t(n)))
            throw FormatError("tree child index out of range");
    return t;
}

}  // namespace detail

inline void write_model(std::ostream& os, Model const& m)
{
    os.write(model_magic.data(), model_magic.size());
    detail::write_le<std::uint8_t>(os, model_version);
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(m.kind));
    detail::write_le<std::uint64_t>(os, m.schema_hash);
    detail::write_le<std::uint64_t>(os, m.seed);
    detail::write_le<std::uint32_t>(os, m.n_features);
    detail::write_le<std::uint32_t>(os, std::uint32_t(m.classes.size()));
    for (int c : m.classes)
        detail::write_le<std::int32_t>(os, c);
    switch (m.kind)
    {
        case ModelKind::TREE:
        case ModelKind::FOREST:
            detail::write_le<std::uint32_t>(os, std::uint32_t(m.trees.size()));
            for (auto const& t : m.trees)
                detail::write_tree(os, t);
            break;
        case ModelKind::GBM:
            detail::write_le<std::uint32_t>(os, m.n_rounds);
            detail::write_le<double>(os, m.learning_rate);
            for (auto const& t : m.trees)
                detail::write_tree(os, t);
            break;
        case ModelKind::ENSEMBLE:
            detail::write_le<std::uint32_t>(os, std::uint32_t(m.members.size()));
            for (std::size_t i = 0; i < m.members.size(); ++i)
            {
                detail::write_le<double>(os, m.weights[i]);
                write_model(os, m.members[i]);
            }
            break;
    }
}

inline Model read_model(std::istream& is)
{
    detail::expect_magic(is, std::string(model_magic), "TCML1 model");
    auto const version = detail::read_le<std::uint8_t>(is, "model version");
    if (version != model_version)
        throw FormatError("unsupported model version " + std::to_string(version));
    auto const kind = detail::read_le<std::uint8_t>(is, "model kind");
    if (kind > 3)
        throw FormatError("unknown model kind " + std::to_string(kind));
    Model m;
    m.kind = static_cast<ModelKind>(kind);
    m.schema_hash = detail::read_le<std::uint64_t>(is, "schema hash");
    m.seed = detail::read_le<std::uint64_t>(is, "seed");
    m.n_features = detail::read_le<std::uint32_t>(is, "feature count");
    auto const nc = detail::read_le<std::uint32_t>(is, "class count");
    for (std::uint32_t k = 0; k < nc; ++k)
        m.classes.push_back(detail::read_le<std::int32_t>(is, "class id"));
    switch (m.kind)
    {
        case ModelKind::TREE:
        case ModelKind::FOREST:
        {
            auto const n = detail::read_le<std::uint32_t>(is, "tree count");
            for (std::uint32_t i = 0; i < n; ++i)
                m.trees.push_back(detail::read_tree(is));
            break;
        }
        case ModelKind::GBM:
        {
            m.n_rounds = detail::read_le<std::uint32_t>(is, "round count");
            m.learning_rate = detail::read_le<double>(is, "learning rate");
            for (std::size_t i = 0; i < std::size_t(m.n_rounds) * nc; ++i)
                m.trees.push_back(detail::read_tree(is));
            break;
        }
        case ModelKind::ENSEMBLE:
        {
            auto const n = detail::read_le<std::uint32_t>(is, "member count");
            for (std::uint32_t i = 0; i < n; ++i)
            {
                m.weights.push_back(detail::read_le<double>(is, "member weight"));
                m.members.push_back(read_model(is));
            }
            break;
        }
    }
    return m;
}

inline std::string serialize(Model const& m)
{
    std::ostringstream os(std::ios::binary);
    write_model(os, m);
    return os.str();
}

inline Model deserialize(std::string const& bytes)
{
    std::istringstream is(bytes, std::ios::binary);
    return read_model(is);
}

inline void save_model(std::string const& path, Model const& m)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_model(os, m);
}

inline Model load_model(std::string const& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_model(is);
}

//! Per-row class probabilities as CSV: x,y,label,split,pred,p_<id>...
inline void write_predictions_csv(std::ostream& os, FeatureTable const& rows,
                                  Prediction const& pred)
{
    os << "x,y,label,split,pred";
    for (int c : pred.classes)
        os << ",p_" << c;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < pred.n_rows(); ++i)
    {
        os << rows.x[i] << ',' << rows.y[i] << ',' << int(rows.labels[i]) << ','
           << to_string(rows.split[i]) << ',' << pred.labels[i];
        for (double p : pred.proba(i))
            os << ',' << p;
        os << '\n';
    }
}

}  // namespace tomoclass
