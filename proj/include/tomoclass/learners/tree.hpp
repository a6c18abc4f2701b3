#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "../features.hpp"
#include "../rng.hpp"
#include "params.hpp"

namespace tomoclass {

//! Flat binary tree in preorder. Leaves have feature == -1.
struct DecisionTree
{
    std::uint32_t value_width = 1;
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::int32_t> left;
    std::vector<std::int32_t> right;
    std::vector<double> values;  //!< value_width per node

    std::size_t n_nodes() const { return feature.size(); }

    std::size_t leaf_of(std::span<float const> row) const
    {
        std::size_t n = 0;
        while (feature[n] >= 0)
            n = double(row[std::size_t(feature[n])]) <= threshold[n]
                    ? std::size_t(left[n])
                    : std::size_t(right[n]);
        return n;
    }
    std::span<double const> node_values(std::size_t n) const
    {
        return {values.data() + n * value_width, value_width};
    }
    std::span<double const> predict(std::span<float const> row) const
    {
        return node_values(leaf_of(row));
    }
    std::size_t depth() const
    {
        std::size_t best = 0;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty())
        {
            auto [n, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (feature[n] >= 0)
            {
                stack.push_back({std::size_t(left[n]), d + 1});
                stack.push_back({std::size_t(right[n]), d + 1});
            }
        }
        return best;
    }
    bool operator==(DecisionTree const&) const = default;
};

//! Gini impurity 1 - sum p_k^2 of a weighted class histogram.
inline double gini_impurity(std::span<double const> counts)
{
    double w = 0, sq = 0;
    for (double c : counts)
    {
        w += c;
        sq += c * c;
    }
    return w > 0 ? 1.0 - sq / (w * w) : 0.0;
}

namespace detail {

struct ColumnEntry
{
    float value;
    std::uint32_t row;
};

/*!
 * Per-feature presorted columns.
 *
 * Values equal to the column minimum ("base") are implicit; only larger
 * values are stored, sorted ascending. Sparse tomographic profiles (mostly
 * empty height bins) therefore cost time proportional to their non-empty
 * voxels during split search and partitioning.
 */
struct SortedColumns
{
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<float> base;
    std::vector<std::size_t> offset;  //!< n_features + 1
    std::vector<ColumnEntry> entries;

    static SortedColumns build(FeatureTable const& t)
    {
        SortedColumns s;
        s.n_rows = t.n_rows();
        s.n_features = t.n_features();
        s.base.assign(s.n_features, 0.0f);
        s.offset.assign(s.n_features + 1, 0);
        std::vector<ColumnEntry> col;
        for (std::size_t f = 0; f < s.n_features; ++f)
        {
            float lo = std::numeric_limits<float>::infinity();
            for (std::size_t i = 0; i < s.n_rows; ++i)
                lo = std::min(lo, t.value(i, f));
            s.base[f] = lo;
            col.clear();
            for (std::size_t i = 0; i < s.n_rows; ++i)
            {
                float const v = t.value(i, f);
                if (v > lo)
                    col.push_back({v, std::uint32_t(i)});
            }
            std::sort(col.begin(), col.end(), [](auto const& a, auto const& b) {
                return a.value < b.value || (a.value == b.value && a.row < b.row);
            });
            s.offset[f] = s.entries.size();
            s.entries.insert(s.entries.end(), col.begin(), col.end());
        }
        s.offset[s.n_features] = s.entries.size();
        return s;
    }
};

inline double midpoint(float a, float b)
{
    return (double(a) + double(b)) * 0.5;
}

//! Weighted Gini criterion; score = sum over children of (sum c_k^2) / w.
struct GiniCriterion
{
    std::span<std::uint16_t const> cls;  //!< class index per row
    std::span<double const> weight;
    std::size_t n_classes = 0;

    struct Totals
    {
        std::vector<double> c;
        double w = 0;
        std::uint64_t n = 0;
    };
    struct Scan
    {
        std::vector<double> cl, cr;
        double wl = 0, wr = 0, sql = 0, sqr = 0;
        std::uint64_t nl = 0, nr = 0;
    };

    std::size_t value_width() const { return n_classes; }

    void clear(Totals& t) const
    {
        t.c.assign(n_classes, 0.0);
        t.w = 0;
        t.n = 0;
    }
    struct RowStat
    {
        double w;
        std::uint32_t k;
        std::uint32_t n;
    };
    RowStat stat(std::uint32_t row, std::uint32_t count) const
    {
        return {weight[row], cls[row], count};
    }

    void add(Totals& t, RowStat const& r) const
    {
        t.c[r.k] += r.w;
        t.w += r.w;
        t.n += r.n;
    }
    bool pure(Totals const& t) const
    {
        std::size_t nonzero = 0;
        for (double c : t.c)
            nonzero += c > 0;
        return nonzero <= 1;
    }
    //! Everything starts on the left; entries then move right one at a time.
    void init_scan(Scan& s, Totals const& total) const
    {
        s.cl = total.c;
        s.cr.assign(n_classes, 0.0);
        s.sql = 0;
        for (double c : s.cl)
            s.sql += c * c;
        s.sqr = 0;
        s.wl = total.w;
        s.wr = 0;
        s.nl = total.n;
        s.nr = 0;
    }
    void move_right(Scan& s, RowStat const& r) const
    {
        double const w = r.w;
        std::size_t const k = r.k;
        s.sql += (w - 2.0 * s.cl[k]) * w;
        s.sqr += (2.0 * s.cr[k] + w) * w;
        s.cl[k] -= w;
        s.cr[k] += w;
        s.wl -= w;
        s.wr += w;
        s.nl -= r.n;
        s.nr += r.n;
    }
    double score(Scan const& s) const
    {
        return (s.sql * s.wr + s.sqr * s.wl) / (s.wl * s.wr);
    }
    void leaf_values(Totals const& t, double* out) const
    {
        for (std::size_t k = 0; k < n_classes; ++k)
            out[k] = t.w > 0 ? t.c[k] / t.w : 0.0;
    }
};

/*!
 * Least-squares criterion on GBM residuals with a Newton leaf value.
 *
 * Leaf value for multiclass softmax boosting:
 *   gamma = (K - 1) / K * sum(w r) / sum(w |r| (1 - |r|))
 * with r = 1{y = k} - p_k. A vanishing denominator yields 0.
 */
struct ResidualCriterion
{
    std::span<double const> residual;
    std::span<double const> weight;
    std::size_t n_classes = 2;

    struct Totals
    {
        double g = 0, w = 0, h = 0;
        double rmin = std::numeric_limits<double>::infinity();
        double rmax = -std::numeric_limits<double>::infinity();
        std::uint64_t n = 0;
    };
    struct Scan
    {
        double gl = 0, wl = 0, gr = 0, wr = 0;
        std::uint64_t nl = 0, nr = 0;
    };

    std::size_t value_width() const { return 1; }

    void clear(Totals& t) const { t = Totals{}; }
    struct RowStat
    {
        double wr;  //!< weight * residual
        double w;
        double r;
        std::uint64_t n;
    };
    RowStat stat(std::uint32_t row, std::uint32_t count) const
    {
        return {weight[row] * residual[row], weight[row], residual[row], count};
    }

    void add(Totals& t, RowStat const& s) const
    {
        double const a = std::abs(s.r);
        t.g += s.wr;
        t.w += s.w;
        t.h += s.w * a * (1.0 - a);
        t.rmin = std::min(t.rmin, s.r);
        t.rmax = std::max(t.rmax, s.r);
        t.n += s.n;
    }
    bool pure(Totals const& t) const { return t.rmax - t.rmin <= 1e-12; }
    void init_scan(Scan& s, Totals const& total) const
    {
        s.gl = total.g;
        s.wl = total.w;
        s.nl = total.n;
        s.gr = s.wr = 0;
        s.nr = 0;
    }
    void move_right(Scan& s, RowStat const& r) const
    {
        s.gl -= r.wr;
        s.gr += r.wr;
        s.wl -= r.w;
        s.wr += r.w;
        s.nl -= r.n;
        s.nr += r.n;
    }
    double score(Scan const& s) const
    {
        return (s.gl * s.gl * s.wr + s.gr * s.gr * s.wl) / (s.wl * s.wr);
    }
    void leaf_values(Totals const& t, double* out) const
    {
        double const k = double(n_classes);
        out[0] = std::abs(t.h) < 1e-150 ? 0.0 : (k - 1.0) / k * t.g / t.h;
    }
};

/*!
 * Greedy depth-first CART growth.
 *
 * An impure node is split whenever some threshold satisfies the leaf-size
 * constraint, even at zero gain. The best split maximises the criterion
 * score; ties go to the lowest feature index, then the lowest threshold.
 * Thresholds are midpoints between consecutive distinct values in the node.
 */
template<class Criterion>
class TreeBuilder
{
  public:
    TreeBuilder(SortedColumns const& cols, FeatureTable const& table,
                Criterion const& crit, TreeParams const& params,
                std::span<std::uint32_t const> counts, Rng* rng)
        : cols_(cols), table_(table), crit_(crit), params_(params),
          counts_(counts), rng_(rng)
    {
    }

    DecisionTree build()
    {
        std::size_t const d = cols_.n_features;
        k_features_ = params_.features.resolve(d);
        perm_.resize(d);
        std::iota(perm_.begin(), perm_.end(), std::uint32_t{0});

        // In-bag working copy of the presorted columns.
        work_.clear();
        work_.reserve(cols_.entries.size());
        levels_.assign(params_.max_depth + 1, Level{});
        for (auto& l : levels_)
        {
            l.begin.resize(d);
            l.mid.resize(d);
            l.end.resize(d);
        }
        for (std::size_t f = 0; f < d; ++f)
        {
            levels_[0].begin[f] = std::uint32_t(work_.size());
            for (std::size_t e = cols_.offset[f]; e < cols_.offset[f + 1]; ++e)
                if (counts_[cols_.entries[e].row] > 0)
                    work_.push_back(cols_.entries[e]);
            levels_[0].end[f] = std::uint32_t(work_.size());
        }
        stats_.resize(cols_.n_rows);
        for (std::uint32_t i = 0; i < cols_.n_rows; ++i)
            stats_[i] = crit_.stat(i, counts_[i]);
        rows_.clear();
        for (std::uint32_t i = 0; i < cols_.n_rows; ++i)
            if (counts_[i] > 0)
                rows_.push_back(i);
        if (rows_.empty())
            throw DataError("cannot grow a tree on an empty sample");
        scratch_.resize(work_.size());
        row_scratch_.resize(rows_.size());
        goes_left_.assign(cols_.n_rows, 0);

        tree_ = DecisionTree{};
        tree_.value_width = std::uint32_t(crit_.value_width());
        grow(0, 0, std::uint32_t(rows_.size()));
        return std::move(tree_);
    }

  private:
    struct Level
    {
        std::vector<std::uint32_t> begin, mid, end;
    };
    struct Split
    {
        bool found = false;
        std::size_t feature = 0;
        double threshold = 0;
        double score = -std::numeric_limits<double>::infinity();
    };

    std::int32_t new_node(typename Criterion::Totals const& totals)
    {
        auto const id = std::int32_t(tree_.feature.size());
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        std::size_t const off = tree_.values.size();
        tree_.values.resize(off + tree_.value_width);
        crit_.leaf_values(totals, tree_.values.data() + off);
        return id;
    }

    //! Search feature f; updates `best` if a better split exists.
    //! Returns false when the feature is constant in the node.
    bool search_feature(std::size_t f, Level const& lv, std::uint32_t node_rows,
                        typename Criterion::Totals const& total, Split& best)
    {
        ColumnEntry const* e = work_.data() + lv.begin[f];
        std::size_t const m = lv.end[f] - lv.begin[f];
        if (m == 0)
            return false;
        bool const has_implicit = m < node_rows;
        if (!has_implicit && e[0].value == e[m - 1].value)
            return false;

        // Sweep thresholds from the top down in a single pass.
        std::uint64_t const msl = params_.min_samples_leaf;
        crit_.init_scan(scan_, total);
        auto consider = [&](double thr) {
            if (scan_.nr < msl)
                return;
            double const s = crit_.score(scan_);
            if (s > best.score
                || (s == best.score && best.found
                    && (f < best.feature
                        || (f == best.feature && thr < best.threshold))))
            {
                best.found = true;
                best.score = s;
                best.feature = f;
                best.threshold = thr;
            }
        };
        for (std::size_t j = m; j-- > 0;)
        {
            crit_.move_right(scan_, stats_[e[j].row]);
            if (scan_.nl < msl)
                break;
            if (j > 0)
            {
                if (e[j - 1].value < e[j].value)
                    consider(midpoint(e[j - 1].value, e[j].value));
            }
            else if (has_implicit)
                consider(midpoint(cols_.base[f], e[0].value));
        }
        return true;
    }

    void grow(std::size_t depth, std::uint32_t rb, std::uint32_t re)
    {
        typename Criterion::Totals total;
        crit_.clear(total);
        for (std::uint32_t i = rb; i < re; ++i)
            crit_.add(total, stats_[rows_[i]]);
        std::int32_t const id = new_node(total);

        std::uint64_t const msl = params_.min_samples_leaf;
        if (depth >= params_.max_depth || total.n < 2 * msl || crit_.pure(total))
            return;

        Level& lv = levels_[depth];
        std::size_t const d = cols_.n_features;
        Split best;
        if (k_features_ >= d)
        {
            for (std::size_t f = 0; f < d; ++f)
                search_feature(f, lv, re - rb, total, best);
        }
        else
        {
            // Visit features in random order until k non-constant ones
            // have been examined.
            std::size_t examined = 0;
            for (std::size_t i = 0; i < d && examined < k_features_; ++i)
            {
                std::size_t const j = i + std::size_t(rng_->below(d - i));
                std::swap(perm_[i], perm_[j]);
                if (search_feature(perm_[i], lv, re - rb, total, best))
                    ++examined;
            }
        }
        if (!best.found)
            return;

        // Route rows, then stable-partition every column segment.
        std::size_t const fstar = best.feature;
        for (std::uint32_t i = rb; i < re; ++i)
        {
            std::uint32_t const r = rows_[i];
            goes_left_[r] = double(table_.value(r, fstar)) <= best.threshold;
        }
        std::uint64_t n_left = 0, n_right = 0;
        for (std::uint32_t i = rb; i < re; ++i)
            (goes_left_[rows_[i]] ? n_left : n_right) += counts_[rows_[i]];
        bool const children_split = depth + 1 < params_.max_depth
                                    && std::max(n_left, n_right) >= 2 * msl;
        for (std::size_t f = 0; children_split && f < d; ++f)
        {
            std::uint32_t const b = lv.begin[f], e = lv.end[f];
            std::uint32_t w = b;
            std::uint32_t s = 0;
            for (std::uint32_t j = b; j < e; ++j)
            {
                // Branch-free: routing is effectively random per entry.
                ColumnEntry const ce = work_[j];
                std::uint32_t const left = goes_left_[ce.row];
                work_[w] = ce;
                scratch_[s] = ce;
                w += left;
                s += 1 - left;
            }
            std::copy(scratch_.begin(), scratch_.begin() + s, work_.begin() + w);
            lv.mid[f] = w;
        }
        std::uint32_t w = rb, s = 0;
        for (std::uint32_t i = rb; i < re; ++i)
        {
            std::uint32_t const r = rows_[i];
            if (goes_left_[r])
                rows_[w++] = r;
            else
                row_scratch_[s++] = r;
        }
        std::copy(row_scratch_.begin(), row_scratch_.begin() + s, rows_.begin() + w);
        std::uint32_t const rmid = w;

        tree_.feature[std::size_t(id)] = std::int32_t(fstar);
        tree_.threshold[std::size_t(id)] = best.threshold;

        Level& child = levels_[depth + 1];
        child.begin = lv.begin;
        child.end = lv.mid;
        tree_.left[std::size_t(id)] = std::int32_t(tree_.feature.size());
        grow(depth + 1, rb, rmid);

        Level& child2 = levels_[depth + 1];
        Level const& parent = levels_[depth];
        child2.begin = parent.mid;
        child2.end = parent.end;
        tree_.right[std::size_t(id)] = std::int32_t(tree_.feature.size());
        grow(depth + 1, rmid, re);
    }

    SortedColumns const& cols_;
    FeatureTable const& table_;
    Criterion const& crit_;
    TreeParams const& params_;
    std::span<std::uint32_t const> counts_;
    Rng* rng_;

    std::size_t k_features_ = 0;
    std::vector<std::uint32_t> perm_;
    std::vector<typename Criterion::RowStat> stats_;
    std::vector<ColumnEntry> work_, scratch_;
    std::vector<std::uint32_t> rows_, row_scratch_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<Level> levels_;
    typename Criterion::Scan scan_;
    DecisionTree tree_;
};

}  // namespace detail
}  // namespace tomoclass
