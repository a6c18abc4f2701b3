// tomoclass: command-line driver for the tree-species classification pipeline.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tomoclass/tomoclass.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tomoclass;

namespace {

//! Raised for invalid invocations (exit code 1).
struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

//---------------------------------------------------------------------------//
// Run manifest
//---------------------------------------------------------------------------//

std::uint64_t file_hash(std::string const& path)
{
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return detail::fnv1a(ss.str());
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

class Manifest
{
  public:
    Manifest(std::string command, std::vector<std::string> argv, unsigned threads)
        : start_(std::chrono::steady_clock::now())
    {
        j_["tool"] = "tomoclass";
        j_["version"] = tomoclass::version;
        j_["command"] = std::move(command);
        j_["argv"] = std::move(argv);
        j_["threads"] = threads;
        j_["inputs"] = json::array();
        j_["outputs"] = json::array();
        j_["seeds"] = json::object();
        j_["parameters"] = json::object();
    }

    void input(std::string const& role, std::string const& path)
    {
        j_["inputs"].push_back({{"role", role},
                                {"path", path},
                                {"bytes", fs::file_size(path)},
                                {"fnv1a", hex64(file_hash(path))}});
    }
    void output(std::string const& path) { j_["outputs"].push_back(path); }
    void seed(std::string const& name, std::uint64_t v) { j_["seeds"][name] = v; }
    json& parameters() { return j_["parameters"]; }
    json& extra(std::string const& key) { return j_[key]; }

    void write(std::string const& path)
    {
        j_["wall_time_s"] = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - start_)
                                .count();
        std::ofstream os(path);
        if (!os)
            throw IoError("cannot open '" + path + "' for writing");
        os << j_.dump(2) << '\n';
    }

  private:
    json j_;
    std::chrono::steady_clock::time_point start_;
};

void require_file(std::string const& flag, std::string const& path)
{
    if (path.empty())
        throw UsageError(flag + " is required");
    if (!fs::exists(path))
        throw UsageError(flag + ": file '" + path + "' does not exist");
}

void require_out(std::string const& flag, std::string const& path)
{
    if (path.empty())
        throw UsageError(flag + " is required");
}

void ensure_dir(std::string const& dir)
{
    if (!dir.empty())
        fs::create_directories(dir);
}

std::string join(std::string const& dir, std::string const& name)
{
    return (fs::path(dir) / name).string();
}

template<class F>
void write_text(std::string const& path, F&& body)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    body(os);
    if (!os)
        throw IoError("failed writing '" + path + "'");
}

//---------------------------------------------------------------------------//
// Option bundles
//---------------------------------------------------------------------------//

struct SynthOptions
{
    std::string out_dir = ".";
    std::uint64_t seed = 7;
    std::uint32_t n_range = 168;
    std::uint32_t n_azimuth = 120;
    double granularity = 8.0;
    double noise = 0.2;
};

struct SplitOptions
{
    std::string method = "swath";
    double test_frac = 0.2;
    double square_side = 0.05;
    std::uint32_t buffer = 0;
    std::uint64_t seed = 7;
};

struct FeatureOptions
{
    bool xy = false;
    std::string scale = "linear";
    std::string channels = "HH,HV,VV";
    double db_floor = -60.0;
};

struct LearnerOptions
{
    std::string learner = "gbm";
    std::uint64_t seed = 7;
    std::size_t n_trees = 200;
    int max_depth = 0;  //!< 0: learner default
    std::size_t min_samples_leaf = 5;
    std::size_t n_rounds = 100;
    double learning_rate = 0.1;
    double subsample = 1.0;
    bool balanced = false;
    bool bootstrap = true;
    std::string objective = "accuracy";
    double val_frac = 0.2;
    std::size_t budget = 0;  //!< tuning trials; 0 disables tuning
};

struct HeightOptions
{
    std::string source = "first";
    std::string channel = "HH";
    double threshold_db = -3.0;
    std::size_t grid_points = 128;
};

void check_split_options(SplitOptions const& o)
{
    if (!(o.test_frac > 0 && o.test_frac < 1))
        throw UsageError("test-frac must be in (0,1)");
    if (o.method == "square" && !(o.square_side > 0 && o.square_side < 1))
        throw UsageError("square-side must be in (0,1)");
}

FeatureSpec feature_spec(FeatureOptions const& o)
{
    FeatureSpec s;
    s.include_xy = o.xy;
    s.scale = o.scale == "db" ? IntensityScale::DB : IntensityScale::LINEAR;
    s.db_floor = o.db_floor;
    s.channels.clear();
    std::stringstream ss(o.channels);
    std::string tok;
    while (std::getline(ss, tok, ','))
    {
        try
        {
            s.channels.push_back(parse_channel(tok));
        }
        catch (Error const& e)
        {
            throw UsageError(e.what());
        }
    }
    if (s.channels.empty())
        throw UsageError("--channels must list at least one channel");
    return s;
}

EnsembleObjective objective_of(LearnerOptions const& o)
{
    return o.objective == "balanced" ? EnsembleObjective::BALANCED_ACCURACY
                                     : EnsembleObjective::ACCURACY;
}

TreeParams tree_params(LearnerOptions const& o, TreeParams base)
{
    if (o.max_depth > 0)
        base.max_depth = std::size_t(o.max_depth);
    base.min_samples_leaf = o.min_samples_leaf;
    base.balanced_class_weights = o.balanced;
    return base;
}

GbmParams gbm_params(LearnerOptions const& o)
{
    GbmParams p;
    p.n_rounds = o.n_rounds;
    p.learning_rate = o.learning_rate;
    p.subsample = o.subsample;
    p.tree = tree_params(o, p.tree);
    return p;
}

ForestParams forest_params(LearnerOptions const& o)
{
    ForestParams p;
    p.n_trees = o.n_trees;
    p.bootstrap = o.bootstrap;
    p.tree = tree_params(o, p.tree);
    return p;
}

void record_learner(Manifest& man, LearnerOptions const& o)
{
    auto& p = man.parameters();
    p["learner"] = o.learner;
    p["n_trees"] = o.n_trees;
    p["max_depth"] = o.max_depth;
    p["min_samples_leaf"] = o.min_samples_leaf;
    p["n_rounds"] = o.n_rounds;
    p["learning_rate"] = o.learning_rate;
    p["subsample"] = o.subsample;
    p["balanced"] = o.balanced;
    p["bootstrap"] = o.bootstrap;
    p["objective"] = o.objective;
    p["val_frac"] = o.val_frac;
    p["budget"] = o.budget;
    man.seed("learner", o.seed);
}

//---------------------------------------------------------------------------//
// Steps
//---------------------------------------------------------------------------//

SceneConfig scene_config(SynthOptions const& o)
{
    SceneConfig cfg;
    cfg.n_range = o.n_range;
    cfg.n_azimuth = o.n_azimuth;
    cfg.patch_granularity = o.granularity;
    cfg.noise = o.noise;
    cfg.seed = o.seed;
    return cfg;
}

struct SynthPaths
{
    std::string nw, se, labels, lidar, truth;
};

SynthPaths do_synth(SynthOptions const& o, Manifest& man)
{
    ensure_dir(o.out_dir);
    Scene const scene = generate_scene(scene_config(o));
    SynthPaths p{join(o.out_dir, "nw.tomo"), join(o.out_dir, "se.tomo"),
                 join(o.out_dir, "labels.lbl"), join(o.out_dir, "lidar.txt"),
                 join(o.out_dir, "truth.csv")};
    write_cube(p.nw, scene.nw);
    write_cube(p.se, scene.se);
    write_species_map(p.labels, scene.map);
    write_lidar(p.lidar, scene.lidar);
    write_truth_csv(p.truth, scene.true_height);
    for (auto const* s : {&p.nw, &p.se, &p.labels, &p.lidar, &p.truth})
        man.output(*s);
    man.seed("synth", o.seed);
    auto& j = man.parameters();
    j["n_range"] = o.n_range;
    j["n_azimuth"] = o.n_azimuth;
    j["granularity"] = o.granularity;
    j["noise"] = o.noise;
    return p;
}

SplitMask do_split(SpeciesMap const& map, SplitOptions const& o, Manifest& man)
{
    check_split_options(o);
    SplitMask mask;
    if (o.method == "swath")
    {
        SwathParams p;
        p.test_width_frac = o.test_frac;
        p.buffer = o.buffer;
        mask = swath_split(map, p, o.seed);
    }
    else
    {
        SquareParams p;
        p.square_side_frac = o.square_side;
        p.target_test_frac = o.test_frac;
        p.buffer = o.buffer;
        mask = square_split(map, p, o.seed);
    }
    auto const report = validate_split(mask, map);
    auto& j = man.parameters();
    j["split_method"] = o.method;
    j["test_frac"] = o.test_frac;
    j["square_side"] = o.square_side;
    j["buffer"] = o.buffer;
    man.seed("split", o.seed);
    man.extra("split_report") = {{"test_fraction", report.test_fraction},
                                 {"test_components", report.test_components},
                                 {"warnings", report.warnings}};
    for (auto const& w : report.warnings)
        std::cerr << "warning: " << w << '\n';
    return mask;
}

Model fit_learner(FeatureTable const& train, LearnerOptions const& o, unsigned threads,
                  Manifest& man, std::string const& trace_path = {})
{
    record_learner(man, o);
    auto const obj = objective_of(o);
    if (o.budget > 0)
    {
        if (o.learner != "gbm" && o.learner != "forest")
            throw UsageError("tuning supports --learner gbm or forest");
        auto const learner = o.learner == "gbm" ? TunedLearner::GBM : TunedLearner::FOREST;
        auto const space = learner == TunedLearner::GBM ? default_gbm_space()
                                                        : default_forest_space();
        auto tuned = tune_learner(train, learner, space, o.budget, o.seed, obj,
                                  o.val_frac, threads);
        json best = json::object();
        for (std::size_t i = 0; i < space.size(); ++i)
            best[space.dims()[i].name] = tuned.search.best_params[i];
        man.extra("tuning") = {{"best", best},
                               {"best_objective", tuned.search.best_value},
                               {"trials", tuned.search.trace.size()}};
        if (!trace_path.empty())
        {
            write_text(trace_path, [&](std::ostream& os) {
                write_trace_csv(os, space, tuned.search);
            });
            man.output(trace_path);
        }
        return std::move(tuned.model);
    }
    if (o.learner == "gbm")
        return train_gbm(train, gbm_params(o), o.seed, threads);
    if (o.learner == "forest")
        return train_forest(train, forest_params(o), o.seed, threads);
    if (o.learner == "tree")
        return train_tree(train, tree_params(o, TreeParams{}), o.seed);
    if (o.learner == "ensemble")
    {
        auto const split = random_holdout(train, o.val_frac, o.seed);
        std::vector<Model> candidates;
        candidates.push_back(train_gbm(split.fit, gbm_params(o), o.seed, threads));
        candidates.push_back(train_forest(split.fit, forest_params(o), o.seed, threads));
        candidates.push_back(
            train_tree(split.fit, tree_params(o, TreeParams{}), o.seed));
        auto res = greedy_ensemble(candidates, split.val, obj, threads);
        man.extra("ensemble") = {{"candidates", {"gbm", "forest", "tree"}},
                                 {"selection", res.selection},
                                 {"objective", res.objective}};
        return std::move(res.model);
    }
    throw UsageError("unknown learner '" + o.learner + "'");
}

struct EvalOutputs
{
    std::string report_txt, report_csv, confusion_csv;
};

EvalOutputs do_evaluate(Model const& model, FeatureTable const& rows,
                        std::string const& out_dir, unsigned threads, Manifest& man)
{
    if (rows.empty())
        throw EmptyEvaluationError("no rows to evaluate");
    auto const pred = predict(model, rows, threads);
    std::vector<int> truth(rows.labels.begin(), rows.labels.end());
    std::vector<int> classes = model.classes;
    for (int l : truth)
        if (std::find(classes.begin(), classes.end(), l) == classes.end())
            classes.push_back(l);
    std::sort(classes.begin(), classes.end());
    auto const cm = confusion_matrix(truth, pred.labels, classes);
    auto const rep = classification_report(cm);
    EvalOutputs out{join(out_dir, "report.txt"), join(out_dir, "report.csv"),
                    join(out_dir, "confusion.csv")};
    write_text(out.report_txt, [&](std::ostream& os) { os << format_report(rep); });
    write_text(out.report_csv, [&](std::ostream& os) { write_report_csv(os, rep); });
    write_text(out.confusion_csv, [&](std::ostream& os) { write_confusion_csv(os, cm); });
    man.output(out.report_txt);
    man.output(out.report_csv);
    man.output(out.confusion_csv);
    man.extra("metrics") = {{"accuracy", rep.accuracy},
                            {"balanced_accuracy", rep.balanced_accuracy},
                            {"macro_f1", rep.macro.f1},
                            {"weighted_f1", rep.weighted.f1},
                            {"support", rep.total_support}};
    std::cout << format_report(rep);
    return out;
}

HeightEstimateOptions height_options(HeightOptions const& o)
{
    HeightEstimateOptions h;
    h.rel_threshold_db = o.threshold_db;
    if (o.source == "channel")
    {
        h.source = ProfileSource::CHANNEL;
        try
        {
            h.channel = parse_channel(o.channel);
        }
        catch (Error const& e)
        {
            throw UsageError(e.what());
        }
    }
    else if (o.source == "mean")
        h.source = ProfileSource::CHANNEL_MEAN;
    return h;
}

void do_heightstats(TomoCube const& cube, SpeciesMap const& map, SplitMask const& mask,
                    LidarPoints const& lidar, std::vector<std::uint8_t> const* pred,
                    HeightOptions const& o, std::string const& out_dir, Manifest& man)
{
    auto const chm = rasterize_lidar(lidar, map.n_range(), map.n_azimuth());
    if (chm.dropped > 0)
        std::cerr << "warning: " << chm.dropped << " LiDAR points outside the grid\n";
    auto const est = estimate_height_raster(cube, height_options(o));
    auto const rows = class_height_stats(chm.raster, map, mask, est);
    std::string const txt = join(out_dir, "heightstats.txt");
    std::string const csv = join(out_dir, "heightstats.csv");
    std::string const violin = join(out_dir, "violin.csv");
    write_text(txt, [&](std::ostream& os) { os << format_height_stats(rows); });
    write_text(csv, [&](std::ostream& os) { write_height_stats_csv(os, rows); });
    auto groups = violin_groups(chm.raster, map.labels(), mask, ViolinGrouping::TRUE_CLASS);
    if (pred)
    {
        auto more = violin_groups(chm.raster, *pred, mask, ViolinGrouping::PREDICTED_CLASS);
        groups.insert(groups.end(), more.begin(), more.end());
    }
    violin_export(violin, groups, o.grid_points);
    man.output(txt);
    man.output(csv);
    man.output(violin);
    auto& j = man.parameters();
    j["height_source"] = o.source;
    j["height_channel"] = o.channel;
    j["threshold_db"] = o.threshold_db;
    j["kde_grid_points"] = o.grid_points;
    std::cout << format_height_stats(rows);
}

std::vector<std::uint8_t> prediction_raster(FeatureTable const& rows,
                                            Prediction const& pred, std::uint32_t nr,
                                            std::uint32_t na)
{
    std::vector<std::uint8_t> r(std::size_t(nr) * na, 0);
    for (std::size_t i = 0; i < rows.n_rows(); ++i)
        r[std::size_t(rows.y[i]) * na + rows.x[i]] = std::uint8_t(pred.labels[i]);
    return r;
}

//---------------------------------------------------------------------------//
// Option registration
//---------------------------------------------------------------------------//

void add_synth_options(CLI::App* s, SynthOptions& o, char const* seed_flag)
{
    s->add_option(seed_flag, o.seed, "Scene seed")->capture_default_str();
    s->add_option("--n-range", o.n_range, "Range lines")->capture_default_str();
    s->add_option("--n-azimuth", o.n_azimuth, "Azimuth columns")->capture_default_str();
    s->add_option("--granularity", o.granularity, "Mean patch side in pixels")
        ->capture_default_str();
    s->add_option("--noise", o.noise, "Log-sd of multiplicative voxel noise")
        ->capture_default_str();
}

void add_split_options(CLI::App* s, SplitOptions& o, char const* method_flag)
{
    s->add_option(method_flag, o.method, "swath or square")
        ->check(CLI::IsMember({"swath", "square"}))
        ->capture_default_str();
    s->add_option("--test-frac", o.test_frac,
                  "Swath width fraction, or square target test fraction")
        ->capture_default_str();
    s->add_option("--square-side", o.square_side, "Square side as a fraction of width")
        ->capture_default_str();
    s->add_option("--buffer", o.buffer, "Excluded guard pixels")->capture_default_str();
    s->add_option("--split-seed", o.seed, "Split seed")->capture_default_str();
}

void add_feature_options(CLI::App* s, FeatureOptions& o)
{
    s->add_flag("--xy", o.xy, "Append pixel coordinates as features");
    s->add_option("--scale", o.scale, "linear or db")
        ->check(CLI::IsMember({"linear", "db"}))
        ->capture_default_str();
    s->add_option("--channels", o.channels, "Comma-separated channel list")
        ->capture_default_str();
    s->add_option("--db-floor", o.db_floor, "Floor for the dB transform")
        ->capture_default_str();
}

void add_learner_options(CLI::App* s, LearnerOptions& o, bool tuning)
{
    if (tuning)
    {
        s->add_option("--learner", o.learner, "gbm or forest")
            ->check(CLI::IsMember({"gbm", "forest"}))
            ->capture_default_str();
        s->add_option("--budget", o.budget, "Number of tuning trials")
            ->capture_default_str();
    }
    else
    {
        s->add_option("--learner", o.learner, "tree, forest, gbm or ensemble")
            ->check(CLI::IsMember({"tree", "forest", "gbm", "ensemble"}))
            ->capture_default_str();
        s->add_option("--n-trees", o.n_trees, "Forest size")->capture_default_str();
        s->add_option("--max-depth", o.max_depth, "Tree depth (0: learner default)")
            ->capture_default_str();
        s->add_option("--min-samples-leaf", o.min_samples_leaf, "Minimum leaf size")
            ->capture_default_str();
        s->add_option("--n-rounds", o.n_rounds, "Boosting rounds")->capture_default_str();
        s->add_option("--learning-rate", o.learning_rate, "Boosting shrinkage")
            ->capture_default_str();
        s->add_option("--subsample", o.subsample, "Row fraction per boosting round")
            ->capture_default_str();
        s->add_flag("--balanced", o.balanced, "Inverse-frequency class weights");
        s->add_flag("!--no-bootstrap", o.bootstrap, "Disable forest bootstrap");
    }
    s->add_option("--seed", o.seed, "Learner seed")->capture_default_str();
    s->add_option("--objective", o.objective, "accuracy or balanced")
        ->check(CLI::IsMember({"accuracy", "balanced"}))
        ->capture_default_str();
    s->add_option("--val-frac", o.val_frac, "Validation holdout fraction")
        ->capture_default_str();
}

void add_height_options(CLI::App* s, HeightOptions& o)
{
    s->add_option("--height-source", o.source, "first, channel or mean")
        ->check(CLI::IsMember({"first", "channel", "mean"}))
        ->capture_default_str();
    s->add_option("--height-channel", o.channel, "Channel for --height-source channel")
        ->capture_default_str();
    s->add_option("--threshold-db", o.threshold_db, "Relative threshold for canopy top")
        ->capture_default_str();
    s->add_option("--kde-points", o.grid_points, "KDE grid points per group")
        ->capture_default_str();
}

std::string manifest_path(std::string const& artifact)
{
    return artifact + ".manifest.json";
}

int run(int argc, char** argv)
{
    CLI::App app{"Tree-species classification from tomographic SAR cubes"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; command-line flags take precedence");
    app.failure_message(CLI::FailureMessage::help);

    int threads_opt = 0;
    app.add_option("--threads", threads_opt,
                   "Worker threads (default: TOMOCLASS_THREADS or logical cores)");

    std::vector<std::string> args(argv, argv + argc);

    // synth
    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic scene");
    c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->capture_default_str();
    add_synth_options(c_synth, synth, "--seed");

    // merge
    std::string merge_nw, merge_se, merge_out;
    auto* c_merge = app.add_subcommand("merge", "Merge NW and SE heading cubes");
    c_merge->add_option("--nw", merge_nw, "NW cube");
    c_merge->add_option("--se", merge_se, "SE cube");
    c_merge->add_option("--out", merge_out, "Merged cube");

    // split
    SplitOptions split;
    std::string split_labels, split_out;
    auto* c_split = app.add_subcommand("split", "Geographic train/test split");
    c_split->add_option("--labels", split_labels, "Species map (LBL1)");
    c_split->add_option("--out", split_out, "Split mask (LBL1 + .meta)");
    add_split_options(c_split, split, "--method");
    c_split->add_option("--seed", split.seed, "Split seed");

    // features
    FeatureOptions feat;
    std::string feat_cube, feat_labels, feat_mask, feat_out;
    auto* c_feat = app.add_subcommand("features", "Build the feature table");
    c_feat->add_option("--cube", feat_cube, "Merged cube");
    c_feat->add_option("--labels", feat_labels, "Species map");
    c_feat->add_option("--mask", feat_mask, "Split mask");
    c_feat->add_option("--out", feat_out, "Feature table CSV");
    add_feature_options(c_feat, feat);

    // train
    LearnerOptions train;
    std::string train_table, train_out;
    auto* c_train = app.add_subcommand("train", "Train a model on TRAIN rows");
    c_train->add_option("--table", train_table, "Feature table CSV");
    c_train->add_option("--out", train_out, "Model file");
    add_learner_options(c_train, train, false);

    // tune
    LearnerOptions tune_o;
    tune_o.budget = 20;
    std::string tune_table, tune_out, tune_trace;
    auto* c_tune = app.add_subcommand("tune", "Bayesian hyperparameter optimisation");
    c_tune->add_option("--table", tune_table, "Feature table CSV");
    c_tune->add_option("--out", tune_out, "Model file");
    c_tune->add_option("--trace", tune_trace, "Trace CSV");
    add_learner_options(c_tune, tune_o, true);

    // evaluate
    std::string ev_model, ev_table, ev_out = ".", ev_split = "test";
    auto* c_eval = app.add_subcommand("evaluate", "Classification report");
    c_eval->add_option("--model", ev_model, "Model file");
    c_eval->add_option("--table", ev_table, "Feature table CSV");
    c_eval->add_option("--out-dir", ev_out, "Output directory")->capture_default_str();
    c_eval->add_option("--split", ev_split, "Rows to evaluate: test, train or all")
        ->check(CLI::IsMember({"test", "train", "all"}))
        ->capture_default_str();

    // heightstats
    HeightOptions hs;
    std::string hs_cube, hs_labels, hs_mask, hs_lidar, hs_pred, hs_out = ".";
    auto* c_hs = app.add_subcommand("heightstats", "LiDAR height statistics");
    c_hs->add_option("--cube", hs_cube, "Merged cube");
    c_hs->add_option("--labels", hs_labels, "Species map");
    c_hs->add_option("--mask", hs_mask, "Split mask");
    c_hs->add_option("--lidar", hs_lidar, "LiDAR points");
    c_hs->add_option("--predictions", hs_pred, "Optional predictions CSV");
    c_hs->add_option("--out-dir", hs_out, "Output directory")->capture_default_str();
    add_height_options(c_hs, hs);

    // render
    std::string rd_labels, rd_pred, rd_out;
    auto* c_render = app.add_subcommand("render", "Truth/prediction map as PPM");
    c_render->add_option("--labels", rd_labels, "Species map");
    c_render->add_option("--predictions", rd_pred, "Predictions CSV");
    c_render->add_option("--out", rd_out, "Output PPM");

    // pipeline
    SynthOptions p_synth;
    p_synth.out_dir = "tomoclass_run";
    SplitOptions p_split;
    FeatureOptions p_feat;
    LearnerOptions p_learn;
    HeightOptions p_hs;
    bool p_split_seed_set = false;
    auto* c_pipe = app.add_subcommand("pipeline", "Run every step end to end");
    c_pipe->add_option("--out-dir", p_synth.out_dir, "Output directory")
        ->capture_default_str();
    add_synth_options(c_pipe, p_synth, "--synth-seed");
    add_split_options(c_pipe, p_split, "--split");
    add_feature_options(c_pipe, p_feat);
    add_learner_options(c_pipe, p_learn, false);
    c_pipe->add_option("--tune-budget", p_learn.budget,
                       "Tune gbm/forest with this many trials (0: no tuning)")
        ->capture_default_str();
    add_height_options(c_pipe, p_hs);

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    unsigned threads = threads_opt > 0 ? unsigned(threads_opt) : default_workers();
    p_split_seed_set = c_pipe->count("--split-seed") > 0;

    auto const* sub = app.get_subcommands().front();
    std::string const name = sub->get_name();
    Manifest man(name, args, threads);

    if (name == "synth")
    {
        do_synth(synth, man);
        man.write(join(synth.out_dir, "synth.manifest.json"));
    }
    else if (name == "merge")
    {
        require_file("--nw", merge_nw);
        require_file("--se", merge_se);
        require_out("--out", merge_out);
        man.input("nw", merge_nw);
        man.input("se", merge_se);
        write_cube(merge_out, merge_headings(read_cube(merge_nw), read_cube(merge_se)));
        man.output(merge_out);
        man.write(manifest_path(merge_out));
    }
    else if (name == "split")
    {
        check_split_options(split);
        require_file("--labels", split_labels);
        require_out("--out", split_out);
        man.input("labels", split_labels);
        auto const mask = do_split(read_species_map(split_labels), split, man);
        write_split_mask(split_out, mask);
        man.output(split_out);
        man.output(split_out + ".meta");
        man.write(manifest_path(split_out));
    }
    else if (name == "features")
    {
        require_file("--cube", feat_cube);
        require_file("--labels", feat_labels);
        require_file("--mask", feat_mask);
        require_out("--out", feat_out);
        auto const spec = feature_spec(feat);
        for (auto const& [role, path] : {std::pair{"cube", feat_cube},
                                         {"labels", feat_labels}, {"mask", feat_mask}})
            man.input(role, path);
        auto const table = build_table(read_cube(feat_cube), read_species_map(feat_labels),
                                       read_split_mask(feat_mask), spec, threads);
        write_table_csv(feat_out, table);
        man.parameters() = {{"xy", feat.xy}, {"scale", feat.scale},
                            {"channels", feat.channels}, {"db_floor", feat.db_floor},
                            {"rows", table.n_rows()}, {"columns", table.n_features()}};
        man.output(feat_out);
        man.write(manifest_path(feat_out));
    }
    else if (name == "train" || name == "tune")
    {
        bool const tuning = name == "tune";
        auto const& table_path = tuning ? tune_table : train_table;
        auto const& out = tuning ? tune_out : train_out;
        require_file("--table", table_path);
        require_out("--out", out);
        man.input("table", table_path);
        auto const table = read_table_csv(table_path).subset(SplitTag::TRAIN);
        Model const model
            = fit_learner(table, tuning ? tune_o : train, threads, man, tuning ? tune_trace : "");
        save_model(out, model);
        man.output(out);
        man.write(manifest_path(out));
    }
    else if (name == "evaluate")
    {
        require_file("--model", ev_model);
        require_file("--table", ev_table);
        man.input("model", ev_model);
        man.input("table", ev_table);
        ensure_dir(ev_out);
        auto table = read_table_csv(ev_table);
        if (ev_split != "all")
            table = table.subset(ev_split == "test" ? SplitTag::TEST : SplitTag::TRAIN);
        auto const model = load_model(ev_model);
        do_evaluate(model, table, ev_out, threads, man);
        std::string const pred_path = join(ev_out, "predictions.csv");
        write_text(pred_path, [&](std::ostream& os) {
            write_predictions_csv(os, table, predict(model, table, threads));
        });
        man.output(pred_path);
        man.parameters()["split"] = ev_split;
        man.write(join(ev_out, "evaluate.manifest.json"));
    }
    else if (name == "heightstats")
    {
        require_file("--cube", hs_cube);
        require_file("--labels", hs_labels);
        require_file("--mask", hs_mask);
        require_file("--lidar", hs_lidar);
        for (auto const& [role, path] : {std::pair{"cube", hs_cube}, {"labels", hs_labels},
                                         {"mask", hs_mask}, {"lidar", hs_lidar}})
            man.input(role, path);
        ensure_dir(hs_out);
        auto const map = read_species_map(hs_labels);
        std::vector<std::uint8_t> pred;
        if (!hs_pred.empty())
        {
            require_file("--predictions", hs_pred);
            man.input("predictions", hs_pred);
            pred = read_prediction_raster(hs_pred, map.n_range(), map.n_azimuth());
        }
        do_heightstats(read_cube(hs_cube), map, read_split_mask(hs_mask),
                       read_lidar(hs_lidar), hs_pred.empty() ? nullptr : &pred, hs,
                       hs_out, man);
        man.write(join(hs_out, "heightstats.manifest.json"));
    }
    else if (name == "render")
    {
        require_file("--labels", rd_labels);
        require_file("--predictions", rd_pred);
        require_out("--out", rd_out);
        man.input("labels", rd_labels);
        man.input("predictions", rd_pred);
        auto const map = read_species_map(rd_labels);
        render_map(map, read_prediction_raster(rd_pred, map.n_range(), map.n_azimuth()),
                   rd_out);
        man.output(rd_out);
        man.write(manifest_path(rd_out));
    }
    else if (name == "pipeline")
    {
        check_split_options(p_split);
        auto const spec = feature_spec(p_feat);
        if (!p_split_seed_set)
            p_split.seed = p_synth.seed;
        std::string const dir = p_synth.out_dir;

        auto const paths = do_synth(p_synth, man);
        std::string const merged_path = join(dir, "merged.tomo");
        auto const merged = merge_headings(read_cube(paths.nw), read_cube(paths.se));
        write_cube(merged_path, merged);
        man.output(merged_path);

        auto const map = read_species_map(paths.labels);
        auto const mask = do_split(map, p_split, man);
        std::string const mask_path = join(dir, "mask.lbl");
        write_split_mask(mask_path, mask);
        man.output(mask_path);
        man.output(mask_path + ".meta");

        auto const table = build_table(merged, map, mask, spec, threads);
        std::string const table_path = join(dir, "table.csv");
        write_table_csv(table_path, table);
        man.output(table_path);
        auto& jp = man.parameters();
        jp["xy"] = p_feat.xy;
        jp["scale"] = p_feat.scale;
        jp["channels"] = p_feat.channels;
        jp["db_floor"] = p_feat.db_floor;

        auto const train_rows = table.subset(SplitTag::TRAIN);
        auto const test_rows = table.subset(SplitTag::TEST);
        Model const model
            = fit_learner(train_rows, p_learn, threads, man, join(dir, "trace.csv"));
        std::string const model_path = join(dir, "model.tcml");
        save_model(model_path, model);
        man.output(model_path);

        do_evaluate(model, test_rows, dir, threads, man);

        auto const pred_all = predict(model, table, threads);
        std::string const pred_path = join(dir, "predictions.csv");
        write_text(pred_path,
                   [&](std::ostream& os) { write_predictions_csv(os, table, pred_all); });
        man.output(pred_path);
        auto const raster
            = prediction_raster(table, pred_all, map.n_range(), map.n_azimuth());
        std::string const map_path = join(dir, "map.ppm");
        render_map(map, raster, map_path);
        man.output(map_path);

        do_heightstats(merged, map, mask, read_lidar(paths.lidar), &raster, p_hs, dir, man);
        man.write(join(dir, "manifest.json"));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    try
    {
        return run(argc, argv);
    }
    catch (UsageError const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    catch (ParameterError const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    catch (ConfigError const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
