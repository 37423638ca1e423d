#include "sosi/baselines.hpp"
#include "sosi/dataset.hpp"
#include "sosi/embedding.hpp"
#include "sosi/harness.hpp"
#include "sosi/rbf.hpp"
#include "sosi/sosi.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

struct SourceOptions {
    std::string data_root;
    std::string resize = "32x32";
    std::string features;
    std::string labels;
    bool header = false;
    std::string synthetic;  // classes:per_class:noise
    double labeled_ratio = 0.0;
    std::uint64_t seed = 1;
};

struct EmbedOptions {
    std::string method = "sup-laplacian";
    int dim = 1;
    double mu = 0.01;
    int knn = 7;
    std::string graph_sigma = "auto";
};

struct SosiOptions {
    std::string schedule;
    int rounds = 5;
    double early_stop = 1.0;
    double lambda = 1.0;
    int kproj = 5;
    std::string sigma_grid;
    double fisher_threshold = 0.5;
    bool reoptimize = false;
    int reg_knn = 7;
};

void add_source_options(CLI::App* app, SourceOptions& o)
{
    auto* root = app->add_option("--data-root", o.data_root, "Directory with one subdirectory of images per class");
    app->add_option("--resize", o.resize, "Image size WxH")->capture_default_str();
    auto* feat = app->add_option("--features", o.features, "CSV of samples, one row each");
    app->add_option("--labels", o.labels, "Label file, one line per sample, empty for unlabeled")->needs(feat);
    app->add_flag("--header", o.header, "Skip the first line of both CSV files");
    auto* syn = app->add_option("--synthetic", o.synthetic, "Two-dimensional curves CLASSES:PER_CLASS:NOISE");
    app->add_option("--labeled-ratio", o.labeled_ratio, "Keep a stratified labeled subset of this fraction");
    app->add_option("--seed", o.seed, "Seed for synthetic draws and splits")->capture_default_str();
    root->excludes(feat)->excludes(syn);
    feat->excludes(syn);
}

void add_embed_options(CLI::App* app, EmbedOptions& o, const std::string& method_flag = "--method")
{
    app->add_option(method_flag, o.method, "sup-laplacian or fisher")->capture_default_str();
    app->add_option("--dim", o.dim, "Embedding dimension")->capture_default_str();
    app->add_option("--mu", o.mu, "Between-class weight of the supervised Laplacian")->capture_default_str();
    app->add_option("--knn", o.knn, "Neighbors of the class graphs")->capture_default_str();
    app->add_option("--graph-sigma", o.graph_sigma, "Graph kernel scale, or auto for the median K-NN distance")
        ->capture_default_str();
}

void add_sosi_options(CLI::App* app, SosiOptions& o)
{
    app->add_option("--schedule", o.schedule, "Equispaced center counts N:Q:R");
    app->add_option("--rounds", o.rounds, "Iterations when no schedule is given")->capture_default_str();
    app->add_option("--early-stop", o.early_stop, "Fraction of unlabeled samples to admit")->capture_default_str();
    app->add_option("--lambda", o.lambda, "Weight of the separation term")->capture_default_str();
    app->add_option("--kproj", o.kproj, "Neighbors of the class-manifold projection")->capture_default_str();
    app->add_option("--sigma-grid", o.sigma_grid, "Scale grid lo:hi:count (log-spaced)");
    app->add_option("--fisher-threshold", o.fisher_threshold, "Separation ratio threshold of the Fisher scale rule")
        ->capture_default_str();
    app->add_flag("--reoptimize", o.reoptimize, "Select scales again at every iteration");
    app->add_option("--reg-knn", o.reg_knn, "Neighbors of the regularizer")->capture_default_str();
}

sosi::ExperimentConfig make_config(const SourceOptions& s, const EmbedOptions& e)
{
    sosi::ExperimentConfig cfg;
    auto& d = cfg.dataset;
    if (!s.data_root.empty()) {
        d.source = sosi::DataSource::Images;
        d.root = s.data_root;
        if (std::sscanf(s.resize.c_str(), "%dx%d", &d.width, &d.height) != 2 || d.width < 1 || d.height < 1)
            throw sosi::ArgumentError("--resize expects WxH");
    } else if (!s.features.empty()) {
        d.source = sosi::DataSource::Csv;
        d.features = s.features;
        d.labels = s.labels;
        d.header = s.header;
    } else if (!s.synthetic.empty()) {
        d.source = sosi::DataSource::Synthetic;
        if (std::sscanf(s.synthetic.c_str(), "%d:%d:%lf", &d.classes, &d.per_class, &d.noise) != 3)
            throw sosi::ArgumentError("--synthetic expects CLASSES:PER_CLASS:NOISE");
    } else {
        throw sosi::ArgumentError("one of --data-root, --features or --synthetic is required");
    }
    cfg.method = sosi::parse_embedding_method(e.method);
    cfg.dim = e.dim;
    cfg.mu = e.mu;
    cfg.graph_knn = e.knn;
    cfg.graph_sigma = e.graph_sigma == "auto" ? 0.0 : std::stod(e.graph_sigma);
    return cfg;
}

sosi::Dataset load_source(const sosi::ExperimentConfig& cfg, const SourceOptions& s)
{
    if (s.labeled_ratio > 0.0)
        return sosi::prepare_split(cfg, s.labeled_ratio, s.seed);
    const auto& d = cfg.dataset;
    switch (d.source) {
    case sosi::DataSource::Images:
        return sosi::load_image_dirs(d.root, d.width, d.height);
    case sosi::DataSource::Csv:
        return sosi::load_matrix_csv(d.features, d.labels, sosi::CsvOptions{d.header});
    case sosi::DataSource::Synthetic:
        break;
    }
    throw sosi::ArgumentError("synthetic data is fully labeled; pass --labeled-ratio");
}

void apply_sosi_options(sosi::ExperimentConfig& cfg, const SosiOptions& o)
{
    auto& c = cfg.sosi;
    if (!o.schedule.empty())
        c.schedule = sosi::parse_schedule(o.schedule);
    c.rounds = o.rounds;
    c.early_stop_fraction = o.early_stop;
    c.lambda = o.lambda;
    c.k_proj = o.kproj;
    if (!o.sigma_grid.empty())
        c.sigma_grid = sosi::parse_sigma_grid(o.sigma_grid);
    c.scale_mode = cfg.method == sosi::EmbeddingMethod::Fisher ? sosi::ScaleMode::RatioThreshold
                                                               : sosi::ScaleMode::MinimizeRegularizer;
    c.ratio_threshold = o.fisher_threshold;
    c.reoptimize_scales = o.reoptimize;
    c.knn = o.reg_knn;
}

void report_error(const sosi::Dataset& ds, std::span<const sosi::ClassId> predicted)
{
    if (ds.has_reference())
        std::printf("unlabeled error: %.4f%% (%d samples)\n", sosi::error_percent(ds, predicted),
                    ds.unlabeled_count());
}

void write_predictions(const sosi::Dataset& ds, std::span<const sosi::ClassId> predicted, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw sosi::ArgumentError("cannot write '" + path + "'");
    out << "point,label\n";
    for (int i = 0; i < ds.unlabeled_count(); ++i)
        out << ds.original_index[ds.labeled_count + i] << ',' << predicted[i] << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Semi-supervised out-of-sample extension of supervised manifold embeddings"};
    app.require_subcommand(1);

    SourceOptions src;
    EmbedOptions emb;
    SosiOptions so;

    auto* embed = app.add_subcommand("embed", "Compute the supervised embedding of the labeled samples");
    std::string embed_out;
    add_source_options(embed, src);
    add_embed_options(embed, emb);
    embed->add_option("--out", embed_out, "Embedding CSV (a .json sidecar is written next to it)")->required();

    auto* run = app.add_subcommand("sosi", "Label the unlabeled samples by progressive interpolation");
    std::string trace_out, model_out, pred_out;
    add_source_options(run, src);
    add_embed_options(run, emb);
    add_sosi_options(run, so);
    run->add_option("--trace", trace_out, "Per-iteration labels and confidences (CSV)");
    run->add_option("--model", model_out, "Final interpolator (binary)");
    run->add_option("--out", pred_out, "Final labels of the unlabeled samples (CSV)");

    auto* base = app.add_subcommand("baseline", "Label the unlabeled samples with a comparison strategy");
    std::string base_method;
    int lle_k = 5;
    double ridge = 1e-6;
    add_source_options(base, src);
    add_embed_options(base, emb, "--embedding");
    add_sosi_options(base, so);
    base->add_option("--method", base_method, "rbf-fit, lle, nystrom, nn, ssl-gf or kridge")->required();
    base->add_option("--lle-k", lle_k, "LLE neighbors")->capture_default_str();
    base->add_option("--ridge", ridge, "Kernel ridge parameter")->capture_default_str();
    base->add_option("--out", pred_out, "Labels of the unlabeled samples (CSV)");

    auto* exp = app.add_subcommand("experiment", "Run an experiment protocol from a config file");
    std::string protocol, config_path, report_out;
    exp->add_option("protocol", protocol, "split-sweep, retrain or scale-sweep")
        ->required()
        ->check(CLI::IsMember({"split-sweep", "retrain", "scale-sweep"}));
    exp->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
    exp->add_option("--out", report_out, "Report CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*exp) {
            const auto cfg = sosi::load_experiment_config(config_path);
            std::vector<sosi::ReportRow> rows;
            if (protocol == "split-sweep")
                rows = sosi::run_split_sweep(cfg);
            else if (protocol == "retrain")
                rows = sosi::run_iterative_retraining(cfg);
            else
                rows = sosi::run_scale_sweep(cfg);
            sosi::emit_report(rows, report_out);
            if (protocol == "scale-sweep")
                sosi::emit_regularizer_report(rows, report_out + ".regularizer.csv");
            for (const auto& r : rows)
                if (r.seed && !r.error_pct)
                    std::fprintf(stderr, "failed: %s %s x=%g seed=%llu: %s\n", r.experiment.c_str(),
                                 r.strategy.c_str(), r.x, static_cast<unsigned long long>(*r.seed),
                                 r.message.c_str());
            return sosi::all_succeeded(rows) ? 0 : 1;
        }

        auto cfg = make_config(src, emb);
        const sosi::Dataset ds = load_source(cfg, src);
        const sosi::TrainingModel model = sosi::train_embedding(cfg, ds);

        if (*embed) {
            sosi::write_embedding(model.embedding, embed_out);
            std::printf("embedded %d samples in %d dimensions\n", model.embedding.size(), model.embedding.dim());
            return 0;
        }

        apply_sosi_options(cfg, so);
        if (*run) {
            const sosi::SosiResult r = sosi::run_sosi(ds, model.embedding, cfg.sosi);
            if (!trace_out.empty())
                sosi::write_trace_csv(r, ds, trace_out);
            if (!model_out.empty())
                sosi::save_interpolator(r.interpolator, model_out);
            const std::vector<sosi::ClassId> predicted(r.state.labels.begin() + ds.labeled_count,
                                                       r.state.labels.end());
            if (!pred_out.empty())
                write_predictions(ds, predicted, pred_out);
            std::printf("iterations: %zu, centers: %d\n", r.trace.size(), r.trace.back().center_count);
            report_error(ds, predicted);
            return 0;
        }

        cfg.lle_k = lle_k;
        cfg.ridge = ridge;
        const sosi::Strategy strategy = sosi::parse_strategy(base_method);
        if (strategy == sosi::Strategy::Sosi)
            throw sosi::ArgumentError("use the sosi subcommand for the progressive method");
        const auto predicted = sosi::classify_unlabeled(cfg, strategy, ds, model);
        if (!pred_out.empty())
            write_predictions(ds, predicted, pred_out);
        report_error(ds, predicted);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
