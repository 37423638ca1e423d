#include "sosi/harness.hpp"

#include "sosi/graph.hpp"
#include "sosi/rbf.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

namespace sosi {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        out.push_back(trim(item));
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what)
{
    const std::string t = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError("invalid value '" + text + "' for " + what);
    return value;
}

bool parse_bool(const std::string& text, const std::string& what)
{
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    throw ConfigError("invalid boolean '" + text + "' for " + what);
}

std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string ratio_tag(const std::string& base, double ratio)
{
    return base + "@r=" + format_number(ratio);
}

double elapsed_ms(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t split_seed(std::uint64_t seed)
{
    return seed ^ 0x9E3779B97F4A7C15ULL;
}

Matrix select_rows(const Matrix& x, std::span<const int> rows)
{
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

TrainingModel embed_training(const ExperimentConfig& cfg, const Matrix& x_train, std::span<const ClassId> labels)
{
    const int n = static_cast<int>(x_train.rows());
    if (n < 2)
        throw EmbeddingError("at least two training samples are required");
    NeighborTable nbrs = knn_neighbors(x_train, std::min(cfg.graph_knn, n - 1));
    TrainingModel model;
    model.kernel_scale = cfg.graph_sigma > 0.0 ? cfg.graph_sigma : median_knn_distance(nbrs);
    if (!(model.kernel_scale > 0.0))
        throw EmbeddingError("graph kernel scale is zero");
    model.graphs = class_weights(x_train, labels, nbrs, model.kernel_scale);
    model.embedding = compute_embedding(model.graphs, cfg.method, cfg.mu, cfg.dim);
    return model;
}

/// Reference and query coordinates of a strategy's out-of-sample map.
struct MappedPoints {
    Matrix references;
    Matrix queries;
};

MappedPoints map_points(const ExperimentConfig& cfg, Strategy strategy, const Matrix& x_train,
                        std::span<const ClassId> labels, int class_count, const TrainingModel& model,
                        const Matrix& x_query)
{
    const Matrix& y = model.embedding.coords;
    MappedPoints out;
    switch (strategy) {
    case Strategy::RbfFit: {
        const RbfInterpolator f = extend_rbf_fit(x_train, y, labels, class_count, cfg.sosi);
        out.references = evaluate_all(f, x_train);
        out.queries = evaluate_all(f, x_query);
        return out;
    }
    case Strategy::Lle:
        out.references = y;
        out.queries.resize(x_query.rows(), y.cols());
        for (Eigen::Index i = 0; i < x_query.rows(); ++i)
            out.queries.row(i) =
                extend_lle(x_train, y, x_query.row(i).transpose(), std::min<int>(cfg.lle_k, x_train.rows()))
                    .coords.transpose();
        return out;
    case Strategy::Nystrom:
        out.references = y;
        out.queries.resize(x_query.rows(), y.cols());
        for (Eigen::Index i = 0; i < x_query.rows(); ++i)
            out.queries.row(i) = extend_nystrom(x_train, y, x_query.row(i).transpose(), model.kernel_scale).transpose();
        return out;
    case Strategy::KernelRidge:
        out.references = y;
        out.queries = KernelRidge(x_train, y, cfg.ridge, model.kernel_scale).predict_all(x_query);
        return out;
    case Strategy::NnAmbient:
        out.references = x_train;
        out.queries = x_query;
        return out;
    case Strategy::Sosi:
    case Strategy::SslGaussianFields:
        break;
    }
    throw ArgumentError("strategy '" + to_string(strategy) + "' has no standalone embedding map");
}

/// Runs `cell(i)` for every i in [0, count) on up to `threads` workers.
void run_cells(std::size_t count, int threads, const std::function<void(std::size_t)>& cell)
{
    unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            cell(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++)
                cell(i);
        });
}

ReportRow failed_row(const std::string& experiment, Strategy s, double x, std::uint64_t seed, const std::string& why)
{
    ReportRow row;
    row.experiment = experiment;
    row.strategy = to_string(s);
    row.x = x;
    row.seed = seed;
    row.message = why;
    return row;
}

template <typename Cell>
std::vector<ReportRow> fan_out(const ExperimentConfig& cfg, Cell&& cell)
{
    validate(cfg);
    const std::size_t cells = cfg.ratios.size() * cfg.seeds.size();
    std::vector<std::vector<ReportRow>> parts(cells);
    run_cells(cells, cfg.threads, [&](std::size_t i) {
        const double ratio = cfg.ratios[i / cfg.seeds.size()];
        const std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
        parts[i] = cell(ratio, seed);
    });
    std::vector<ReportRow> rows;
    for (auto& p : parts)
        rows.insert(rows.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    if (!cfg.timing)
        for (auto& r : rows)
            r.wall_ms = 0.0;
    finalize_rows(rows);
    return rows;
}

} // namespace

std::vector<double> parse_sigma_grid(const std::string& text)
{
    const auto parts = split(text, ':');
    if (parts.size() != 3)
        throw ConfigError("sigma grid must be lo:hi:count, got '" + text + "'");
    const double lo = parse_number<double>(parts[0], "sigma grid");
    const double hi = parse_number<double>(parts[1], "sigma grid");
    const int count = parse_number<int>(parts[2], "sigma grid");
    if (!(lo > 0.0) || !(hi >= lo) || count < 1 || (count > 1 && !(hi > lo)))
        throw ConfigError("sigma grid needs 0 < lo < hi and count >= 1");
    return log_grid(lo, hi, count);
}

std::vector<int> parse_schedule(const std::string& text)
{
    const auto parts = split(text, ':');
    if (parts.size() != 3)
        throw ConfigError("schedule must be N:Q:R, got '" + text + "'");
    return equispaced_schedule(parse_number<int>(parts[0], "schedule"), parse_number<int>(parts[1], "schedule"),
                               parse_number<int>(parts[2], "schedule"));
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }

    ExperimentConfig cfg;
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.')))
            return trim(*v);
        return std::nullopt;
    };
    auto num = [&]<typename T>(const std::string& key, T& target) {
        if (auto v = get(key))
            target = parse_number<T>(*v, key);
    };
    auto flag = [&](const std::string& key, bool& target) {
        if (auto v = get(key))
            target = parse_bool(*v, key);
    };

    static const std::vector<std::string> known = {
        "dataset.source", "dataset.classes", "dataset.per_class", "dataset.noise", "dataset.amplitude",
        "dataset.offset", "dataset.span", "dataset.features", "dataset.labels", "dataset.header", "dataset.root",
        "dataset.width", "dataset.height", "embedding.method", "embedding.dim", "embedding.mu", "embedding.knn",
        "embedding.graph_sigma", "sosi.rounds", "sosi.schedule", "sosi.lambda", "sosi.kproj", "sosi.early_stop",
        "sosi.reoptimize", "sosi.knn", "sosi.scale_mode", "sosi.ratio_threshold", "sosi.sigma_grid",
        "experiment.strategies", "experiment.ratios", "experiment.seeds", "experiment.lle_k", "experiment.ridge",
        "experiment.sweep_grid", "experiment.timing", "experiment.threads"};
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError("key '" + section + "' outside a section");
        for (const auto& kv : body) {
            const std::string key = section + "." + kv.first;
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ConfigError("unknown config key '" + key + "'");
        }
    }

    if (auto v = get("dataset.source")) {
        if (*v == "synthetic")
            cfg.dataset.source = DataSource::Synthetic;
        else if (*v == "csv")
            cfg.dataset.source = DataSource::Csv;
        else if (*v == "images")
            cfg.dataset.source = DataSource::Images;
        else
            throw ConfigError("unknown dataset source '" + *v + "'");
    }
    num("dataset.classes", cfg.dataset.classes);
    num("dataset.per_class", cfg.dataset.per_class);
    num("dataset.noise", cfg.dataset.noise);
    num("dataset.amplitude", cfg.dataset.shape.amplitude);
    num("dataset.offset", cfg.dataset.shape.offset);
    num("dataset.span", cfg.dataset.shape.span);
    if (auto v = get("dataset.features"))
        cfg.dataset.features = *v;
    if (auto v = get("dataset.labels"))
        cfg.dataset.labels = *v;
    flag("dataset.header", cfg.dataset.header);
    if (auto v = get("dataset.root"))
        cfg.dataset.root = *v;
    num("dataset.width", cfg.dataset.width);
    num("dataset.height", cfg.dataset.height);

    try {
        if (auto v = get("embedding.method"))
            cfg.method = parse_embedding_method(*v);
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    num("embedding.dim", cfg.dim);
    num("embedding.mu", cfg.mu);
    num("embedding.knn", cfg.graph_knn);
    if (auto v = get("embedding.graph_sigma"))
        cfg.graph_sigma = *v == "auto" ? 0.0 : parse_number<double>(*v, "embedding.graph_sigma");

    num("sosi.rounds", cfg.sosi.rounds);
    if (auto v = get("sosi.schedule")) {
        cfg.sosi.schedule.clear();
        for (const auto& item : split(*v, ','))
            cfg.sosi.schedule.push_back(parse_number<int>(item, "sosi.schedule"));
    }
    cfg.sosi.scale_mode =
        cfg.method == EmbeddingMethod::Fisher ? ScaleMode::RatioThreshold : ScaleMode::MinimizeRegularizer;
    num("sosi.lambda", cfg.sosi.lambda);
    num("sosi.kproj", cfg.sosi.k_proj);
    num("sosi.early_stop", cfg.sosi.early_stop_fraction);
    flag("sosi.reoptimize", cfg.sosi.reoptimize_scales);
    num("sosi.knn", cfg.sosi.knn);
    if (auto v = get("sosi.scale_mode")) {
        if (*v == "minimize")
            cfg.sosi.scale_mode = ScaleMode::MinimizeRegularizer;
        else if (*v == "ratio")
            cfg.sosi.scale_mode = ScaleMode::RatioThreshold;
        else
            throw ConfigError("sosi.scale_mode must be minimize or ratio");
    }
    num("sosi.ratio_threshold", cfg.sosi.ratio_threshold);
    if (auto v = get("sosi.sigma_grid"))
        cfg.sosi.sigma_grid = parse_sigma_grid(*v);

    if (auto v = get("experiment.strategies")) {
        for (const auto& item : split(*v, ',')) {
            try {
                cfg.strategies.push_back(parse_strategy(item));
            } catch (const ArgumentError& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (auto v = get("experiment.ratios"))
        for (const auto& item : split(*v, ','))
            cfg.ratios.push_back(parse_number<double>(item, "experiment.ratios"));
    if (auto v = get("experiment.seeds"))
        for (const auto& item : split(*v, ','))
            cfg.seeds.push_back(parse_number<std::uint64_t>(item, "experiment.seeds"));
    num("experiment.lle_k", cfg.lle_k);
    num("experiment.ridge", cfg.ridge);
    if (auto v = get("experiment.sweep_grid"))
        cfg.sweep_grid = parse_sigma_grid(*v);
    flag("experiment.timing", cfg.timing);
    num("experiment.threads", cfg.threads);

    validate(cfg);
    return cfg;
}

void validate(const ExperimentConfig& cfg)
{
    const auto& d = cfg.dataset;
    switch (d.source) {
    case DataSource::Synthetic:
        if (d.classes < 2 || d.per_class < 2 || d.noise < 0.0)
            throw ConfigError("synthetic data needs >= 2 classes, >= 2 points per class and noise >= 0");
        break;
    case DataSource::Csv:
        if (d.features.empty() || d.labels.empty())
            throw ConfigError("csv data needs dataset.features and dataset.labels");
        break;
    case DataSource::Images:
        if (d.root.empty() || d.width < 1 || d.height < 1)
            throw ConfigError("image data needs dataset.root and positive width/height");
        break;
    }
    if (cfg.dim < 1)
        throw ConfigError("embedding.dim must be >= 1");
    if (cfg.mu < 0.0)
        throw ConfigError("embedding.mu must be >= 0");
    if (cfg.graph_knn < 1 || cfg.sosi.knn < 1)
        throw ConfigError("neighbor counts must be >= 1");
    if (cfg.strategies.empty())
        throw ConfigError("experiment.strategies is empty");
    if (cfg.seeds.empty())
        throw ConfigError("experiment.seeds is empty");
    if (cfg.ratios.empty())
        throw ConfigError("experiment.ratios is empty");
    for (double r : cfg.ratios)
        if (!(r > 0.0 && r < 1.0))
            throw ConfigError("labeled ratios must lie in (0, 1)");
    if (cfg.lle_k < 1 || cfg.ridge < 0.0 || cfg.threads < 0)
        throw ConfigError("experiment.lle_k >= 1, ridge >= 0 and threads >= 0 required");
    if (cfg.sosi.k_proj < 1 || cfg.sosi.lambda < 0.0)
        throw ConfigError("sosi.kproj >= 1 and sosi.lambda >= 0 required");
    if (!(cfg.sosi.early_stop_fraction > 0.0 && cfg.sosi.early_stop_fraction <= 1.0))
        throw ConfigError("sosi.early_stop must lie in (0, 1]");
}

Dataset prepare_split(const ExperimentConfig& cfg, double ratio, std::uint64_t seed)
{
    const auto& d = cfg.dataset;
    Dataset full;
    switch (d.source) {
    case DataSource::Synthetic:
        full = synthetic_curves(d.classes, d.per_class, d.noise, seed, d.shape);
        break;
    case DataSource::Csv:
        full = load_matrix_csv(d.features, d.labels, CsvOptions{d.header});
        break;
    case DataSource::Images:
        full = load_image_dirs(d.root, d.width, d.height);
        break;
    }
    if (!full.has_reference())
        throw ConfigError("experiments need a label for every sample");
    return split_labels(full, ratio, split_seed(seed));
}

TrainingModel train_embedding(const ExperimentConfig& cfg, const Dataset& ds)
{
    const auto labels = ds.training_labels();
    return embed_training(cfg, ds.training_samples(), labels);
}

std::vector<ClassId> classify_unlabeled(const ExperimentConfig& cfg, Strategy strategy, const Dataset& ds,
                                        const TrainingModel& model)
{
    const int n = ds.labeled_count;
    const int u = ds.unlabeled_count();
    const Matrix x_train = ds.training_samples();
    const Matrix x_query = ds.samples.bottomRows(u);
    const auto labels = ds.training_labels();

    switch (strategy) {
    case Strategy::Sosi: {
        const SosiResult r = run_sosi(ds, model.embedding, cfg.sosi);
        return {r.state.labels.begin() + n, r.state.labels.end()};
    }
    case Strategy::NnAmbient: {
        std::vector<ClassId> out(u);
        for (int i = 0; i < u; ++i)
            out[i] = classify_nn_ambient(x_train, labels, x_query.row(i).transpose());
        return out;
    }
    case Strategy::SslGaussianFields:
        return ssl_gaussian_fields(ds.samples, labels, ds.class_count, std::min(cfg.graph_knn, ds.size() - 1),
                                   model.kernel_scale)
            .labels;
    default: {
        const MappedPoints m = map_points(cfg, strategy, x_train, labels, ds.class_count, model, x_query);
        return nn_classify_confidence(m.references, labels, m.queries).labels;
    }
    }
}

double error_percent(const Dataset& ds, std::span<const ClassId> predicted)
{
    const int n = ds.labeled_count;
    const int u = ds.unlabeled_count();
    if (!ds.has_reference())
        throw ArgumentError("scoring needs reference labels");
    if (static_cast<int>(predicted.size()) != u)
        throw ArgumentError("one prediction per unlabeled sample required");
    if (u == 0)
        return 0.0;
    int wrong = 0;
    for (int i = 0; i < u; ++i)
        wrong += predicted[i] != ds.reference_labels[n + i];
    return 100.0 * wrong / u;
}

std::vector<ReportRow> run_split_sweep(const ExperimentConfig& cfg)
{
    const std::string experiment = "split-sweep";
    return fan_out(cfg, [&](double ratio, std::uint64_t seed) {
        std::vector<ReportRow> rows;
        Dataset ds;
        TrainingModel model;
        try {
            ds = prepare_split(cfg, ratio, seed);
            model = train_embedding(cfg, ds);
        } catch (const std::exception& e) {
            for (Strategy s : cfg.strategies)
                rows.push_back(failed_row(experiment, s, ratio, seed, e.what()));
            return rows;
        }
        for (Strategy s : cfg.strategies) {
            const auto start = std::chrono::steady_clock::now();
            try {
                const auto predicted = classify_unlabeled(cfg, s, ds, model);
                ReportRow row;
                row.experiment = experiment;
                row.strategy = to_string(s);
                row.x = ratio;
                row.seed = seed;
                row.error_pct = error_percent(ds, predicted);
                row.wall_ms = elapsed_ms(start);
                rows.push_back(std::move(row));
            } catch (const std::exception& e) {
                rows.push_back(failed_row(experiment, s, ratio, seed, e.what()));
            }
        }
        return rows;
    });
}

std::vector<ReportRow> run_iterative_retraining(const ExperimentConfig& cfg)
{
    for (Strategy s : cfg.strategies)
        if (s == Strategy::SslGaussianFields)
            throw ConfigError("ssl-gf has no embedding map and cannot be retrained");

    return fan_out(cfg, [&](double ratio, std::uint64_t seed) {
        const std::string experiment = ratio_tag("retrain", ratio);
        std::vector<ReportRow> rows;
        Dataset ds;
        std::vector<int> schedule;
        try {
            ds = prepare_split(cfg, ratio, seed);
            schedule = effective_schedule(cfg.sosi, ds.labeled_count, ds.size());
        } catch (const std::exception& e) {
            for (Strategy s : cfg.strategies)
                rows.push_back(failed_row(experiment, s, 1.0, seed, e.what()));
            return rows;
        }
        const int n = ds.labeled_count;
        const int u = ds.unlabeled_count();
        auto make_row = [&](Strategy s, int centers, const std::vector<ClassId>& predicted, double ms) {
            ReportRow row;
            row.experiment = experiment;
            row.strategy = to_string(s);
            row.x = static_cast<double>(centers) / n;
            row.seed = seed;
            row.error_pct = error_percent(ds, predicted);
            row.wall_ms = ms;
            return row;
        };

        for (Strategy s : cfg.strategies) {
            const auto start = std::chrono::steady_clock::now();
            std::size_t done = 0;
            try {
                if (s == Strategy::Sosi) {
                    const TrainingModel model = train_embedding(cfg, ds);
                    const SosiResult r = run_sosi(ds, model.embedding, cfg.sosi);
                    const double ms = elapsed_ms(start);
                    for (const auto& it : r.trace) {
                        const std::vector<ClassId> predicted(it.state.labels.begin() + n, it.state.labels.end());
                        rows.push_back(make_row(s, it.center_count, predicted, ms));
                        ++done;
                    }
                    continue;
                }

                // Training rows: the labeled ones, then admitted rows with their estimated labels.
                std::vector<int> train_rows(n);
                std::iota(train_rows.begin(), train_rows.end(), 0);
                std::vector<ClassId> train_labels = ds.training_labels();
                std::vector<ClassId> admitted_label(ds.size(), 0);
                for (std::size_t r = 0; r < schedule.size(); ++r) {
                    const auto iter_start = std::chrono::steady_clock::now();
                    const Matrix x_train = select_rows(ds.samples, train_rows);
                    const TrainingModel model = embed_training(cfg, x_train, train_labels);

                    std::vector<int> pool;
                    for (int i = n; i < ds.size(); ++i)
                        if (admitted_label[i] == 0)
                            pool.push_back(i);
                    std::vector<ClassId> predicted(u);
                    Classification c;
                    if (!pool.empty()) {
                        const MappedPoints m = map_points(cfg, s, x_train, train_labels, ds.class_count, model,
                                                          select_rows(ds.samples, pool));
                        c = nn_classify_confidence(m.references, train_labels, m.queries);
                    }
                    for (int i = n; i < ds.size(); ++i)
                        predicted[i - n] = admitted_label[i];
                    for (std::size_t j = 0; j < pool.size(); ++j)
                        predicted[pool[j] - n] = c.labels[j];
                    rows.push_back(make_row(s, schedule[r], predicted, elapsed_ms(iter_start)));
                    ++done;

                    if (r + 1 == schedule.size())
                        break;
                    std::vector<std::size_t> order(pool.size());
                    std::iota(order.begin(), order.end(), 0);
                    std::stable_sort(order.begin(), order.end(),
                                     [&](std::size_t a, std::size_t b) { return c.scores[a] > c.scores[b]; });
                    const int admit = schedule[r + 1] - schedule[r];
                    for (int j = 0; j < admit; ++j) {
                        const int row = pool[order[j]];
                        admitted_label[row] = c.labels[order[j]];
                        train_rows.push_back(row);
                        train_labels.push_back(c.labels[order[j]]);
                    }
                }
            } catch (const std::exception& e) {
                for (std::size_t r = done; r < std::max<std::size_t>(schedule.size(), 1); ++r)
                    rows.push_back(failed_row(experiment, s, r < schedule.size() ? double(schedule[r]) / n : 1.0,
                                              seed, e.what()));
            }
        }
        return rows;
    });
}

std::vector<ReportRow> run_scale_sweep(const ExperimentConfig& cfg)
{
    return fan_out(cfg, [&](double ratio, std::uint64_t seed) {
        const std::string experiment = ratio_tag("scale-sweep", ratio);
        const std::string strategy = to_string(Strategy::RbfFit);
        std::vector<ReportRow> rows;
        auto fail = [&](double sigma, const std::string& why) {
            ReportRow row;
            row.experiment = experiment;
            row.strategy = strategy;
            row.x = sigma;
            row.seed = seed;
            row.message = why;
            rows.push_back(std::move(row));
        };

        Dataset ds;
        TrainingModel model;
        NeighborTable nbrs;
        SeparablePairs pairs;
        std::vector<double> grid = cfg.sweep_grid;
        std::vector<ClassId> labels;
        Matrix x_train;
        try {
            ds = prepare_split(cfg, ratio, seed);
            model = train_embedding(cfg, ds);
            x_train = ds.training_samples();
            labels = ds.training_labels();
            nbrs = knn_neighbors(x_train, std::min(cfg.sosi.knn, ds.labeled_count - 1));
            nbrs.assign_classes(labels, ds.class_count);
            pairs = separable_pairs(model.embedding.coords, labels, ds.class_count);
            if (grid.empty())
                grid = default_sigma_grid(x_train, nbrs);
        } catch (const std::exception& e) {
            if (grid.empty())
                fail(0.0, e.what());
            for (double sigma : grid)
                fail(sigma, e.what());
            return rows;
        }

        const Matrix x_query = ds.samples.bottomRows(ds.unlabeled_count());
        for (double sigma : grid) {
            const auto start = std::chrono::steady_clock::now();
            try {
                FitReport fit;
                const RbfInterpolator f = fit_interpolator(
                    x_train, model.embedding.coords, Vector::Constant(model.embedding.dim(), sigma), &fit);
                const Classification c = nn_classify_confidence(f, x_train, labels, x_query);
                ReportRow row;
                row.experiment = experiment;
                row.strategy = strategy;
                row.x = sigma;
                row.seed = seed;
                row.error_pct = error_percent(ds, c.labels);
                // R-hat is reported only where the fit interpolates the embedding.
                if (fit.max_residual <= kInterpolationTolerance) {
                    try {
                        row.regularizer =
                            regularization_terms(f, x_train, labels, ds.class_count, nbrs, pairs, cfg.sosi.lambda)
                                .value;
                    } catch (const RegularizerError&) {
                        row.regularizer.reset();
                    }
                }
                row.wall_ms = elapsed_ms(start);
                rows.push_back(std::move(row));
            } catch (const std::exception& e) {
                fail(sigma, e.what());
            }
        }
        return rows;
    });
}

void finalize_rows(std::vector<ReportRow>& rows)
{
    using Key = std::tuple<std::string, std::string, double>;
    std::map<Key, std::vector<const ReportRow*>> groups;
    for (const auto& r : rows)
        if (r.seed)
            groups[{r.experiment, r.strategy, r.x}].push_back(&r);

    std::vector<ReportRow> means;
    for (const auto& [key, members] : groups) {
        ReportRow m;
        std::tie(m.experiment, m.strategy, m.x) = key;
        double err = 0.0, ms = 0.0, reg = 0.0;
        int ok = 0, with_reg = 0;
        for (const ReportRow* r : members) {
            ms += r->wall_ms;
            if (r->error_pct) {
                err += *r->error_pct;
                ++ok;
            }
            if (r->regularizer) {
                reg += *r->regularizer;
                ++with_reg;
            }
        }
        m.wall_ms = ms / members.size();
        if (ok > 0)
            m.error_pct = err / ok;
        if (with_reg > 0 && with_reg == static_cast<int>(members.size()))
            m.regularizer = reg / with_reg;
        means.push_back(std::move(m));
    }
    rows.insert(rows.end(), means.begin(), means.end());

    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        const auto seed_key = [](const ReportRow& r) {
            return r.seed ? *r.seed : std::numeric_limits<std::uint64_t>::max();
        };
        return std::forward_as_tuple(a.experiment, a.strategy, a.x, !a.seed.has_value(), seed_key(a))
            < std::forward_as_tuple(b.experiment, b.strategy, b.x, !b.seed.has_value(), seed_key(b));
    });
}

bool all_succeeded(const std::vector<ReportRow>& rows)
{
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.seed || r.error_pct; });
}

void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ArgumentError("cannot write report '" + path.string() + "'");
    out << "experiment,strategy,x,seed,error_pct,wall_ms\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.strategy << ',' << format_number(r.x) << ',';
        if (r.seed)
            out << *r.seed;
        else
            out << "mean";
        out << ',';
        if (r.error_pct) {
            std::snprintf(buf, sizeof buf, "%.6f", *r.error_pct);
            out << buf;
        } else {
            out << "failed";
        }
        std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
        out << ',' << buf << '\n';
    }
    if (!out)
        throw ArgumentError("error while writing report '" + path.string() + "'");
}

void emit_regularizer_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ArgumentError("cannot write report '" + path.string() + "'");
    out << "experiment,x,seed,regularizer\n";
    for (const auto& r : rows) {
        if (!r.regularizer)
            continue;
        out << r.experiment << ',' << format_number(r.x) << ',';
        if (r.seed)
            out << *r.seed;
        else
            out << "mean";
        out << ',' << format_number(*r.regularizer) << '\n';
    }
}

std::vector<ReportRow> parse_report(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open report '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != "experiment,strategy,x,seed,error_pct,wall_ms")
        throw ParseError("report header mismatch");
    std::vector<ReportRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto cells = split(line, ',');
        if (cells.size() != 6)
            throw ParseError("report line " + std::to_string(line_no) + ": expected 6 fields");
        ReportRow r;
        try {
            r.experiment = cells[0];
            r.strategy = cells[1];
            r.x = parse_number<double>(cells[2], "x");
            if (cells[3] != "mean")
                r.seed = parse_number<std::uint64_t>(cells[3], "seed");
            if (cells[4] != "failed")
                r.error_pct = parse_number<double>(cells[4], "error_pct");
            r.wall_ms = parse_number<double>(cells[5], "wall_ms");
        } catch (const ConfigError& e) {
            throw ParseError("report line " + std::to_string(line_no) + ": " + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace sosi
