#include "sosi/sosi.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>

namespace sosi {

namespace {

constexpr double kQpTolerance = 1e-10;
constexpr int kQpMaxIterations = 10000;
constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

Vector project_to_simplex(const Vector& v)
{
    const auto k = v.size();
    if (k == 0)
        throw ArgumentError("cannot project an empty vector onto the simplex");
    std::vector<double> u(v.data(), v.data() + k);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        cumulative += u[j];
        const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0)
            theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

SimplexQpResult solve_simplex_qp(const Matrix& basis, const Vector& x)
{
    const auto k = basis.cols();
    if (k == 0)
        throw ArgumentError("simplex QP needs at least one basis vector");
    if (basis.rows() != x.size())
        throw ArgumentError("basis and target differ in dimension");

    SimplexQpResult res;
    auto objective = [&](const Vector& w) { return (x - basis * w).squaredNorm(); };
    if (k == 1) {
        res.weights = Vector::Ones(1);
        res.objective = objective(res.weights);
        return res;
    }

    const Matrix gram = basis.transpose() * basis;
    const Vector bx = basis.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    Vector w = Vector::Constant(k, 1.0 / static_cast<double>(k));
    double obj = objective(w);
    if (lmax > 0.0) {
        const double step = 1.0 / (2.0 * lmax);
        for (res.iterations = 1; res.iterations <= kQpMaxIterations; ++res.iterations) {
            const Vector grad = 2.0 * (gram * w - bx);
            Vector next = project_to_simplex(w - step * grad);
            const double next_obj = objective(next);
            const double decrease = obj - next_obj;
            if (next_obj <= obj) {
                w = std::move(next);
                obj = next_obj;
            }
            if (decrease < kQpTolerance)
                break;
        }
    }
    res.weights = w;
    res.objective = obj;
    return res;
}

ProjectionResult project_onto_class(const Vector& x, ClassId m, const Matrix& x_train,
                                    std::span<const ClassId> train_labels, const Matrix& y_train, int k_proj)
{
    if (static_cast<Eigen::Index>(train_labels.size()) != x_train.rows() || y_train.rows() != x_train.rows())
        throw ArgumentError("training samples, labels and embedding differ in size");
    if (k_proj < 1)
        throw ArgumentError("K_proj must be positive");

    std::vector<std::pair<double, int>> cand;
    for (Eigen::Index i = 0; i < x_train.rows(); ++i)
        if (train_labels[i] == m)
            cand.emplace_back(squared_distance(x, x_train.row(i).transpose()), static_cast<int>(i));
    if (cand.empty())
        throw ArgumentError("class " + std::to_string(m) + " has no training samples");
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(k_proj), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

    ProjectionResult out;
    Matrix basis(x_train.cols(), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        out.neighbors.push_back(cand[i].second);
        basis.col(static_cast<Eigen::Index>(i)) = x_train.row(cand[i].second).transpose();
    }
    const SimplexQpResult qp = solve_simplex_qp(basis, x);
    out.weights = qp.weights;
    out.objective = qp.objective;
    out.target = Vector::Zero(y_train.cols());
    for (std::size_t i = 0; i < k; ++i)
        out.target += qp.weights[static_cast<Eigen::Index>(i)] * y_train.row(out.neighbors[i]).transpose();
    return out;
}

Classification nn_classify_confidence(const Matrix& reference_coords, std::span<const ClassId> reference_labels,
                                      const Matrix& query_coords)
{
    const auto n = reference_coords.rows();
    if (static_cast<Eigen::Index>(reference_labels.size()) != n || n == 0)
        throw ArgumentError("one label per reference point required");
    if (std::all_of(reference_labels.begin(), reference_labels.end(),
                    [&](ClassId c) { return c == reference_labels[0]; }))
        throw ArgumentError("confidence scores need at least two classes among the references");
    if (query_coords.cols() != reference_coords.cols())
        throw ArgumentError("query and reference coordinates differ in dimension");

    Classification out;
    out.labels.resize(query_coords.rows());
    out.scores.resize(query_coords.rows());
    for (Eigen::Index i = 0; i < query_coords.rows(); ++i) {
        Eigen::Index best = 0;
        double best_d = kInf;
        std::vector<double> dist(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            dist[j] = squared_distance(reference_coords.row(j), query_coords.row(i));
            if (dist[j] < best_d) {
                best_d = dist[j];
                best = j;
            }
        }
        const ClassId c = reference_labels[best];
        double other_d = kInf;
        for (Eigen::Index j = 0; j < n; ++j)
            if (reference_labels[j] != c && dist[j] < other_d)
                other_d = dist[j];
        out.labels[i] = c;
        out.scores[i] = best_d > 0.0 ? std::sqrt(other_d) / std::sqrt(best_d) : kInf;
    }
    return out;
}

Classification nn_classify_confidence(const RbfInterpolator& f, const Matrix& x_train,
                                      std::span<const ClassId> train_labels, const Matrix& x_query)
{
    return nn_classify_confidence(evaluate_all(f, x_train), train_labels, evaluate_all(f, x_query));
}

std::vector<int> equispaced_schedule(int n, int q, int rounds)
{
    if (n < 1 || q < n)
        throw ArgumentError("schedule needs 1 <= N <= Q");
    if (q == n)
        return {n};
    if (rounds < 2)
        throw ArgumentError("at least two rounds are needed when unlabeled samples exist");
    std::vector<int> out;
    for (int r = 0; r < rounds; ++r) {
        const int l = n + static_cast<int>(std::llround(static_cast<double>(q - n) * r / (rounds - 1)));
        if (out.empty() || l > out.back())
            out.push_back(l);
    }
    return out;
}

std::vector<int> effective_schedule(const SosiConfig& cfg, int n, int q)
{
    std::vector<int> sched = cfg.schedule.empty() ? equispaced_schedule(n, q, cfg.rounds) : cfg.schedule;
    if (sched.front() != n || sched.back() != q)
        throw ArgumentError("schedule must start at N=" + std::to_string(n) + " and end at Q=" + std::to_string(q));
    for (std::size_t i = 1; i < sched.size(); ++i)
        if (sched[i] <= sched[i - 1])
            throw ArgumentError("schedule must be strictly increasing");
    if (!(cfg.early_stop_fraction > 0.0 && cfg.early_stop_fraction <= 1.0))
        throw ArgumentError("early-stop fraction must lie in (0, 1]");

    const int stop = n + static_cast<int>(std::llround(cfg.early_stop_fraction * (q - n)));
    std::vector<int> out;
    for (int l : sched)
        if (l < stop)
            out.push_back(l);
    if (out.empty() || out.back() != stop)
        out.push_back(stop);
    return out;
}

InitialFit fit_initial(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                       int class_count, const SosiConfig& cfg)
{
    const int n = static_cast<int>(x_train.rows());
    if (n < 2)
        throw ArgumentError("at least two training samples are required");
    InitialFit init;
    init.nbrs = knn_neighbors(x_train, std::min(cfg.knn, n - 1));
    init.nbrs.assign_classes(labels, class_count);
    init.pairs = separable_pairs(y_train, labels, class_count);
    init.grid = cfg.sigma_grid.empty() ? default_sigma_grid(x_train, init.nbrs) : cfg.sigma_grid;

    ScaleSearchOptions opts;
    opts.lambda = cfg.lambda;
    opts.mode = cfg.scale_mode;
    opts.ratio_threshold = cfg.ratio_threshold;
    opts.grid = init.grid;
    init.selection = optimize_scales(x_train, y_train, labels, class_count, init.nbrs, init.pairs, opts);
    init.interpolator = fit_interpolator(x_train, y_train, init.selection.scales, &init.fit);
    return init;
}

namespace {

LabelState classify_all(const RbfInterpolator& f, const Dataset& ds, const Matrix& x_train,
                        std::span<const ClassId> train_labels)
{
    const Classification c = nn_classify_confidence(f, x_train, train_labels, ds.samples);
    LabelState state{c.labels, c.scores};
    for (int i = 0; i < ds.labeled_count; ++i) {
        state.labels[i] = train_labels[i];
        state.scores[i] = kInf;
    }
    return state;
}

} // namespace

SosiResult run_sosi(const Dataset& ds, const Embedding& emb, const SosiConfig& cfg)
{
    const int n = ds.labeled_count;
    const int q = ds.size();
    if (emb.size() != n)
        throw ArgumentError("embedding has " + std::to_string(emb.size()) + " rows but the dataset has " +
                            std::to_string(n) + " labeled samples");
    const Matrix x_train = ds.training_samples();
    const std::vector<ClassId> train_labels = ds.training_labels();
    const std::vector<int> schedule = effective_schedule(cfg, n, q);

    SosiResult result;
    InitialFit init = fit_initial(x_train, emb.coords, train_labels, ds.class_count, cfg);
    result.initial_selection = init.selection;
    RbfInterpolator f = std::move(init.interpolator);

    std::vector<int> centers(n);
    std::iota(centers.begin(), centers.end(), 0);
    std::vector<char> is_center(q, 0);
    std::fill(is_center.begin(), is_center.begin() + n, 1);
    Matrix targets = emb.coords;

    IterationTrace first;
    first.iteration = 1;
    first.center_count = n;
    first.center_rows = centers;
    first.scales = f.scales;
    first.fit = init.fit;
    first.state = classify_all(f, ds, x_train, train_labels);
    result.trace.push_back(std::move(first));

    std::unique_ptr<RegularizerGeometry> geometry;
    auto reselect = [&](const Matrix& center_x, const Matrix& center_targets) {
        if (!geometry)
            geometry = std::make_unique<RegularizerGeometry>(x_train, train_labels, ds.class_count, init.nbrs);
        ScaleSearchOptions opts;
        opts.lambda = cfg.lambda;
        opts.mode = cfg.scale_mode;
        opts.ratio_threshold = cfg.ratio_threshold;
        opts.grid = init.grid;
        try {
            return optimize_scales(center_x, center_targets, *geometry, init.pairs, opts).scales;
        } catch (const ScaleSelectionError&) {
            if (!cfg.sigma_grid.empty())
                throw;
        }
        // No default-grid scale interpolates; the grid of the current center spacing is used.
        const int k = std::min<int>(cfg.knn, static_cast<int>(center_x.rows()) - 1);
        opts.grid = default_sigma_grid(center_x, knn_neighbors(center_x, k));
        return optimize_scales(center_x, center_targets, *geometry, init.pairs, opts).scales;
    };

    for (std::size_t r = 1; r < schedule.size(); ++r) {
        const LabelState& prev = result.trace.back().state;
        std::vector<int> pool;
        for (int i = n; i < q; ++i)
            if (!is_center[i])
                pool.push_back(i);
        std::stable_sort(pool.begin(), pool.end(),
                         [&](int a, int b) { return prev.scores[a] > prev.scores[b]; });
        const auto add = static_cast<std::size_t>(schedule[r] - static_cast<int>(centers.size()));

        IterationTrace it;
        it.iteration = static_cast<int>(r) + 1;
        const Eigen::Index old_rows = targets.rows();
        targets.conservativeResize(old_rows + static_cast<Eigen::Index>(add), Eigen::NoChange);
        for (std::size_t a = 0; a < add; ++a) {
            const int row = pool[a];
            ProjectionResult proj = project_onto_class(ds.samples.row(row).transpose(), prev.labels[row], x_train,
                                                       train_labels, emb.coords, cfg.k_proj);
            targets.row(old_rows + static_cast<Eigen::Index>(a)) = proj.target.transpose();
            centers.push_back(row);
            is_center[row] = 1;
            it.admitted.emplace_back(row, std::move(proj));
        }

        Matrix center_x(static_cast<Eigen::Index>(centers.size()), ds.dim());
        for (std::size_t l = 0; l < centers.size(); ++l)
            center_x.row(static_cast<Eigen::Index>(l)) = ds.samples.row(centers[l]);

        if (cfg.reoptimize_scales) {
            f = fit_interpolator(center_x, targets, reselect(center_x, targets), &it.fit);
            it.rescaled = true;
        } else {
            f = fit_interpolator(center_x, targets, f.scales, &it.fit);
            // Kept scales that no longer interpolate the grown center set are selected again.
            if (!(it.fit.max_residual <= kInterpolationTolerance)) {
                f = fit_interpolator(center_x, targets, reselect(center_x, targets), &it.fit);
                it.rescaled = true;
            }
        }

        it.center_count = static_cast<int>(centers.size());
        it.center_rows = centers;
        it.scales = f.scales;
        it.state = classify_all(f, ds, x_train, train_labels);
        result.trace.push_back(std::move(it));
    }

    result.interpolator = std::move(f);
    result.state = result.trace.back().state;
    return result;
}

void write_trace_csv(const SosiResult& result, const Dataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "iteration,point,label,confidence\n" << std::setprecision(17);
    for (const auto& it : result.trace)
        for (int i = 0; i < ds.size(); ++i) {
            const auto id = ds.original_index.empty() ? static_cast<std::size_t>(i) : ds.original_index[i];
            out << it.iteration << ',' << id << ',' << it.state.labels[i] << ',';
            if (std::isinf(it.state.scores[i]))
                out << "inf";
            else
                out << it.state.scores[i];
            out << '\n';
        }
}

} // namespace sosi
