#include "sosi/rbf.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace sosi {

namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kJitterFactor = 1e-10;
constexpr double kMinDerivative = 1e-12;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

} // namespace

Matrix kernel_from_squared_distances(const Matrix& sq_dist, double sigma)
{
    if (!(sigma > 0.0))
        throw ArgumentError("RBF scale must be positive");
    const double inv = 1.0 / (sigma * sigma);
    return (-inv * sq_dist.array()).exp().matrix();
}

Matrix build_kernel_matrix(const Matrix& centers, const Matrix& eval_points, double sigma)
{
    if (centers.cols() != eval_points.cols())
        throw ArgumentError("centers and evaluation points differ in dimension");
    return kernel_from_squared_distances(pairwise_squared_distances(eval_points, centers), sigma);
}

CoefficientFit fit_coefficients(const Matrix& phi, const Matrix& targets)
{
    if (phi.rows() != phi.cols())
        throw ArgumentError("kernel matrix must be square");
    if (targets.rows() != phi.rows())
        throw ArgumentError("target count does not match kernel matrix size");

    CoefficientFit fit;
    Eigen::PartialPivLU<Matrix> lu(phi);
    fit.rcond = lu.rcond();
    // A zero pivot makes the estimate NaN; the matrix is singular.
    if (!std::isfinite(fit.rcond))
        fit.rcond = 0.0;
    const Matrix* system = &phi;
    Matrix jittered;
    if (!(fit.rcond * kMaxCondition >= 1.0)) {
        fit.jitter = kJitterFactor * phi.trace() / static_cast<double>(phi.rows());
        jittered = phi;
        jittered.diagonal().array() += fit.jitter;
        lu.compute(jittered);
        system = &jittered;
        if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
            throw FitError("kernel matrix is singular even after diagonal jitter (rcond=" +
                           std::to_string(lu.rcond()) + ")");
    }

    fit.coeffs = lu.solve(targets);
    for (int step = 0; step < 2; ++step) {
        const Matrix r = targets - (*system) * fit.coeffs;
        fit.coeffs += lu.solve(r);
    }
    if (!fit.coeffs.allFinite())
        throw FitError("non-finite RBF coefficients");

    const Matrix res = phi * fit.coeffs - targets;
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
        const double scale = 1.0 + targets.col(k).cwiseAbs().maxCoeff();
        fit.residual = std::max(fit.residual, res.col(k).cwiseAbs().maxCoeff() / scale);
    }
    return fit;
}

RbfInterpolator fit_interpolator(const Matrix& centers, const Matrix& targets, const Vector& scales,
                                 FitReport* report)
{
    if (targets.rows() != centers.rows())
        throw ArgumentError("one target row per center required");
    if (targets.cols() != scales.size())
        throw ArgumentError("one scale per output dimension required");
    for (Eigen::Index k = 0; k < scales.size(); ++k)
        if (!(scales[k] > 0.0))
            throw ArgumentError("RBF scales must be positive");

    RbfInterpolator f;
    f.centers = centers;
    f.scales = scales;
    f.coeffs.resize(centers.rows(), targets.cols());
    if (report)
        *report = FitReport{std::vector<double>(scales.size()), std::vector<double>(scales.size()), 0.0};

    const Matrix sq = pairwise_squared_distances(centers, centers);
    // Dimensions sharing a scale share one factorization.
    std::vector<char> done(scales.size(), 0);
    for (Eigen::Index k = 0; k < scales.size(); ++k) {
        if (done[k])
            continue;
        std::vector<Eigen::Index> group;
        for (Eigen::Index j = k; j < scales.size(); ++j)
            if (!done[j] && scales[j] == scales[k])
                group.push_back(j);
        Matrix y(targets.rows(), static_cast<Eigen::Index>(group.size()));
        for (std::size_t g = 0; g < group.size(); ++g)
            y.col(static_cast<Eigen::Index>(g)) = targets.col(group[g]);
        const CoefficientFit fit = fit_coefficients(kernel_from_squared_distances(sq, scales[k]), y);
        for (std::size_t g = 0; g < group.size(); ++g) {
            f.coeffs.col(group[g]) = fit.coeffs.col(static_cast<Eigen::Index>(g));
            done[group[g]] = 1;
            if (report) {
                report->jitter[group[g]] = fit.jitter;
                report->rcond[group[g]] = fit.rcond;
            }
        }
        if (report)
            report->max_residual = std::max(report->max_residual, fit.residual);
    }
    return f;
}

Vector evaluate(const RbfInterpolator& f, const Vector& x)
{
    if (x.size() != f.input_dim())
        throw ArgumentError("evaluation point has the wrong dimension");
    Vector sq(f.size());
    for (int l = 0; l < f.size(); ++l)
        sq[l] = squared_distance(x, f.centers.row(l).transpose());
    Vector out(f.output_dim());
    for (int k = 0; k < f.output_dim(); ++k) {
        const double inv = 1.0 / (f.scales[k] * f.scales[k]);
        out[k] = f.coeffs.col(k).dot((-inv * sq.array()).exp().matrix());
    }
    return out;
}

Matrix evaluate_all(const RbfInterpolator& f, const Matrix& points)
{
    if (points.cols() != f.input_dim())
        throw ArgumentError("evaluation points have the wrong dimension");
    const Matrix sq = pairwise_squared_distances(points, f.centers);
    Matrix out(points.rows(), f.output_dim());
    for (int k = 0; k < f.output_dim(); ++k)
        out.col(k) = kernel_from_squared_distances(sq, f.scales[k]) * f.coeffs.col(k);
    return out;
}

Vector gradient_k(const RbfInterpolator& f, int k, const Vector& x)
{
    if (k < 0 || k >= f.output_dim())
        throw ArgumentError("output dimension out of range");
    if (x.size() != f.input_dim())
        throw ArgumentError("evaluation point has the wrong dimension");
    const double s2 = f.scales[k] * f.scales[k];
    Vector g = Vector::Zero(x.size());
    for (int l = 0; l < f.size(); ++l) {
        const Vector diff = x - f.centers.row(l).transpose();
        const double w = f.coeffs(l, k) * std::exp(-diff.squaredNorm() / s2);
        g += w * diff;
    }
    return (-2.0 / s2) * g;
}

namespace {

// Rows are gradients of sum_l c_l exp(-|p - a_l|^2 / sigma^2) at every point p.
Matrix gradients_from_kernel(const Matrix& phi_pc, const Vector& c, double sigma, const Matrix& points,
                             const Matrix& centers)
{
    const Matrix w = phi_pc * c.asDiagonal();
    const Vector row_sum = w.rowwise().sum();
    Matrix g = row_sum.asDiagonal() * points;
    g.noalias() -= w * centers;
    return (-2.0 / (sigma * sigma)) * g;
}

} // namespace

Matrix gradients_at(const RbfInterpolator& f, int k, const Matrix& points)
{
    if (k < 0 || k >= f.output_dim())
        throw ArgumentError("output dimension out of range");
    const Matrix phi = build_kernel_matrix(f.centers, points, f.scales[k]);
    return gradients_from_kernel(phi, f.coeffs.col(k), f.scales[k], points, f.centers);
}

std::vector<double> RegularizerReport::g() const
{
    std::vector<double> out;
    for (const auto& t : terms)
        out.push_back(t.g);
    return out;
}

std::vector<double> RegularizerReport::d() const
{
    std::vector<double> out;
    for (const auto& t : terms)
        out.push_back(t.d);
    return out;
}

RegularizerGeometry::RegularizerGeometry(const Matrix& points, std::span<const ClassId> labels, int class_count,
                                         const NeighborTable& nbrs)
    : points_(points), labels_(labels.begin(), labels.end()), class_count_(class_count)
{
    const int n = static_cast<int>(points.rows());
    if (static_cast<int>(labels.size()) != n || nbrs.size() != n)
        throw ArgumentError("regularizer needs one label and one neighbor list per point");
    directions_.resize(n);
    by_class_rank_.assign(n, std::vector<std::vector<int>>(class_count));
    for (int i = 0; i < n; ++i) {
        const auto& list = nbrs.index[i];
        if (list.empty())
            throw ArgumentError("every regularization point needs at least one neighbor");
        directions_[i].resize(static_cast<Eigen::Index>(list.size()), points.cols());
        for (std::size_t r = 0; r < list.size(); ++r) {
            const int j = list[r];
            Vector u = points.row(i).transpose() - points.row(j).transpose();
            const double len = u.norm();
            if (len == 0.0)
                throw ArgumentError("duplicate points in regularization set");
            directions_[i].row(static_cast<Eigen::Index>(r)) = (u / len).transpose();
            const ClassId c = labels[j];
            if (c < 1 || c > class_count)
                throw ArgumentError("class id out of range");
            by_class_rank_[i][c - 1].push_back(static_cast<int>(r));
        }
    }
}

DimensionTerms RegularizerGeometry::terms(const Matrix& gradients,
                                          std::span<const std::pair<ClassId, ClassId>> pairs) const
{
    const int n = static_cast<int>(points_.rows());
    DimensionTerms out;
    std::vector<double> mean_abs(n, 0.0);
    std::vector<Vector> proj(n);
    for (int i = 0; i < n; ++i) {
        proj[i] = (directions_[i] * gradients.row(i).transpose()).cwiseAbs();
        mean_abs[i] = proj[i].mean();
        if (!(mean_abs[i] >= kMinDerivative)) {
            ++out.skipped_points;
            continue;
        }
        ++out.used_points;
        out.g += gradients.row(i).norm() / mean_abs[i];
    }

    for (const auto& [a, b] : pairs) {
        // I^k is symmetric in (m, p): both orientations contribute.
        for (const auto& [m, p] : {std::pair{a, b}, std::pair{b, a}}) {
            for (int i = 0; i < n; ++i) {
                if (labels_[i] != m || !(mean_abs[i] >= kMinDerivative))
                    continue;
                const auto& ranks = by_class_rank_[i][p - 1];
                if (ranks.empty()) {
                    ++out.skipped_empty_class;
                    continue;
                }
                double s = 0.0;
                for (int r : ranks)
                    s += proj[i][r];
                out.d += (s / static_cast<double>(ranks.size())) / mean_abs[i];
            }
        }
    }
    return out;
}

RegularizerReport regularization_terms(const RbfInterpolator& f, const Matrix& x_train,
                                       std::span<const ClassId> labels, int class_count,
                                       const NeighborTable& nbrs, const SeparablePairs& pairs, double lambda)
{
    if (pairs.dim() != f.output_dim())
        throw ArgumentError("separable pair sets do not match the output dimension");
    const RegularizerGeometry geometry(x_train, labels, class_count, nbrs);
    RegularizerReport report;
    report.lambda = lambda;
    for (int k = 0; k < f.output_dim(); ++k) {
        const DimensionTerms t = geometry.terms(gradients_at(f, k, x_train), pairs.per_dim[k]);
        if (t.used_points == 0)
            throw RegularizerError("regularizer is degenerate in dimension " + std::to_string(k) +
                                   ": every point has a vanishing mean directional derivative");
        report.terms.push_back(t);
        report.value += t.g - lambda * t.d;
    }
    return report;
}

std::vector<double> log_grid(double lo, double hi, int count)
{
    if (!(lo > 0.0) || !(hi >= lo) || count < 1)
        throw ArgumentError("log grid needs 0 < lo <= hi and count >= 1");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < count; ++i)
        grid[i] = std::exp(a + (b - a) * i / (count - 1));
    grid.back() = hi;
    return grid;
}

std::vector<double> default_sigma_grid(const Matrix& x, const NeighborTable& nbrs, int count)
{
    const double lo = 0.5 * median_knn_distance(nbrs);
    const double hi = 5.0 * std::sqrt(pairwise_squared_distances(x, x).maxCoeff());
    return log_grid(lo, std::max(lo, hi), count);
}

Vector clamp_scales(const Vector& scales)
{
    if (scales.size() < 2)
        return scales;
    const double mean = scales.mean();
    const double sd = std::sqrt((scales.array() - mean).square().mean());
    return scales.cwiseMax(mean - 2.0 * sd).cwiseMin(mean + 2.0 * sd);
}

ScaleSelection optimize_scales(const Matrix& centers, const Matrix& targets, const RegularizerGeometry& geometry,
                               const SeparablePairs& pairs, const ScaleSearchOptions& options)
{
    const auto& grid = options.grid;
    if (grid.empty())
        throw ArgumentError("scale grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1])))
            throw ArgumentError("scale grid must be positive and strictly ascending");
    const int d = static_cast<int>(targets.cols());
    if (pairs.dim() != d)
        throw ArgumentError("separable pair sets do not match the output dimension");

    const Matrix sq_cc = pairwise_squared_distances(centers, centers);
    const Matrix sq_pc = pairwise_squared_distances(geometry.points(), centers);

    ScaleSelection sel;
    const auto g_count = grid.size();
    sel.objective.assign(d, std::vector<double>(g_count, nan()));
    sel.g_hat.assign(d, std::vector<double>(g_count, nan()));
    sel.d_hat.assign(d, std::vector<double>(g_count, nan()));
    sel.residual.assign(d, std::vector<double>(g_count, nan()));

    for (std::size_t s = 0; s < g_count; ++s) {
        const double sigma = grid[s];
        const Matrix phi_cc = kernel_from_squared_distances(sq_cc, sigma);
        CoefficientFit fit;
        try {
            fit = fit_coefficients(phi_cc, targets);
        } catch (const FitError&) {
            continue;
        }
        const Matrix misfit = phi_cc * fit.coeffs - targets;
        const Matrix phi_pc = kernel_from_squared_distances(sq_pc, sigma);
        for (int k = 0; k < d; ++k) {
            // Candidates that cannot reproduce the targets violate the interpolation constraint.
            sel.residual[k][s] =
                misfit.col(k).cwiseAbs().maxCoeff() / (1.0 + targets.col(k).cwiseAbs().maxCoeff());
            if (!(sel.residual[k][s] <= kInterpolationTolerance))
                continue;
            const Matrix grads = gradients_from_kernel(phi_pc, fit.coeffs.col(k), sigma, geometry.points(), centers);
            const DimensionTerms t = geometry.terms(grads, pairs.per_dim[k]);
            if (t.used_points == 0)
                continue;
            sel.g_hat[k][s] = t.g;
            sel.d_hat[k][s] = t.d;
            sel.objective[k][s] = t.g - options.lambda * t.d;
        }
    }

    sel.unclamped.resize(d);
    sel.chosen_index.assign(d, -1);
    for (int k = 0; k < d; ++k) {
        int best = -1;
        for (std::size_t s = 0; s < g_count; ++s) {
            const double obj = sel.objective[k][s];
            if (std::isnan(obj))
                continue;
            if (options.mode == ScaleMode::MinimizeRegularizer) {
                if (best < 0 || obj < sel.objective[k][best])
                    best = static_cast<int>(s);
            } else if (sel.d_hat[k][s] >= options.ratio_threshold * sel.g_hat[k][s]) {
                best = static_cast<int>(s);
            }
        }
        if (best < 0)
            throw ScaleSelectionError("no admissible scale in dimension " + std::to_string(k));
        sel.chosen_index[k] = best;
        sel.unclamped[k] = grid[best];
    }
    sel.scales = options.clamp ? clamp_scales(sel.unclamped) : sel.unclamped;
    return sel;
}

ScaleSelection optimize_scales(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                               int class_count, const NeighborTable& nbrs, const SeparablePairs& pairs,
                               const ScaleSearchOptions& options)
{
    const RegularizerGeometry geometry(x_train, labels, class_count, nbrs);
    return optimize_scales(x_train, y_train, geometry, pairs, options);
}

namespace {

constexpr char kMagic[8] = {'S', 'O', 'S', 'I', 'R', 'B', 'F', '1'};

template <typename T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

template <typename T>
void put(std::ostream& out, T v)
{
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw ParseError("truncated interpolator file");
    return to_little(v);
}

} // namespace

void save_interpolator(const RbfInterpolator& f, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(f.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(f.input_dim()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(f.output_dim()));
    for (int k = 0; k < f.output_dim(); ++k)
        put<double>(out, f.scales[k]);
    for (int l = 0; l < f.size(); ++l)
        for (int j = 0; j < f.input_dim(); ++j)
            put<double>(out, f.centers(l, j));
    for (int l = 0; l < f.size(); ++l)
        for (int k = 0; k < f.output_dim(); ++k)
            put<double>(out, f.coeffs(l, k));
    if (!out)
        throw Error("write failed: " + path.string());
}

RbfInterpolator load_interpolator(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError("not an interpolator file: " + path.string());
    const auto l = get<std::uint64_t>(in);
    const auto n = get<std::uint64_t>(in);
    const auto d = get<std::uint64_t>(in);
    constexpr std::uint64_t kLimit = 1ull << 28;
    if (l > kLimit || n > kLimit || d > kLimit || l * n > kLimit || l * d > kLimit)
        throw ParseError("implausible interpolator header in " + path.string());

    RbfInterpolator f;
    f.scales.resize(static_cast<Eigen::Index>(d));
    f.centers.resize(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(n));
    f.coeffs.resize(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(d));
    for (Eigen::Index k = 0; k < f.scales.size(); ++k)
        f.scales[k] = get<double>(in);
    for (Eigen::Index i = 0; i < f.centers.rows(); ++i)
        for (Eigen::Index j = 0; j < f.centers.cols(); ++j)
            f.centers(i, j) = get<double>(in);
    for (Eigen::Index i = 0; i < f.coeffs.rows(); ++i)
        for (Eigen::Index k = 0; k < f.coeffs.cols(); ++k)
            f.coeffs(i, k) = get<double>(in);
    return f;
}

} // namespace sosi
