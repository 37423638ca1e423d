#include "sosi/baselines.hpp"

#include "sosi/graph.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sosi {

std::string to_string(Strategy s)
{
    switch (s) {
    case Strategy::Sosi: return "sosi";
    case Strategy::RbfFit: return "rbf-fit";
    case Strategy::Lle: return "lle";
    case Strategy::Nystrom: return "nystrom";
    case Strategy::NnAmbient: return "nn";
    case Strategy::SslGaussianFields: return "ssl-gf";
    case Strategy::KernelRidge: return "kridge";
    }
    return "?";
}

Strategy parse_strategy(const std::string& s)
{
    for (Strategy st : {Strategy::Sosi, Strategy::RbfFit, Strategy::Lle, Strategy::Nystrom, Strategy::NnAmbient,
                        Strategy::SslGaussianFields, Strategy::KernelRidge})
        if (s == to_string(st))
            return st;
    if (s == "nn-ambient")
        return Strategy::NnAmbient;
    throw ArgumentError("unknown strategy '" + s + "'");
}

bool uses_embedding(Strategy s)
{
    return s != Strategy::NnAmbient && s != Strategy::SslGaussianFields;
}

RbfInterpolator extend_rbf_fit(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                               int class_count, const SosiConfig& cfg)
{
    return fit_initial(x_train, y_train, labels, class_count, cfg).interpolator;
}

LleExtension extend_lle(const Matrix& x_train, const Matrix& y_train, const Vector& x, int k)
{
    const auto n = x_train.rows();
    if (k < 1 || k > n)
        throw ArgumentError("LLE neighbor count must satisfy 1 <= K <= N");
    std::vector<std::pair<double, int>> cand(n);
    for (Eigen::Index i = 0; i < n; ++i)
        cand[i] = {squared_distance(x, x_train.row(i).transpose()), static_cast<int>(i)};
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());

    LleExtension out;
    Matrix diff(k, x_train.cols());
    for (int i = 0; i < k; ++i) {
        out.neighbors.push_back(cand[i].second);
        diff.row(i) = x_train.row(cand[i].second) - x.transpose();
    }
    if (k == 1) {
        out.weights = Vector::Ones(1);
    } else {
        Matrix gram = diff * diff.transpose();
        const double trace = gram.trace();
        gram.diagonal().array() += 1e-9 * trace;
        Eigen::PartialPivLU<Matrix> lu(gram);
        if (!(trace > 0.0) || !(lu.rcond() > std::numeric_limits<double>::epsilon()))
            throw ExtensionError("singular LLE Gram matrix");
        Vector w = lu.solve(Vector::Ones(k));
        const double s = w.sum();
        if (!(std::abs(s) > 0.0) || !w.allFinite())
            throw ExtensionError("degenerate LLE weights");
        out.weights = w / s;
    }
    out.coords = Vector::Zero(y_train.cols());
    for (int i = 0; i < k; ++i)
        out.coords += out.weights[i] * y_train.row(out.neighbors[i]).transpose();
    return out;
}

Vector extend_nystrom(const Matrix& x_train, const Matrix& y_train, const Vector& x, double sigma)
{
    if (!(sigma > 0.0))
        throw ArgumentError("Nystrom kernel scale must be positive");
    Vector v(x_train.rows());
    for (Eigen::Index i = 0; i < x_train.rows(); ++i)
        v[i] = std::exp(-squared_distance(x, x_train.row(i).transpose()) / (sigma * sigma));
    const double total = v.sum();
    if (!(total > 0.0))
        throw ExtensionError("all Nystrom kernel values underflow to zero");
    return y_train.transpose() * (v / total);
}

ClassId classify_nn_ambient(const Matrix& x_train, std::span<const ClassId> labels, const Vector& x)
{
    if (x_train.rows() == 0 || static_cast<Eigen::Index>(labels.size()) != x_train.rows())
        throw ArgumentError("nearest-neighbor classification needs labeled training samples");
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x_train.rows(); ++i) {
        const double d = squared_distance(x, x_train.row(i).transpose());
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return labels[best];
}

SslResult ssl_gaussian_fields(const Matrix& x_all, std::span<const ClassId> labels, int class_count, int k,
                              double sigma)
{
    const auto q = x_all.rows();
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (n < 1 || n > q)
        throw ArgumentError("SSL needs between 1 and Q labeled samples");
    const auto u = q - n;
    SslResult res;
    res.scores = Matrix::Zero(u, class_count);
    if (u == 0)
        return res;

    const NeighborTable nbrs = knn_neighbors(x_all, k);
    const Matrix w = knn_weight_matrix(x_all, nbrs, sigma);
    const Vector degree = w.rowwise().sum();

    Matrix luu = -w.bottomRightCorner(u, u);
    luu.diagonal() += degree.tail(u);
    Matrix fl = Matrix::Zero(n, class_count);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] < 1 || labels[i] > class_count)
            throw ArgumentError("class id out of range");
        fl(i, labels[i] - 1) = 1.0;
    }
    const Matrix rhs = w.bottomLeftCorner(u, n) * fl;

    Eigen::PartialPivLU<Matrix> lu(luu);
    if (!(lu.rcond() > std::numeric_limits<double>::epsilon())) {
        luu.diagonal().array() += 1e-9;
        lu.compute(luu);
        if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
            throw SslError("unlabeled block of the graph Laplacian is singular");
    }
    res.scores = lu.solve(rhs);

    res.labels.resize(u);
    for (Eigen::Index i = 0; i < u; ++i) {
        int best = 0;
        for (int c = 1; c < class_count; ++c)
            if (res.scores(i, c) > res.scores(i, best))
                best = c;
        res.labels[i] = best + 1;
    }
    return res;
}

KernelRidge::KernelRidge(const Matrix& x_train, const Matrix& targets, double ridge, double sigma)
    : x_train_(x_train), sigma_(sigma)
{
    if (!(ridge >= 0.0))
        throw ArgumentError("ridge parameter must be non-negative");
    if (!(sigma > 0.0))
        throw ArgumentError("kernel scale must be positive");
    if (targets.rows() != x_train.rows())
        throw ArgumentError("one target row per training sample required");
    Matrix k = build_kernel_matrix(x_train, x_train, sigma);
    k.diagonal().array() += ridge;
    Eigen::PartialPivLU<Matrix> lu(k);
    if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
        throw FitError("kernel ridge system is singular");
    dual_ = lu.solve(targets);
    // One refinement step keeps the a = 0 case as exact as plain interpolation.
    dual_ += lu.solve(targets - k * dual_);
}

Vector KernelRidge::predict(const Vector& x) const
{
    Vector v(x_train_.rows());
    for (Eigen::Index i = 0; i < x_train_.rows(); ++i)
        v[i] = std::exp(-squared_distance(x, x_train_.row(i).transpose()) / (sigma_ * sigma_));
    return dual_.transpose() * v;
}

Matrix KernelRidge::predict_all(const Matrix& points) const
{
    return build_kernel_matrix(x_train_, points, sigma_) * dual_;
}

double kernel_ridge(const Matrix& x_train, const Vector& targets, double ridge, double sigma, const Vector& x)
{
    return KernelRidge(x_train, targets, ridge, sigma).predict(x)[0];
}

} // namespace sosi
