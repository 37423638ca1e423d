#include "sosi/embedding.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace sosi {

std::string to_string(EmbeddingMethod m)
{
    return m == EmbeddingMethod::Fisher ? "fisher" : "sup-laplacian";
}

EmbeddingMethod parse_embedding_method(const std::string& s)
{
    if (s == "sup-laplacian" || s == "supervised-laplacian")
        return EmbeddingMethod::SupervisedLaplacian;
    if (s == "fisher")
        return EmbeddingMethod::Fisher;
    throw ArgumentError("unknown embedding method '" + s + "'");
}

namespace {

constexpr double kConstantCosine = 0.99;

double cosine_with_ones(const Vector& z)
{
    const double nz = z.norm();
    if (nz == 0.0)
        return 1.0;
    return std::abs(z.sum()) / (nz * std::sqrt(static_cast<double>(z.size())));
}

void check_graphs(const ClassGraphs& g, int d)
{
    const auto n = g.l_within.rows();
    if (n == 0 || g.l_between.rows() != n || g.d_within.size() != n)
        throw EmbeddingError("inconsistent graph sizes");
    if (d < 1 || d >= n)
        throw EmbeddingError("embedding dimension must satisfy 1 <= d < N (d=" + std::to_string(d) +
                             ", N=" + std::to_string(n) + ")");
}

} // namespace

Embedding supervised_laplacian(const ClassGraphs& graphs, double mu, int d)
{
    check_graphs(graphs, d);
    if (!(mu >= 0.0))
        throw EmbeddingError("mu must be non-negative");

    // Isolated within-class nodes get a tiny degree so D_w stays invertible.
    Vector degree = graphs.d_within;
    const double max_degree = degree.maxCoeff();
    const double floor = max_degree > 0.0 ? 1e-8 * max_degree : 1e-8;
    for (Eigen::Index i = 0; i < degree.size(); ++i)
        if (degree[i] <= 0.0)
            degree[i] = floor;

    const Vector inv_sqrt = degree.cwiseSqrt().cwiseInverse();
    const Matrix a = graphs.l_within - mu * graphs.l_between;
    Matrix s = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
    s = 0.5 * (s + s.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success)
        throw EmbeddingError("symmetric eigensolve failed");

    Embedding emb;
    emb.method = EmbeddingMethod::SupervisedLaplacian;
    emb.mu = mu;
    emb.coords.resize(s.rows(), d);
    int taken = 0;
    for (Eigen::Index j = 0; j < s.cols() && taken < d; ++j) {
        Vector z = inv_sqrt.asDiagonal() * es.eigenvectors().col(j);
        if (cosine_with_ones(z) > kConstantCosine)
            continue;
        z /= std::sqrt(z.dot(degree.asDiagonal() * z));
        emb.coords.col(taken++) = z;
        emb.eigenvalues.push_back(es.eigenvalues()[j]);
    }
    if (taken < d)
        throw EmbeddingError("only " + std::to_string(taken) + " admissible eigenvectors, " +
                             std::to_string(d) + " requested");
    return emb;
}

Embedding fisher_nonlinear(const ClassGraphs& graphs, int d)
{
    check_graphs(graphs, d);
    const auto n = graphs.l_within.rows();
    const double trace = graphs.l_within.trace();
    const double eps = trace > 0.0 ? 1e-8 * trace / static_cast<double>(n) : 1e-8;
    Matrix b = graphs.l_within;
    b.diagonal().array() += eps;

    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(graphs.l_between, b, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success)
        throw EmbeddingError("generalized eigensolve failed");

    const Vector& lambda = es.eigenvalues();
    const double top = lambda.cwiseAbs().maxCoeff();
    // Eigenvalues are (numerically) zero only when no between-class edge carries weight.
    const double admissible = std::max(top, 1.0) * 1e-12;
    if (!(lambda[n - 1] > admissible))
        throw EmbeddingError("no separating directions: between-class graph is empty");

    Embedding emb;
    emb.method = EmbeddingMethod::Fisher;
    emb.coords.resize(n, d);
    int taken = 0;
    for (Eigen::Index j = n - 1; j >= 0 && taken < d; --j) {
        if (!(lambda[j] > admissible))
            break;
        Vector z = es.eigenvectors().col(j);
        z.normalize();
        emb.coords.col(taken++) = z;
        emb.eigenvalues.push_back(lambda[j]);
    }
    if (taken < d)
        throw EmbeddingError("only " + std::to_string(taken) + " separating directions, " +
                             std::to_string(d) + " requested");
    return emb;
}

Embedding compute_embedding(const ClassGraphs& graphs, EmbeddingMethod method, double mu, int d)
{
    return method == EmbeddingMethod::Fisher ? fisher_nonlinear(graphs, d) : supervised_laplacian(graphs, mu, d);
}

SeparablePairs separable_pairs(const Matrix& coords, std::span<const ClassId> labels, int class_count)
{
    if (static_cast<Eigen::Index>(labels.size()) != coords.rows())
        throw ArgumentError("separable_pairs needs one label per embedded sample");
    SeparablePairs out;
    out.per_dim.resize(coords.cols());
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < coords.cols(); ++k) {
        std::vector<double> lo(class_count + 1, inf), hi(class_count + 1, -inf);
        for (Eigen::Index i = 0; i < coords.rows(); ++i) {
            const ClassId c = labels[i];
            lo[c] = std::min(lo[c], coords(i, k));
            hi[c] = std::max(hi[c], coords(i, k));
        }
        for (ClassId m = 1; m <= class_count; ++m)
            for (ClassId p = m + 1; p <= class_count; ++p) {
                if (lo[m] == inf || lo[p] == inf)
                    continue;
                if (hi[m] < lo[p] || hi[p] < lo[m])
                    out.per_dim[k].emplace_back(m, p);
            }
    }
    return out;
}

void write_embedding(const Embedding& emb, const std::filesystem::path& csv_path)
{
    std::ofstream out(csv_path);
    if (!out)
        throw Error("cannot write " + csv_path.string());
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < emb.coords.rows(); ++i) {
        for (Eigen::Index k = 0; k < emb.coords.cols(); ++k)
            out << (k ? "," : "") << emb.coords(i, k);
        out << '\n';
    }

    nlohmann::json meta;
    meta["method"] = to_string(emb.method);
    meta["mu"] = emb.mu;
    meta["dim"] = emb.dim();
    meta["samples"] = emb.size();
    meta["eigenvalues"] = emb.eigenvalues;
    std::ofstream side(csv_path.string() + ".json");
    if (!side)
        throw Error("cannot write " + csv_path.string() + ".json");
    side << meta.dump(2) << '\n';
}

} // namespace sosi
