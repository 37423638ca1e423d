#pragma once

// Independent reference computations used only by the tests.

#include "sosi/rbf.hpp"
#include "sosi/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using sosi::Matrix;
using sosi::Vector;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = u(rng);
    return m;
}

// Exhaustive K-NN: full sort of every row by (distance, index).
inline std::vector<std::vector<int>> brute_knn(const Matrix& x, int k)
{
    std::vector<std::vector<int>> out(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        std::vector<std::pair<double, int>> all;
        for (int j = 0; j < x.rows(); ++j) {
            if (j == i)
                continue;
            double s = 0.0;
            for (int c = 0; c < x.cols(); ++c)
                s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
            all.emplace_back(s, j);
        }
        std::sort(all.begin(), all.end());
        for (int r = 0; r < k; ++r)
            out[i].push_back(all[r].second);
    }
    return out;
}

// Dense generalized symmetric eigenproblem A z = lambda B z with B diagonal
// positive, solved through the Cholesky-based solver of Eigen.
struct GeneralizedEigen {
    Vector values;   // ascending
    Matrix vectors;  // B-orthonormal columns
};

inline GeneralizedEigen generalized_eigen(const Matrix& a, const Matrix& b)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(a, b);
    return {es.eigenvalues(), es.eigenvectors()};
}

// Largest principal angle between the column spans of u and v, in the B inner product.
inline double max_principal_angle(const Matrix& u, const Matrix& v, const Vector& b_diag)
{
    const Vector s = b_diag.cwiseSqrt();
    Matrix qu = (s.asDiagonal() * u).householderQr().householderQ() * Matrix::Identity(u.rows(), u.cols());
    Matrix qv = (s.asDiagonal() * v).householderQr().householderQ() * Matrix::Identity(v.rows(), v.cols());
    Eigen::JacobiSVD<Matrix> svd(qu.transpose() * qv);
    const double smin = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
    return std::acos(smin);
}

// Direct summation of a Gaussian RBF expansion.
inline double rbf_sum(const Matrix& centers, const Vector& coeffs, double sigma, const Vector& x)
{
    double total = 0.0;
    for (int l = 0; l < centers.rows(); ++l) {
        double s = 0.0;
        for (int c = 0; c < centers.cols(); ++c)
            s += (x[c] - centers(l, c)) * (x[c] - centers(l, c));
        total += coeffs[l] * std::exp(-s / (sigma * sigma));
    }
    return total;
}

// Central finite-difference gradient of f^k.
inline Vector fd_gradient(const sosi::RbfInterpolator& f, int k, const Vector& x, double h)
{
    Vector g(x.size());
    for (int c = 0; c < x.size(); ++c) {
        Vector xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        g[c] = (sosi::evaluate(f, xp)[k] - sosi::evaluate(f, xm)[k]) / (2.0 * h);
    }
    return g;
}

// Exhaustive search over the simplex grid with step 1/res, K = 3.
inline double simplex_grid_min(const Matrix& basis, const Vector& x, int res = 100)
{
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= res; ++i)
        for (int j = 0; i + j <= res; ++j) {
            Vector w(3);
            w << double(i) / res, double(j) / res, double(res - i - j) / res;
            best = std::min(best, (x - basis * w).squaredNorm());
        }
    return best;
}

// Equality-constrained least squares min |x - B v|^2 s.t. sum v = 1 through
// the full KKT system [2 G, 1; 1^T, 0].
inline Vector affine_weights_kkt(const Matrix& basis, const Vector& x, double reg_factor)
{
    const int k = static_cast<int>(basis.cols());
    Matrix diff = basis.colwise() - x;
    Matrix g = diff.transpose() * diff;
    g.diagonal().array() += reg_factor * g.trace();
    Matrix kkt = Matrix::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = 2.0 * g;
    kkt.topRightCorner(k, 1).setOnes();
    kkt.bottomLeftCorner(1, k).setOnes();
    Vector rhs = Vector::Zero(k + 1);
    rhs[k] = 1.0;
    return kkt.fullPivLu().solve(rhs).head(k);
}

// Harmonic solution by explicit dense inversion of the unlabeled block.
inline Matrix harmonic_dense(const Matrix& w, const Matrix& f_labeled)
{
    const int n = static_cast<int>(f_labeled.rows());
    const int u = static_cast<int>(w.rows()) - n;
    Matrix l = -w;
    for (int i = 0; i < w.rows(); ++i)
        l(i, i) += w.row(i).sum();
    const Matrix luu = l.bottomRightCorner(u, u);
    return luu.inverse() * (w.bottomLeftCorner(u, n) * f_labeled);
}

} // namespace oracle
