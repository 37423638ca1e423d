#pragma once

#include "sosi/rbf.hpp"
#include "sosi/sosi.hpp"
#include "sosi/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace sosi {

enum class Strategy { Sosi, RbfFit, Lle, Nystrom, NnAmbient, SslGaussianFields, KernelRidge };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

/// True for strategies that classify through an out-of-sample map of the embedding.
bool uses_embedding(Strategy s);

/// RBF interpolator fitted to the training samples only: the first iteration
/// of the progressive algorithm.
RbfInterpolator extend_rbf_fit(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                               int class_count, const SosiConfig& cfg);

struct LleExtension {
    std::vector<int> neighbors;
    Vector weights;  // sum to one, may be negative
    Vector coords;
};

/// Affine reconstruction of x from its K nearest training samples
/// (Gram regularized by 1e-9 trace), applied to their embedding coordinates.
LleExtension extend_lle(const Matrix& x_train, const Matrix& y_train, const Vector& x, int k);

/// Kernel-normalized combination of all training embedding rows.
Vector extend_nystrom(const Matrix& x_train, const Matrix& y_train, const Vector& x, double sigma);

/// Label of the Euclidean-nearest training sample (ties: lower index).
ClassId classify_nn_ambient(const Matrix& x_train, std::span<const ClassId> labels, const Vector& x);

struct SslResult {
    Matrix scores;                 // (Q - N) x M harmonic class functions
    std::vector<ClassId> labels;   // for rows N..Q-1
};

/// Harmonic label propagation on the Gaussian K-NN graph over all samples;
/// the first `labels.size()` rows of `x_all` are the labeled ones.
SslResult ssl_gaussian_fields(const Matrix& x_all, std::span<const ClassId> labels, int class_count, int k,
                              double sigma);

/// Dual kernel ridge regression with a Gaussian kernel of scale `sigma`:
/// f^k(x) = (y^k)^T (K + a I)^-1 v(x).
class KernelRidge {
public:
    KernelRidge(const Matrix& x_train, const Matrix& targets, double ridge, double sigma);

    Vector predict(const Vector& x) const;
    Matrix predict_all(const Matrix& points) const;

private:
    Matrix x_train_;
    Matrix dual_;  // (K + aI)^-1 Y
    double sigma_;
};

double kernel_ridge(const Matrix& x_train, const Vector& targets, double ridge, double sigma, const Vector& x);

} // namespace sosi
