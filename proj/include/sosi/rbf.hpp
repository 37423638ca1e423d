#pragma once

#include "sosi/embedding.hpp"
#include "sosi/graph.hpp"
#include "sosi/types.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace sosi {

/// Gaussian RBF map R^n -> R^d:
///   f^k(x) = sum_l coeffs(l, k) * exp(-|x - centers_l|^2 / scales[k]^2).
/// Centers are shared by all output dimensions; each dimension has one scale.
struct RbfInterpolator {
    Matrix centers;  // L x n
    Vector scales;   // d
    Matrix coeffs;   // L x d

    int size() const { return static_cast<int>(centers.rows()); }
    int input_dim() const { return static_cast<int>(centers.cols()); }
    int output_dim() const { return static_cast<int>(scales.size()); }
};

/// Largest admissible |f(center_l) - target_l|_inf / (1 + |targets|_inf).
inline constexpr double kInterpolationTolerance = 1e-8;

/// Entry (i, l) = exp(-|eval_i - center_l|^2 / sigma^2).
Matrix build_kernel_matrix(const Matrix& centers, const Matrix& eval_points, double sigma);

/// Same as build_kernel_matrix, from precomputed squared distances.
Matrix kernel_from_squared_distances(const Matrix& sq_dist, double sigma);

struct CoefficientFit {
    Matrix coeffs;
    double jitter = 0.0;    // ridge added to the diagonal, 0 when none was needed
    double rcond = 0.0;     // reciprocal 1-norm condition estimate of the unjittered matrix
    double residual = 0.0;  // max_k |Phi c^k - y^k|_inf / (1 + |y^k|_inf), against the unjittered matrix
};

/// Solves phi * c^k = y^k for every target column with a partial-pivot LU and
/// two steps of iterative refinement. When the condition estimate exceeds
/// 1e12, retries once with 1e-10 * trace(phi) / L added to the diagonal.
CoefficientFit fit_coefficients(const Matrix& phi, const Matrix& targets);

struct FitReport {
    std::vector<double> jitter;   // per output dimension
    std::vector<double> rcond;
    double max_residual = 0.0;
};

/// Fits an interpolator with the given per-dimension scales so that
/// f(centers_l) = targets_l.
RbfInterpolator fit_interpolator(const Matrix& centers, const Matrix& targets, const Vector& scales,
                                 FitReport* report = nullptr);

Vector evaluate(const RbfInterpolator& f, const Vector& x);

/// Row i of the result is f(points_i).
Matrix evaluate_all(const RbfInterpolator& f, const Matrix& points);

/// Gradient of f^k at x.
Vector gradient_k(const RbfInterpolator& f, int k, const Vector& x);

// ---------------------------------------------------------------------------
// Direction-aware regularizer
// ---------------------------------------------------------------------------

/// Normalized gradient magnitude G and normalized cross-class directional
/// derivative D of one output dimension, with bookkeeping of skipped terms.
struct DimensionTerms {
    double g = 0.0;
    double d = 0.0;
    int skipped_points = 0;      // mean neighbor derivative below 1e-12
    int skipped_empty_class = 0; // (point, other class) terms without such neighbors
    int used_points = 0;
};

struct RegularizerReport {
    std::vector<DimensionTerms> terms;  // per dimension
    double lambda = 1.0;
    double value = 0.0;                 // sum_k (G_k - lambda D_k)

    std::vector<double> g() const;
    std::vector<double> d() const;
};

/// Precomputed geometry of the regularization sample set: unit directions
/// towards every neighbor and the per-class neighbor sub-lists.
class RegularizerGeometry {
public:
    RegularizerGeometry(const Matrix& points, std::span<const ClassId> labels, int class_count,
                        const NeighborTable& nbrs);

    const Matrix& points() const { return points_; }
    int class_count() const { return class_count_; }

    /// G and D for one dimension, given that dimension's gradients at every point (rows).
    DimensionTerms terms(const Matrix& gradients, std::span<const std::pair<ClassId, ClassId>> pairs) const;

private:
    Matrix points_;
    std::vector<ClassId> labels_;
    int class_count_;
    std::vector<Matrix> directions_;                  // [i] -> rows are unit neighbor directions
    std::vector<std::vector<std::vector<int>>> by_class_rank_; // [i][p-1] -> ranks into directions_[i]
};

/// Gradients of f^k at every row of `points` (rows of the result).
Matrix gradients_at(const RbfInterpolator& f, int k, const Matrix& points);

/// Throws RegularizerError when every point of some dimension is skipped.
RegularizerReport regularization_terms(const RbfInterpolator& f, const Matrix& x_train,
                                       std::span<const ClassId> labels, int class_count,
                                       const NeighborTable& nbrs, const SeparablePairs& pairs, double lambda);

// ---------------------------------------------------------------------------
// Scale selection
// ---------------------------------------------------------------------------

enum class ScaleMode {
    MinimizeRegularizer,  // argmin over the grid of G - lambda D
    RatioThreshold,       // largest grid value with D / G >= threshold
};

struct ScaleSearchOptions {
    double lambda = 1.0;
    ScaleMode mode = ScaleMode::MinimizeRegularizer;
    double ratio_threshold = 0.5;
    std::vector<double> grid;  // ascending, positive
    bool clamp = true;
};

struct ScaleSelection {
    Vector scales;                              // final (clamped) values
    Vector unclamped;
    std::vector<int> chosen_index;              // grid index per dimension
    std::vector<std::vector<double>> objective; // [k][grid]; NaN where inadmissible
    std::vector<std::vector<double>> g_hat;
    std::vector<std::vector<double>> d_hat;
    std::vector<std::vector<double>> residual;  // relative interpolation residual per candidate
};

/// `count` log-spaced values from 0.5 x the median K-NN distance to 5 x the
/// largest pairwise distance of `x`.
std::vector<double> default_sigma_grid(const Matrix& x, const NeighborTable& nbrs, int count = 20);

/// `count` log-spaced values in [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

/// Clamps every value into mean +- 2 population standard deviations.
Vector clamp_scales(const Vector& scales);

/// Chooses one scale per output dimension. Coefficients are refit on
/// (centers, targets) for every candidate; the regularizer is evaluated on
/// the geometry's sample set. Candidates whose fit misses a target by more
/// than 1e-8 (1 + |y^k|_inf) are inadmissible.
ScaleSelection optimize_scales(const Matrix& centers, const Matrix& targets, const RegularizerGeometry& geometry,
                               const SeparablePairs& pairs, const ScaleSearchOptions& options);

/// Iteration-one form: centers and regularization samples are the training set.
ScaleSelection optimize_scales(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                               int class_count, const NeighborTable& nbrs, const SeparablePairs& pairs,
                               const ScaleSearchOptions& options);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Binary layout, little-endian: 8-byte magic "SOSIRBF1", uint64 L, n, d,
/// d scales, L x n centers, L x d coefficients (float64, row-major).
void save_interpolator(const RbfInterpolator& f, const std::filesystem::path& path);
RbfInterpolator load_interpolator(const std::filesystem::path& path);

} // namespace sosi
