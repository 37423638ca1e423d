#pragma once

#include "sosi/types.hpp"

#include <span>
#include <vector>

namespace sosi {

/// Exact K-nearest-neighbor lists under Euclidean distance.
///
/// Lists are sorted by ascending distance with ties going to the lower index;
/// a sample is never its own neighbor. After `assign_classes` the table also
/// holds, for every sample and class p, the neighbors belonging to class p.
struct NeighborTable {
    int k = 0;
    std::vector<std::vector<int>> index;       // [i][rank]
    std::vector<std::vector<double>> distance; // [i][rank]
    std::vector<std::vector<std::vector<int>>> by_class; // [i][p - 1] -> neighbor indices

    int size() const { return static_cast<int>(index.size()); }

    /// Fills `by_class`. `labels[i]` is the class of sample i (1..class_count).
    void assign_classes(std::span<const ClassId> labels, int class_count);
};

NeighborTable knn_neighbors(const Matrix& x, int k);

/// Median over all samples of their K-NN distances.
double median_knn_distance(const NeighborTable& nbrs);

struct LaplacianResult {
    Matrix laplacian;
    Vector degree;
};

/// L = D - W with D_ii = sum_j W_ij. Rejects W that is not symmetric within 1e-10.
LaplacianResult laplacian(const Matrix& w);

struct ClassGraphs {
    Matrix w_within;
    Matrix w_between;
    Matrix l_within;
    Matrix l_between;
    Vector d_within;
    Vector d_between;
    double kernel_scale = 0.0;
};

/// Gaussian weights exp(-|xi - xj|^2 / sigma^2) on the symmetrized K-NN edges,
/// routed to the within-class graph when the labels agree and to the
/// between-class graph otherwise.
ClassGraphs class_weights(const Matrix& x, std::span<const ClassId> labels, const NeighborTable& nbrs,
                          double kernel_scale);

/// Label-free Gaussian K-NN graph (symmetrized by max).
Matrix knn_weight_matrix(const Matrix& x, const NeighborTable& nbrs, double kernel_scale);

} // namespace sosi
