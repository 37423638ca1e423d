#include "sosi/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sosi {

void NeighborTable::assign_classes(std::span<const ClassId> labels, int class_count)
{
    if (static_cast<int>(labels.size()) != size())
        throw ArgumentError("label count does not match neighbor table size");
    by_class.assign(index.size(), std::vector<std::vector<int>>(class_count));
    for (std::size_t i = 0; i < index.size(); ++i)
        for (int j : index[i]) {
            const ClassId c = labels[j];
            if (c < 1 || c > class_count)
                throw ArgumentError("class id out of range in neighbor table");
            by_class[i][c - 1].push_back(j);
        }
}

NeighborTable knn_neighbors(const Matrix& x, int k)
{
    const auto q = static_cast<int>(x.rows());
    if (k < 1 || k >= q)
        throw ArgumentError("K must satisfy 1 <= K < number of samples (K=" + std::to_string(k) +
                            ", samples=" + std::to_string(q) + ")");

    NeighborTable table;
    table.k = k;
    table.index.resize(q);
    table.distance.resize(q);
    std::vector<std::pair<double, int>> cand(q - 1);
    for (int i = 0; i < q; ++i) {
        int c = 0;
        for (int j = 0; j < q; ++j)
            if (j != i)
                cand[c++] = {squared_distance(x.row(i), x.row(j)), j};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        table.index[i].resize(k);
        table.distance[i].resize(k);
        for (int r = 0; r < k; ++r) {
            table.index[i][r] = cand[r].second;
            table.distance[i][r] = std::sqrt(cand[r].first);
        }
    }
    return table;
}

double median_knn_distance(const NeighborTable& nbrs)
{
    std::vector<double> all;
    for (const auto& row : nbrs.distance)
        all.insert(all.end(), row.begin(), row.end());
    if (all.empty())
        throw ArgumentError("empty neighbor table");
    const auto mid = all.size() / 2;
    std::nth_element(all.begin(), all.begin() + mid, all.end());
    double m = all[mid];
    if (all.size() % 2 == 0) {
        const double lo = *std::max_element(all.begin(), all.begin() + mid);
        m = 0.5 * (m + lo);
    }
    return m;
}

LaplacianResult laplacian(const Matrix& w)
{
    if (w.rows() != w.cols())
        throw ArgumentError("weight matrix must be square");
    if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw ArgumentError("weight matrix is not symmetric");
    LaplacianResult out;
    out.degree = w.rowwise().sum();
    out.laplacian = -w;
    out.laplacian.diagonal() += out.degree;
    return out;
}

namespace {

// Gaussian kernel on every symmetrized K-NN edge; calls sink(i, j, weight) once per i < j.
template <typename Sink>
void for_each_edge(const Matrix& x, const NeighborTable& nbrs, double kernel_scale, Sink&& sink)
{
    if (!(kernel_scale > 0.0))
        throw ArgumentError("graph kernel scale must be positive");
    const int q = static_cast<int>(x.rows());
    if (nbrs.size() != q)
        throw ArgumentError("neighbor table does not match sample count");
    std::vector<std::vector<char>> edge(q, std::vector<char>(q, 0));
    for (int i = 0; i < q; ++i)
        for (int j : nbrs.index[i])
            edge[std::min(i, j)][std::max(i, j)] = 1;
    const double s2 = kernel_scale * kernel_scale;
    for (int i = 0; i < q; ++i)
        for (int j = i + 1; j < q; ++j)
            if (edge[i][j])
                sink(i, j, std::exp(-squared_distance(x.row(i), x.row(j)) / s2));
}

} // namespace

ClassGraphs class_weights(const Matrix& x, std::span<const ClassId> labels, const NeighborTable& nbrs,
                          double kernel_scale)
{
    const auto q = x.rows();
    if (static_cast<Eigen::Index>(labels.size()) != q)
        throw ArgumentError("class_weights needs one label per sample");
    ClassGraphs g;
    g.kernel_scale = kernel_scale;
    g.w_within = Matrix::Zero(q, q);
    g.w_between = Matrix::Zero(q, q);
    for_each_edge(x, nbrs, kernel_scale, [&](int i, int j, double w) {
        Matrix& target = labels[i] == labels[j] ? g.w_within : g.w_between;
        target(i, j) = std::max(target(i, j), w);
        target(j, i) = target(i, j);
    });
    auto lw = laplacian(g.w_within);
    auto lb = laplacian(g.w_between);
    g.l_within = std::move(lw.laplacian);
    g.d_within = std::move(lw.degree);
    g.l_between = std::move(lb.laplacian);
    g.d_between = std::move(lb.degree);
    return g;
}

Matrix knn_weight_matrix(const Matrix& x, const NeighborTable& nbrs, double kernel_scale)
{
    Matrix w = Matrix::Zero(x.rows(), x.rows());
    for_each_edge(x, nbrs, kernel_scale, [&](int i, int j, double v) {
        w(i, j) = v;
        w(j, i) = v;
    });
    return w;
}

} // namespace sosi
