#include "sosi/types.hpp"

namespace sosi {

Matrix pairwise_squared_distances(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            out(i, j) = squared_distance(a.row(i), b.row(j));
    return out;
}

} // namespace sosi
