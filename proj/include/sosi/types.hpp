#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sosi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Class ids are 1-based (1..M), as in the input files.
using ClassId = int;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SOSI_DECLARE_ERROR(Name)                  \
    class Name : public Error {                   \
    public:                                       \
        using Error::Error;                       \
    }

SOSI_DECLARE_ERROR(ArgumentError);
SOSI_DECLARE_ERROR(IngestError);     // unreadable input file
SOSI_DECLARE_ERROR(StructuralError); // input tree or matrix has the wrong shape
SOSI_DECLARE_ERROR(ParseError);
SOSI_DECLARE_ERROR(SplitError);
SOSI_DECLARE_ERROR(EmbeddingError);
SOSI_DECLARE_ERROR(FitError);
SOSI_DECLARE_ERROR(RegularizerError);
SOSI_DECLARE_ERROR(ScaleSelectionError);
SOSI_DECLARE_ERROR(ExtensionError);
SOSI_DECLARE_ERROR(SslError);
SOSI_DECLARE_ERROR(ConfigError);

#undef SOSI_DECLARE_ERROR

template <typename A, typename B>
double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b)
{
    return (a - b).squaredNorm();
}

/// Pairwise squared Euclidean distances between the rows of `a` and the rows of `b`.
/// Entries are computed from explicit differences so equal distances compare equal.
Matrix pairwise_squared_distances(const Matrix& a, const Matrix& b);

} // namespace sosi
