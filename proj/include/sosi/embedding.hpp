#pragma once

#include "sosi/graph.hpp"
#include "sosi/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sosi {

enum class EmbeddingMethod { SupervisedLaplacian, Fisher };

std::string to_string(EmbeddingMethod m);
EmbeddingMethod parse_embedding_method(const std::string& s);

/// Training-sample coordinates from a supervised spectral method.
struct Embedding {
    Matrix coords;                  // N x d
    EmbeddingMethod method = EmbeddingMethod::SupervisedLaplacian;
    double mu = 0.0;                // supervision weight, supervised Laplacian only
    std::vector<double> eigenvalues;

    int dim() const { return static_cast<int>(coords.cols()); }
    int size() const { return static_cast<int>(coords.rows()); }
};

/// Solves (L_w - mu L_b) z = lambda D_w z through the symmetric reduction
/// D_w^-1/2 (L_w - mu L_b) D_w^-1/2. Near-constant eigenvectors (cosine with
/// the all-ones vector above 0.99) are discarded; the d smallest remaining
/// ones are returned with z^T D_w z = 1.
Embedding supervised_laplacian(const ClassGraphs& graphs, double mu, int d);

/// Nonlinear Fisher-like embedding: L_b z = lambda (L_w + eps I) z with
/// eps = 1e-8 trace(L_w) / N; returns the d largest, unit-norm, in
/// non-increasing eigenvalue order.
Embedding fisher_nonlinear(const ClassGraphs& graphs, int d);

Embedding compute_embedding(const ClassGraphs& graphs, EmbeddingMethod method, double mu, int d);

/// I^k for every dimension: class pairs (m, p), m < p, whose training
/// coordinate ranges at dimension k are strictly disjoint.
struct SeparablePairs {
    std::vector<std::vector<std::pair<ClassId, ClassId>>> per_dim;

    int dim() const { return static_cast<int>(per_dim.size()); }
};

SeparablePairs separable_pairs(const Matrix& coords, std::span<const ClassId> labels, int class_count);

/// Writes N rows x d columns, plus `<path>.json` with method, mu and eigenvalues.
void write_embedding(const Embedding& emb, const std::filesystem::path& csv_path);

} // namespace sosi
