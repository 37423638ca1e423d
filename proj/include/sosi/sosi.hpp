#pragma once

#include "sosi/dataset.hpp"
#include "sosi/embedding.hpp"
#include "sosi/graph.hpp"
#include "sosi/rbf.hpp"

#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace sosi {

/// Estimated class and confidence for every sample. Training rows keep their
/// given label and an infinite score.
struct LabelState {
    std::vector<ClassId> labels;
    std::vector<double> scores;
};

// ---------------------------------------------------------------------------
// Manifold projection
// ---------------------------------------------------------------------------

/// Euclidean projection onto {w >= 0, sum w = 1} (sort-based).
Vector project_to_simplex(const Vector& v);

struct SimplexQpResult {
    Vector weights;
    double objective = 0.0;
    int iterations = 0;
};

/// min_w |x - B w|^2 over the probability simplex, B = columns of `basis`
/// (n x K). Projected gradient with step 1 / (2 lambda_max(B^T B)); stops
/// when the objective decreases by less than 1e-10 or after 10000 steps.
SimplexQpResult solve_simplex_qp(const Matrix& basis, const Vector& x);

struct ProjectionResult {
    std::vector<int> neighbors;  // training rows, nearest first
    Vector weights;
    Vector target;               // sum_i w_i y_{a_i}
    double objective = 0.0;
};

/// Projects x onto the class-m manifold through its K nearest class-m
/// training samples and carries the convex weights over to the embedding.
ProjectionResult project_onto_class(const Vector& x, ClassId m, const Matrix& x_train,
                                    std::span<const ClassId> train_labels, const Matrix& y_train, int k_proj);

// ---------------------------------------------------------------------------
// Nearest-neighbor classification with confidence
// ---------------------------------------------------------------------------

struct Classification {
    std::vector<ClassId> labels;
    std::vector<double> scores;  // distance to nearest other-class reference / distance to nearest reference
};

/// Nearest reference in embedding space decides the class; the score is the
/// ratio of the nearest other-class distance to the nearest distance (+inf
/// when the query coincides with a reference). Ties go to the lower index.
Classification nn_classify_confidence(const Matrix& reference_coords, std::span<const ClassId> reference_labels,
                                      const Matrix& query_coords);

/// Same, with references f(x_train) and queries f(x_query).
Classification nn_classify_confidence(const RbfInterpolator& f, const Matrix& x_train,
                                      std::span<const ClassId> train_labels, const Matrix& x_query);

// ---------------------------------------------------------------------------
// Progressive interpolation
// ---------------------------------------------------------------------------

struct SosiConfig {
    std::vector<int> schedule;       // L_1 = N < ... < L_R = Q; empty -> equispaced over `rounds`
    int rounds = 5;
    double lambda = 1.0;
    int k_proj = 5;
    double early_stop_fraction = 1.0;
    bool reoptimize_scales = false;  // false: keep iteration-1 scales while they still interpolate
    int knn = 7;                     // neighbors used by the regularizer
    ScaleMode scale_mode = ScaleMode::MinimizeRegularizer;
    double ratio_threshold = 0.5;
    std::vector<double> sigma_grid;  // empty -> default_sigma_grid
};

/// L_r = N + round((Q - N)(r - 1) / (R - 1)), duplicates removed.
std::vector<int> equispaced_schedule(int n, int q, int rounds);

/// Validates the schedule and applies the early-stop fraction: entries below
/// N + round(f (Q - N)) are kept and that count becomes the last entry.
std::vector<int> effective_schedule(const SosiConfig& cfg, int n, int q);

struct InitialFit {
    RbfInterpolator interpolator;
    ScaleSelection selection;
    NeighborTable nbrs;
    SeparablePairs pairs;
    std::vector<double> grid;
    FitReport fit;
};

/// First iteration: centers are the training samples, scales minimize the
/// regularizer (or follow the ratio rule). Shared with the RBF-fit baseline.
InitialFit fit_initial(const Matrix& x_train, const Matrix& y_train, std::span<const ClassId> labels,
                       int class_count, const SosiConfig& cfg);

struct IterationTrace {
    int iteration = 0;                 // 1-based
    int center_count = 0;              // L_r
    std::vector<int> center_rows;      // dataset rows used as centers, training first
    std::vector<std::pair<int, ProjectionResult>> admitted;  // rows added in this iteration
    Vector scales;
    bool rescaled = false;             // scales selected again at this iteration
    FitReport fit;
    LabelState state;
};

struct SosiResult {
    RbfInterpolator interpolator;
    LabelState state;
    std::vector<IterationTrace> trace;
    ScaleSelection initial_selection;
};

SosiResult run_sosi(const Dataset& ds, const Embedding& emb, const SosiConfig& cfg);

/// CSV: iteration,point,label,confidence (point = source row index).
void write_trace_csv(const SosiResult& result, const Dataset& ds, const std::filesystem::path& path);

} // namespace sosi
