#pragma once

#include "sosi/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace sosi {

/// Q samples in R^n, of which the first N carry a class label.
///
/// Rows are always ordered labeled-first. `reference_labels` holds the full
/// ground truth when the source provides it (synthetic data, fully labeled
/// files, image trees); it is used only to score predictions and is never
/// read by the learning code.
struct Dataset {
    Matrix samples;                              // Q x n
    std::vector<std::optional<ClassId>> labels;  // size Q, present for rows [0, N)
    int labeled_count = 0;                       // N
    int class_count = 0;                         // M
    std::vector<std::size_t> original_index;     // row -> row in the source
    std::vector<ClassId> reference_labels;       // size Q or empty

    int size() const { return static_cast<int>(samples.rows()); }
    int dim() const { return static_cast<int>(samples.cols()); }
    int unlabeled_count() const { return size() - labeled_count; }
    bool has_reference() const { return static_cast<int>(reference_labels.size()) == size(); }

    Matrix training_samples() const { return samples.topRows(labeled_count); }
    std::vector<ClassId> training_labels() const;
};

/// Checks every Dataset invariant; throws StructuralError on violation.
void validate(const Dataset& ds);

/// Loads `root/<class>/<image>` trees. Classes are numbered by sorted directory name.
/// Every image becomes a grayscale, bilinearly resized, [0,1]-normalized row.
Dataset load_image_dirs(const std::filesystem::path& root, int width, int height);

struct CsvOptions {
    bool header = false;  // skip the first line of both files
};

/// Features: Q rows of n comma-separated numbers. Labels: one line per row,
/// empty for unlabeled. Rows are reordered labeled-first.
Dataset load_matrix_csv(const std::filesystem::path& features,
                        const std::filesystem::path& labels,
                        const CsvOptions& options = {});

/// Geometry of the synthetic benchmark: class m lies on
/// y = amplitude * sin(x) + (m - 1) * offset, x in [0, span].
struct CurveShape {
    double amplitude = 1.0;
    double offset = 2.0;
    double span = 6.283185307179586;
};

/// M vertically offset sinusoids in R^2, `per_class` points each, sampled at
/// uniform random parameters with isotropic Gaussian noise. Fully labeled.
Dataset synthetic_curves(int classes, int per_class, double noise, std::uint64_t seed,
                         const CurveShape& shape = {});

/// Stratified labeled subset: round(ratio * class size) rows per class (at least one).
/// Requires reference labels for every row.
Dataset split_labels(const Dataset& ds, double labeled_ratio, std::uint64_t seed);

} // namespace sosi
