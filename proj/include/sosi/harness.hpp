#pragma once

#include "sosi/baselines.hpp"
#include "sosi/dataset.hpp"
#include "sosi/embedding.hpp"
#include "sosi/sosi.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sosi {

enum class DataSource { Synthetic, Csv, Images };

struct DatasetSpec {
    DataSource source = DataSource::Synthetic;
    // synthetic: a fresh draw per seed
    int classes = 2;
    int per_class = 30;
    double noise = 0.05;
    CurveShape shape;
    // csv
    std::filesystem::path features;
    std::filesystem::path labels;
    bool header = false;
    // images
    std::filesystem::path root;
    int width = 32;
    int height = 32;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    EmbeddingMethod method = EmbeddingMethod::SupervisedLaplacian;
    int dim = 1;
    double mu = 0.01;
    int graph_knn = 7;
    double graph_sigma = 0.0;           // <= 0 -> median K-NN distance of the training set
    std::vector<Strategy> strategies;
    std::vector<double> ratios;         // labeled / total, each in (0, 1)
    std::vector<std::uint64_t> seeds;
    SosiConfig sosi;
    int lle_k = 5;
    double ridge = 1e-6;
    std::vector<double> sweep_grid;     // scale sweep; empty -> default grid of the training set
    bool timing = false;                // false -> wall_ms written as 0 for byte-stable reports
    int threads = 0;                    // 0 -> hardware concurrency
};

/// Reads the sectioned key = value format described in the README. The
/// scale rule defaults to the ratio threshold for the Fisher embedding and
/// to regularizer minimization otherwise.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Throws ConfigError on an unusable config.
void validate(const ExperimentConfig& cfg);

/// "lo:hi:count" -> log-spaced grid.
std::vector<double> parse_sigma_grid(const std::string& text);

/// "N:Q:R" -> equispaced schedule.
std::vector<int> parse_schedule(const std::string& text);

struct ReportRow {
    std::string experiment;
    std::string strategy;
    double x = 0.0;                      // ratio, L_r / N or sigma
    std::optional<std::uint64_t> seed;   // empty on mean rows
    std::optional<double> error_pct;     // empty on failed rows
    double wall_ms = 0.0;
    std::optional<double> regularizer;   // scale sweep only
    std::string message;                 // failure reason, not written to the report
};

/// Dataset for one seed and labeled ratio, with ground truth for every row.
Dataset prepare_split(const ExperimentConfig& cfg, double ratio, std::uint64_t seed);

/// Graph, kernel scale and embedding of the training part of `ds`.
struct TrainingModel {
    ClassGraphs graphs;
    Embedding embedding;
    double kernel_scale = 0.0;
};

TrainingModel train_embedding(const ExperimentConfig& cfg, const Dataset& ds);

/// Estimated labels of the unlabeled rows of `ds` for one strategy.
std::vector<ClassId> classify_unlabeled(const ExperimentConfig& cfg, Strategy strategy, const Dataset& ds,
                                        const TrainingModel& model);

/// Percentage of `predicted` (rows N..Q-1) that differ from the reference labels.
double error_percent(const Dataset& ds, std::span<const ClassId> predicted);

/// Raw rows per (strategy, ratio, seed) plus one mean row per (strategy, ratio).
std::vector<ReportRow> run_split_sweep(const ExperimentConfig& cfg);

/// Rows indexed by L_r / N for every strategy that has an embedding map.
std::vector<ReportRow> run_iterative_retraining(const ExperimentConfig& cfg);

/// One row per sigma of the sweep grid (common scale across dimensions),
/// carrying the misclassification rate and the regularizer value.
std::vector<ReportRow> run_scale_sweep(const ExperimentConfig& cfg);

/// Appends mean rows and sorts by (experiment, strategy, x, seed), mean last.
void finalize_rows(std::vector<ReportRow>& rows);

bool all_succeeded(const std::vector<ReportRow>& rows);

/// Header `experiment,strategy,x,seed,error_pct,wall_ms`.
void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

/// Header `experiment,x,seed,regularizer` for rows that carry a regularizer value.
void emit_regularizer_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

std::vector<ReportRow> parse_report(const std::filesystem::path& path);

} // namespace sosi
