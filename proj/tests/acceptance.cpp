// One PASS/FAIL line per acceptance criterion. Usage: acceptance [criterion...]

#include "sosi/baselines.hpp"
#include "sosi/embedding.hpp"
#include "sosi/harness.hpp"
#include "sosi/rbf.hpp"
#include "sosi/sosi.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

using namespace sosi;

namespace {

// Tolerances and thresholds.
constexpr double kExactness = 1e-8;
constexpr double kRidgeAgreement = 1e-8;
constexpr double kGradientRelative = 1e-5;
constexpr double kQpGap = 1e-3;
constexpr double kRayleigh = 1e-6;
constexpr double kPrincipalAngle = 1e-4;
constexpr double kDegenerateGap = 1e-6;
constexpr double kBenchmarkError = 5.0;
constexpr double kBenchmarkSeconds = 60.0;
constexpr double kExactnessSeconds = 5.0;
constexpr double kSweepFactor = 2.0;
constexpr int kSweepPassing = 8;
constexpr double kDoublingFactor = 6.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof(buf), format, a, b, c);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExperimentConfig shipped_benchmark()
{
    return load_experiment_config(SOSI_CONFIG_DIR "/synthetic_benchmark.ini");
}

// Median nearest-neighbor distance of the rows of x.
double median_spacing(const Matrix& x)
{
    return median_knn_distance(knn_neighbors(x, 1));
}

Outcome interpolation_exactness()
{
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> pick_n(2, 60), pick_dim(1, 10), pick_d(1, 5);
    std::uniform_real_distribution<double> spread(0.5, 2.0);
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int config = 0; config < 20; ++config) {
        const int n = pick_n(rng), dim = pick_dim(rng), d = pick_d(rng);
        const Matrix centers = oracle::random_matrix(n, dim, rng);
        const Matrix targets = oracle::random_matrix(n, d, rng, -10.0, 10.0);
        const double h = median_spacing(centers);
        Vector scales(d);
        for (int k = 0; k < d; ++k)
            scales[k] = h * spread(rng);
        const RbfInterpolator f = fit_interpolator(centers, targets, scales);
        const double dev = (evaluate_all(f, centers) - targets).cwiseAbs().maxCoeff();
        worst = std::max(worst, dev / (1.0 + targets.cwiseAbs().maxCoeff()));
    }
    const double secs = seconds_since(start);
    return {worst <= kExactness && secs < kExactnessSeconds,
            fmt("max relative deviation %.3g, %.3f s", worst, secs)};
}

Outcome kernel_ridge_oracle()
{
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int config = 0; config < 10; ++config) {
        const int n = 10 + 5 * config;
        const Matrix x = oracle::random_matrix(n, 3, rng);
        const Matrix y = oracle::random_matrix(n, 2, rng);
        const double sigma = median_spacing(x);
        const RbfInterpolator f = fit_interpolator(x, y, Vector::Constant(2, sigma));
        for (int probe = 0; probe < 100; ++probe) {
            const Vector q = oracle::random_matrix(3, 1, rng);
            const Vector fx = evaluate(f, q);
            for (int k = 0; k < 2; ++k)
                worst = std::max(worst, std::abs(kernel_ridge(x, y.col(k), 0.0, sigma, q) - fx[k]));
        }
    }
    return {worst <= kRidgeAgreement, fmt("max |kridge(a=0) - rbf| %.3g", worst)};
}

Outcome gradient_check()
{
    std::mt19937_64 rng(303);
    double worst = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
        RbfInterpolator f;
        f.centers = oracle::random_matrix(12, 4, rng);
        f.coeffs = oracle::random_matrix(12, 2, rng);
        f.scales = oracle::random_matrix(2, 1, rng, 0.5, 1.5);
        const Vector x = oracle::random_matrix(4, 1, rng);
        for (int k = 0; k < 2; ++k) {
            const Vector g = gradient_k(f, k, x);
            const Vector fd = oracle::fd_gradient(f, k, x, 1e-5 * f.scales[k]);
            worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
        }
    }
    return {worst <= kGradientRelative, fmt("max relative gradient error %.3g", worst)};
}

Outcome qp_oracle()
{
    std::mt19937_64 rng(404);
    double worst = 0.0;
    for (int instance = 0; instance < 50; ++instance) {
        const Matrix basis = oracle::random_matrix(5, 3, rng);
        const Vector x = oracle::random_matrix(5, 1, rng);
        const SimplexQpResult r = solve_simplex_qp(basis, x);
        worst = std::max(worst, std::abs(r.objective - oracle::simplex_grid_min(basis, x)));
    }
    return {worst <= kQpGap, fmt("max objective gap %.3g", worst)};
}

Outcome eigensolve_oracle()
{
    std::mt19937_64 rng(505);
    std::normal_distribution<double> noise(0.0, 0.5);
    double worst_residual = 0.0, worst_angle = 0.0;
    int graphs = 0, compared = 0;
    for (int attempt = 0; graphs < 20 && attempt < 200; ++attempt) {
        const int n = 8 + attempt % 13;
        Matrix x(n, 2);
        std::vector<ClassId> labels;
        for (int i = 0; i < n; ++i) {
            labels.push_back(i % 2 + 1);
            x(i, 0) = (i % 2 ? 1.0 : -1.0) + noise(rng);
            x(i, 1) = noise(rng);
        }
        const NeighborTable t = knn_neighbors(x, 4);
        const ClassGraphs g = class_weights(x, labels, t, median_knn_distance(t));
        if (g.d_within.minCoeff() <= 0.0)
            continue;
        ++graphs;
        const double mu = 0.01 * (1 + attempt % 5);
        const int d = 3;
        const Embedding e = supervised_laplacian(g, mu, d);
        const Matrix a = g.l_within - mu * g.l_between;
        for (int k = 0; k < d; ++k) {
            const Vector z = e.coords.col(k);
            const Vector r = a * z - e.eigenvalues[k] * g.d_within.asDiagonal() * z;
            worst_residual = std::max(worst_residual, r.norm() / z.norm());
        }

        const auto full = oracle::generalized_eigen(a, Matrix(g.d_within.asDiagonal()));
        std::vector<int> admissible;
        for (int j = 0; j < full.values.size(); ++j) {
            const Vector v = full.vectors.col(j);
            if (std::abs(v.sum()) / (v.norm() * std::sqrt(double(n))) <= 0.99)
                admissible.push_back(j);
        }
        // clusters of equal eigenvalues among the admissible ones; a cluster cut by d is degenerate
        int start = 0;
        while (start < d) {
            int end = start + 1;
            while (end < static_cast<int>(admissible.size()) &&
                   full.values[admissible[end]] - full.values[admissible[end - 1]] <= kDegenerateGap)
                ++end;
            if (end <= d) {
                Matrix ours(n, end - start), ref(n, end - start);
                for (int c = start; c < end; ++c) {
                    ours.col(c - start) = e.coords.col(c);
                    ref.col(c - start) = full.vectors.col(admissible[c]);
                }
                worst_angle = std::max(worst_angle, oracle::max_principal_angle(ours, ref, g.d_within));
                ++compared;
            }
            start = end;
        }
    }
    const bool pass = graphs == 20 && worst_residual <= kRayleigh && worst_angle <= kPrincipalAngle;
    return {pass, fmt("%g graphs, max Rayleigh residual %.3g, max principal angle %.3g", graphs, worst_residual,
                      worst_angle) +
                      " over " + std::to_string(compared) + " eigenspaces"};
}

Outcome gaussian_fields_oracle()
{
    std::mt19937_64 rng(606);
    int mismatches = 0, nodes = 0;
    for (int graph = 0; graph < 20; ++graph) {
        const int q = 6 + graph % 7;
        const int n = 3;
        const Matrix x = oracle::random_matrix(q, 2, rng);
        const std::vector<ClassId> labels = {1, 2, 3};
        const int k = 3;
        const double sigma = 0.6;
        const SslResult r = ssl_gaussian_fields(x, labels, 3, k, sigma);

        const auto nbrs = oracle::brute_knn(x, k);
        Matrix w = Matrix::Zero(q, q);
        for (int i = 0; i < q; ++i)
            for (int j : nbrs[i])
                w(i, j) = w(j, i) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / (sigma * sigma));
        const Matrix ref = oracle::harmonic_dense(w, Matrix::Identity(n, 3));
        for (int i = 0; i < q - n; ++i) {
            Eigen::Index best = 0;
            ref.row(i).maxCoeff(&best);
            mismatches += r.labels[i] != static_cast<ClassId>(best + 1);
            ++nodes;
        }
    }
    return {mismatches == 0, fmt("%g of %g unlabeled nodes differ", mismatches, nodes)};
}

Outcome benchmark_ordering()
{
    ExperimentConfig cfg = shipped_benchmark();
    cfg.strategies = {Strategy::Sosi, Strategy::RbfFit};
    const auto start = std::chrono::steady_clock::now();
    const auto rows = run_split_sweep(cfg);
    const double secs = seconds_since(start);
    double sosi = NAN, rbf = NAN;
    for (const auto& r : rows)
        if (!r.seed && r.error_pct)
            (r.strategy == "sosi" ? sosi : rbf) = *r.error_pct;
    const bool pass = all_succeeded(rows) && sosi <= rbf && sosi <= kBenchmarkError && rbf <= kBenchmarkError &&
                      secs < kBenchmarkSeconds;
    return {pass, fmt("mean error sosi %.3f%%, rbf-fit %.3f%%, %.2f s", sosi, rbf, secs)};
}

Outcome scale_sweep_consistency()
{
    ExperimentConfig cfg = shipped_benchmark();
    cfg.strategies = {Strategy::RbfFit};
    const auto rows = run_scale_sweep(cfg);
    std::map<std::uint64_t, std::vector<const ReportRow*>> by_seed;
    for (const auto& r : rows)
        if (r.seed)
            by_seed[*r.seed].push_back(&r);
    int passing = 0;
    std::string seeds;
    for (const auto& [seed, list] : by_seed) {
        double best_error = INFINITY;
        const ReportRow* chosen = nullptr;
        for (const ReportRow* r : list) {
            if (!r->error_pct)
                continue;
            best_error = std::min(best_error, *r->error_pct);
            if (r->regularizer && (!chosen || *r->regularizer < *chosen->regularizer))
                chosen = r;
        }
        const bool ok = chosen && *chosen->error_pct <= kSweepFactor * best_error;
        passing += ok;
        if (!ok)
            seeds += " " + std::to_string(seed);
    }
    return {passing >= kSweepPassing, fmt("%g of %g seeds within 2x of the sweep minimum", passing,
                                          static_cast<double>(by_seed.size())) +
                                          (seeds.empty() ? "" : "; failing seeds:" + seeds)};
}

Outcome complexity_sanity()
{
    ExperimentConfig cfg = shipped_benchmark();
    std::vector<double> medians;
    for (int q : {60, 120, 240}) {
        cfg.dataset.per_class = q / 2;
        const Dataset ds = prepare_split(cfg, 20.0 / q, 1);
        const TrainingModel model = train_embedding(cfg, ds);
        std::vector<double> times;
        for (int repeat = 0; repeat < 5; ++repeat) {
            const auto start = std::chrono::steady_clock::now();
            const SosiResult r = run_sosi(ds, model.embedding, cfg.sosi);
            times.push_back(seconds_since(start));
        }
        std::nth_element(times.begin(), times.begin() + 2, times.end());
        medians.push_back(times[2]);
    }
    const double r1 = medians[1] / medians[0];
    const double r2 = medians[2] / medians[1];
    return {r1 <= kDoublingFactor && r2 <= kDoublingFactor,
            fmt("Q=60->120 x%.2f, 120->240 x%.2f (Q=240: %.3f s)", r1, r2, medians[2])};
}

Outcome determinism()
{
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = dir / "sosi_acceptance_a.csv";
    const auto b = dir / "sosi_acceptance_b.csv";
    const std::string base = std::string("\"") + SOSI_CLI_PATH + "\" experiment split-sweep --config \"" +
                             SOSI_CONFIG_DIR + "/synthetic_benchmark.ini\" --out ";
    const int ra = std::system((base + "\"" + a.string() + "\"").c_str());
    const int rb = std::system((base + "\"" + b.string() + "\"").c_str());
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string ca = slurp(a), cb = slurp(b);
    const bool pass = ra == 0 && rb == 0 && !ca.empty() && ca == cb;
    return {pass, fmt("exit codes %g/%g, %g bytes", ra, rb, static_cast<double>(ca.size())) +
                      (ca == cb ? ", identical" : ", different")};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"interpolation exactness", interpolation_exactness},
        {"kernel ridge oracle", kernel_ridge_oracle},
        {"gradient correctness", gradient_check},
        {"simplex projection oracle", qp_oracle},
        {"eigensolve oracle", eigensolve_oracle},
        {"gaussian fields oracle", gaussian_fields_oracle},
        {"synthetic benchmark ordering", benchmark_ordering},
        {"scale sweep consistency", scale_sweep_consistency},
        {"complexity sanity", complexity_sanity},
        {"determinism", determinism},
    };

    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int c = std::atoi(argv[i]);
        if (c < 1 || c > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
            return 2;
        }
        selected.push_back(c);
    }
    if (selected.empty())
        for (int c = 1; c <= static_cast<int>(criteria.size()); ++c)
            selected.push_back(c);

    int failures = 0;
    for (int c : selected) {
        Outcome o;
        try {
            o = criteria[c - 1].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %2d %-30s %s  %s\n", c, criteria[c - 1].first.c_str(), o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
