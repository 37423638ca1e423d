#include "sosi/dataset.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace sosi {

std::vector<ClassId> Dataset::training_labels() const
{
    std::vector<ClassId> out;
    out.reserve(labeled_count);
    for (int i = 0; i < labeled_count; ++i)
        out.push_back(*labels[i]);
    return out;
}

namespace {

bool row_less(const Matrix& m, Eigen::Index a, Eigen::Index b)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m(a, j) < m(b, j))
            return true;
        if (m(b, j) < m(a, j))
            return false;
    }
    return false;
}

bool rows_equal(const Matrix& m, Eigen::Index a, Eigen::Index b)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (m(a, j) != m(b, j))
            return false;
    return true;
}

// Moves labeled rows to the front, keeping the relative order within each group.
Dataset reorder_labeled_first(const Matrix& samples, const std::vector<std::optional<ClassId>>& labels,
                              const std::vector<std::size_t>& source_index,
                              const std::vector<ClassId>& reference)
{
    const auto q = static_cast<std::size_t>(samples.rows());
    std::vector<std::size_t> order;
    order.reserve(q);
    for (std::size_t i = 0; i < q; ++i)
        if (labels[i])
            order.push_back(i);
    const auto n_labeled = order.size();
    for (std::size_t i = 0; i < q; ++i)
        if (!labels[i])
            order.push_back(i);

    Dataset ds;
    ds.samples.resize(samples.rows(), samples.cols());
    ds.labels.resize(q);
    ds.original_index.resize(q);
    if (!reference.empty())
        ds.reference_labels.resize(q);
    ClassId max_class = 0;
    for (std::size_t r = 0; r < q; ++r) {
        const auto src = order[r];
        ds.samples.row(static_cast<Eigen::Index>(r)) = samples.row(static_cast<Eigen::Index>(src));
        ds.labels[r] = labels[src];
        ds.original_index[r] = source_index[src];
        if (!reference.empty())
            ds.reference_labels[r] = reference[src];
        if (labels[src])
            max_class = std::max(max_class, *labels[src]);
    }
    ds.labeled_count = static_cast<int>(n_labeled);
    ds.class_count = max_class;
    for (ClassId c : reference)
        ds.class_count = std::max(ds.class_count, c);
    return ds;
}

std::string trim(std::string s)
{
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col)
{
    const auto t = trim(cell);
    double v = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (t.empty() || ec != std::errc() || ptr != last)
        throw ParseError("features row " + std::to_string(row) + ", column " + std::to_string(col) +
                         ": not a number: '" + t + "'");
    return v;
}

} // namespace

void validate(const Dataset& ds)
{
    const int q = ds.size();
    if (static_cast<int>(ds.labels.size()) != q)
        throw StructuralError("label vector length differs from sample count");
    if (ds.labeled_count < 1 || ds.labeled_count > q)
        throw StructuralError("labeled count must lie in [1, Q]");
    if (ds.class_count < 1)
        throw StructuralError("class count must be positive");
    std::vector<int> per_class(ds.class_count + 1, 0);
    for (int i = 0; i < q; ++i) {
        const bool expect = i < ds.labeled_count;
        if (ds.labels[i].has_value() != expect)
            throw StructuralError("labels must be present exactly on the first N rows (row " +
                                  std::to_string(i) + ")");
        if (expect) {
            const ClassId c = *ds.labels[i];
            if (c < 1 || c > ds.class_count)
                throw StructuralError("label " + std::to_string(c) + " out of range on row " +
                                      std::to_string(i));
            ++per_class[c];
        }
    }
    for (ClassId c = 1; c <= ds.class_count; ++c)
        if (per_class[c] == 0)
            throw StructuralError("class " + std::to_string(c) + " has no labeled sample");

    std::vector<Eigen::Index> idx(q);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](Eigen::Index a, Eigen::Index b) { return row_less(ds.samples, a, b); });
    for (int i = 1; i < q; ++i)
        if (rows_equal(ds.samples, idx[i - 1], idx[i]))
            throw StructuralError("duplicate sample rows " + std::to_string(ds.original_index.empty() ? idx[i - 1] : ds.original_index[idx[i - 1]]) +
                                  " and " + std::to_string(ds.original_index.empty() ? idx[i] : ds.original_index[idx[i]]));
}

Dataset load_image_dirs(const fs::path& root, int width, int height)
{
    if (width < 1 || height < 1)
        throw ArgumentError("resize target must be positive");
    if (!fs::is_directory(root))
        throw IngestError("not a directory: " + root.string());

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory())
            class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw StructuralError("no class directories under " + root.string());

    std::vector<Vector> rows;
    std::vector<ClassId> classes;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file())
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw StructuralError("empty class directory: " + class_dirs[c].string());

        for (const auto& file : files) {
            cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
            if (img.empty())
                throw IngestError("cannot decode image: " + file.string());

            double max_value = 255.0;
            if (img.depth() == CV_16U)
                max_value = 65535.0;
            else if (img.depth() != CV_8U)
                throw IngestError("unsupported pixel depth in " + file.string());

            cv::Mat scaled;
            img.convertTo(scaled, CV_MAKETYPE(CV_64F, img.channels()), 1.0 / max_value);
            cv::Mat unit;
            if (img.channels() == 1) {
                unit = scaled;
            } else if (img.channels() == 3 || img.channels() == 4) {
                // BGR(A) channel order; alpha is ignored.
                std::vector<cv::Mat> planes;
                cv::split(scaled, planes);
                unit = 0.114 * planes[0] + 0.587 * planes[1] + 0.299 * planes[2];
            } else {
                throw IngestError("unsupported channel count in " + file.string());
            }
            cv::Mat sized;
            if (unit.cols == width && unit.rows == height)
                sized = unit;
            else
                cv::resize(unit, sized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);

            Vector row(static_cast<Eigen::Index>(width) * height);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    row[static_cast<Eigen::Index>(y) * width + x] = std::clamp(sized.at<double>(y, x), 0.0, 1.0);
            rows.push_back(std::move(row));
            classes.push_back(static_cast<ClassId>(c + 1));
        }
    }

    Dataset ds;
    const auto q = static_cast<Eigen::Index>(rows.size());
    ds.samples.resize(q, static_cast<Eigen::Index>(width) * height);
    for (Eigen::Index i = 0; i < q; ++i)
        ds.samples.row(i) = rows[i].transpose();
    ds.labels.assign(classes.begin(), classes.end());
    ds.reference_labels = classes;
    ds.labeled_count = static_cast<int>(q);
    ds.class_count = static_cast<int>(class_dirs.size());
    ds.original_index.resize(q);
    std::iota(ds.original_index.begin(), ds.original_index.end(), std::size_t{0});
    validate(ds);
    return ds;
}

Dataset load_matrix_csv(const fs::path& features, const fs::path& labels, const CsvOptions& options)
{
    std::ifstream fin(features);
    if (!fin)
        throw IngestError("cannot open features file: " + features.string());
    std::ifstream lin(labels);
    if (!lin)
        throw IngestError("cannot open labels file: " + labels.string());

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    if (options.header)
        std::getline(fin, line), ++line_no;
    while (std::getline(fin, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ','))
            row.push_back(parse_double(cell, line_no, ++col));
        if (!line.empty() && line.back() == ',')
            throw ParseError("features row " + std::to_string(line_no) + ": trailing empty cell");
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("features row " + std::to_string(line_no) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, found " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw StructuralError("features file has no rows: " + features.string());

    std::vector<std::optional<ClassId>> lab;
    line_no = 0;
    if (options.header)
        std::getline(lin, line), ++line_no;
    while (lab.size() < rows.size() && std::getline(lin, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) {
            lab.push_back(std::nullopt);
            continue;
        }
        int v = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || ptr != t.data() + t.size())
            throw ParseError("labels row " + std::to_string(line_no) + ": not an integer: '" + t + "'");
        if (v < 1)
            throw ParseError("labels row " + std::to_string(line_no) + ": class id " + std::to_string(v) +
                             " out of range (ids start at 1)");
        lab.push_back(v);
    }
    // A short labels file leaves the trailing rows unlabeled.
    lab.resize(rows.size());
    while (std::getline(lin, line)) {
        ++line_no;
        if (!trim(line).empty())
            throw ParseError("labels row " + std::to_string(line_no) + ": more labels than feature rows");
    }

    Matrix samples(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    std::vector<std::size_t> source(rows.size());
    std::iota(source.begin(), source.end(), std::size_t{0});
    std::vector<ClassId> reference;
    if (std::all_of(lab.begin(), lab.end(), [](const auto& l) { return l.has_value(); }))
        for (const auto& l : lab)
            reference.push_back(*l);

    Dataset ds = reorder_labeled_first(samples, lab, source, reference);
    validate(ds);
    return ds;
}

Dataset synthetic_curves(int classes, int per_class, double noise, std::uint64_t seed, const CurveShape& shape)
{
    if (classes < 2)
        throw ArgumentError("synthetic_curves needs at least 2 classes");
    if (per_class < 4)
        throw ArgumentError("synthetic_curves needs at least 4 points per class");
    if (!(noise >= 0.0))
        throw ArgumentError("noise must be non-negative");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> param(0.0, shape.span);
    std::normal_distribution<double> jitter(0.0, 1.0);

    const int q = classes * per_class;
    Dataset ds;
    ds.samples.resize(q, 2);
    ds.labels.resize(q);
    ds.reference_labels.resize(q);
    ds.original_index.resize(q);
    int row = 0;
    for (ClassId m = 1; m <= classes; ++m) {
        for (int i = 0; i < per_class; ++i, ++row) {
            const double t = param(rng);
            double x = t;
            double y = shape.amplitude * std::sin(t) + (m - 1) * shape.offset;
            if (noise > 0.0) {
                x += noise * jitter(rng);
                y += noise * jitter(rng);
            }
            ds.samples(row, 0) = x;
            ds.samples(row, 1) = y;
            ds.labels[row] = m;
            ds.reference_labels[row] = m;
            ds.original_index[row] = static_cast<std::size_t>(row);
        }
    }
    ds.labeled_count = q;
    ds.class_count = classes;
    validate(ds);
    return ds;
}

Dataset split_labels(const Dataset& ds, double labeled_ratio, std::uint64_t seed)
{
    if (!(labeled_ratio > 0.0 && labeled_ratio < 1.0))
        throw ArgumentError("labeled ratio must lie in (0, 1)");
    if (!ds.has_reference())
        throw SplitError("splitting requires a class label for every sample");

    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (int i = 0; i < ds.size(); ++i)
        by_class[ds.reference_labels[i]].push_back(static_cast<std::size_t>(i));

    std::mt19937_64 rng(seed);
    std::vector<std::optional<ClassId>> labels(ds.size());
    for (auto& [cls, members] : by_class) {
        const auto take = static_cast<std::size_t>(std::llround(labeled_ratio * static_cast<double>(members.size())));
        if (take < 1)
            throw SplitError("labeled ratio " + std::to_string(labeled_ratio) + " leaves class " +
                             std::to_string(cls) + " without labeled samples");
        std::vector<std::size_t> pick = members;
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(take);
        std::sort(pick.begin(), pick.end());
        for (auto i : pick)
            labels[i] = cls;
    }

    std::vector<std::size_t> source(ds.original_index);
    if (source.empty()) {
        source.resize(ds.size());
        std::iota(source.begin(), source.end(), std::size_t{0});
    }
    Dataset out = reorder_labeled_first(ds.samples, labels, source, ds.reference_labels);
    out.class_count = ds.class_count;
    validate(out);
    return out;
}

} // namespace sosi
