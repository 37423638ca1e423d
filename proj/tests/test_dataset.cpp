#include "sosi/dataset.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sosi;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("sosi_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Binary PGM (channels = 1) or PPM (channels = 3), 8-bit.
void write_netpbm(const fs::path& path, int w, int h, int channels, const std::vector<unsigned char>& px)
{
    std::ofstream out(path, std::ios::binary);
    out << (channels == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream(path) << text;
}

std::vector<std::pair<std::vector<double>, int>> labeled_rows(const Dataset& ds)
{
    std::vector<std::pair<std::vector<double>, int>> rows;
    for (int i = 0; i < ds.size(); ++i) {
        std::vector<double> r;
        for (int c = 0; c < ds.dim(); ++c)
            r.push_back(ds.samples(i, c));
        rows.emplace_back(r, ds.reference_labels[i]);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

} // namespace

TEST_CASE("constant white image becomes a row of ones")
{
    const fs::path root = fresh_dir("white");
    fs::create_directories(root / "a");
    write_netpbm(root / "a" / "img.pgm", 2, 2, 1, {255, 255, 255, 255});
    const Dataset ds = load_image_dirs(root, 2, 2);
    REQUIRE(ds.size() == 1);
    REQUIRE(ds.dim() == 4);
    for (int c = 0; c < 4; ++c)
        CHECK(ds.samples(0, c) == 1.0);
    CHECK(ds.labeled_count == 1);
    CHECK(ds.class_count == 1);
}

TEST_CASE("image resize sets the feature count")
{
    const fs::path root = fresh_dir("resize");
    std::vector<unsigned char> px(40 * 30 * 3);
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<unsigned char>((i * 37) % 256);
    for (const char* cls : {"b", "a"}) {
        fs::create_directories(root / cls);
        write_netpbm(root / cls / "x.ppm", 40, 30, 3, px);
        px[0] ^= 1;
    }
    const Dataset yale = load_image_dirs(root, 17, 20);
    CHECK(yale.dim() == 340);
    const Dataset coil = load_image_dirs(root, 32, 32);
    CHECK(coil.dim() == 1024);
    CHECK(coil.class_count == 2);
    CHECK(coil.samples.minCoeff() >= 0.0);
    CHECK(coil.samples.maxCoeff() <= 1.0);

    const Dataset again = load_image_dirs(root, 17, 20);
    CHECK(again.samples == yale.samples);
    CHECK(again.reference_labels == yale.reference_labels);
}

TEST_CASE("grayscale uses luminance weights")
{
    const fs::path root = fresh_dir("gray");
    fs::create_directories(root / "c");
    write_netpbm(root / "c" / "r.ppm", 1, 1, 3, {255, 0, 0});
    write_netpbm(root / "c" / "g.ppm", 1, 1, 3, {0, 255, 0});
    write_netpbm(root / "c" / "b.ppm", 1, 1, 3, {0, 0, 255});
    const Dataset ds = load_image_dirs(root, 1, 1);
    std::vector<double> v;
    for (int i = 0; i < ds.size(); ++i)
        v.push_back(ds.samples(i, 0));
    std::sort(v.begin(), v.end());
    CHECK(v[0] == doctest::Approx(0.114).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.299).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(0.587).epsilon(1e-12));
}

TEST_CASE("image ingest errors")
{
    const fs::path root = fresh_dir("bad");
    fs::create_directories(root / "a");
    write_text(root / "a" / "broken.png", "not an image");
    CHECK_THROWS_AS(load_image_dirs(root, 2, 2), IngestError);
    try {
        load_image_dirs(root, 2, 2);
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
    }

    const fs::path empty = fresh_dir("empty");
    fs::create_directories(empty / "a");
    write_netpbm(empty / "a" / "x.pgm", 1, 1, 1, {3});
    fs::create_directories(empty / "b");
    CHECK_THROWS_AS(load_image_dirs(empty, 1, 1), StructuralError);
}

TEST_CASE("csv with partial labels reorders labeled rows first")
{
    const fs::path dir = fresh_dir("csv");
    write_text(dir / "x.csv", "0,0\n1,0\n0,1\n1,1\n");
    write_text(dir / "y.csv", "\n2\n\n1\n");
    const Dataset ds = load_matrix_csv(dir / "x.csv", dir / "y.csv");
    CHECK(ds.size() == 4);
    CHECK(ds.labeled_count == 2);
    CHECK(ds.class_count == 2);
    CHECK(ds.original_index == std::vector<std::size_t>{1, 3, 0, 2});
    CHECK(*ds.labels[0] == 2);
    CHECK(*ds.labels[1] == 1);
    CHECK_FALSE(ds.labels[2].has_value());
    CHECK(ds.samples(0, 0) == 1.0);
    CHECK(ds.samples(0, 1) == 0.0);
    CHECK_FALSE(ds.has_reference());
}

TEST_CASE("csv fully labeled and header handling")
{
    const fs::path dir = fresh_dir("csv_full");
    write_text(dir / "x.csv", "a,b\n0.5,1e-3\n2,3\n");
    write_text(dir / "y.csv", "label\n1\n2\n");
    const Dataset ds = load_matrix_csv(dir / "x.csv", dir / "y.csv", CsvOptions{true});
    CHECK(ds.labeled_count == ds.size());
    CHECK(ds.has_reference());
    CHECK(ds.samples(0, 1) == 1e-3);
}

TEST_CASE("csv rejections")
{
    const fs::path dir = fresh_dir("csv_bad");
    write_text(dir / "y.csv", "1\n2\n");

    write_text(dir / "dup.csv", "1,2\n1,2\n");
    CHECK_THROWS_AS(load_matrix_csv(dir / "dup.csv", dir / "y.csv"), StructuralError);

    write_text(dir / "ragged.csv", "1,2\n3\n");
    try {
        load_matrix_csv(dir / "ragged.csv", dir / "y.csv");
        FAIL("ragged rows accepted");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }

    write_text(dir / "text.csv", "1,2\n3,x\n");
    CHECK_THROWS_AS(load_matrix_csv(dir / "text.csv", dir / "y.csv"), ParseError);

    write_text(dir / "ok.csv", "1,2\n3,4\n");
    write_text(dir / "zero.csv", "0\n1\n");
    CHECK_THROWS_AS(load_matrix_csv(dir / "ok.csv", dir / "zero.csv"), ParseError);
    write_text(dir / "long.csv", "1\n2\n1\n");
    CHECK_THROWS_AS(load_matrix_csv(dir / "ok.csv", dir / "long.csv"), ParseError);
}

TEST_CASE("noise-free curves lie on their generating sinusoids")
{
    const CurveShape shape;
    const Dataset ds = synthetic_curves(2, 30, 0.0, 7, shape);
    CHECK(ds.size() == 60);
    CHECK(ds.labeled_count == 60);
    for (int i = 0; i < ds.size(); ++i) {
        const double t = ds.samples(i, 0);
        const double expected = shape.amplitude * std::sin(t) + (ds.reference_labels[i] - 1) * shape.offset;
        CHECK(std::abs(ds.samples(i, 1) - expected) <= 1e-12);
        CHECK(t >= 0.0);
        CHECK(t <= shape.span);
    }
}

TEST_CASE("synthetic curves are deterministic and classes stay apart")
{
    const Dataset a = synthetic_curves(2, 30, 0.05, 11);
    const Dataset b = synthetic_curves(2, 30, 0.05, 11);
    CHECK(a.samples == b.samples);
    const Dataset c = synthetic_curves(2, 30, 0.05, 12);
    CHECK(a.samples != c.samples);

    double min_between = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < a.size(); ++j)
            if (a.reference_labels[i] != a.reference_labels[j])
                min_between = std::min(min_between, (a.samples.row(i) - a.samples.row(j)).norm());
    CHECK(min_between > 0.0);

    CHECK_THROWS_AS(synthetic_curves(1, 30, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_curves(2, 3, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_curves(2, 30, -1.0, 1), ArgumentError);
}

TEST_CASE("stratified split counts")
{
    const Dataset full = synthetic_curves(2, 10, 0.05, 3);
    const Dataset s = split_labels(full, 0.5, 1);
    CHECK(s.labeled_count == 10);
    std::map<ClassId, int> counts;
    for (int i = 0; i < s.labeled_count; ++i)
        ++counts[*s.labels[i]];
    CHECK(counts[1] == 5);
    CHECK(counts[2] == 5);
    for (int i = s.labeled_count; i < s.size(); ++i)
        CHECK_FALSE(s.labels[i].has_value());

    const Dataset yale_like = synthetic_curves(12, 58, 0.05, 3);
    const Dataset y = split_labels(yale_like, 0.11, 4);
    std::map<ClassId, int> per;
    for (int i = 0; i < y.labeled_count; ++i)
        ++per[*y.labels[i]];
    CHECK(per.size() == 12);
    for (const auto& [cls, n] : per)
        CHECK(n == 6);

    CHECK_THROWS_AS(split_labels(full, 0.01, 1), SplitError);
    CHECK_THROWS_AS(split_labels(full, 1.0, 1), ArgumentError);
}

TEST_CASE("split seeds change the selection but not the counts")
{
    const Dataset full = synthetic_curves(3, 20, 0.05, 5);
    const Dataset a = split_labels(full, 0.3, 1);
    const Dataset b = split_labels(full, 0.3, 2);
    CHECK(a.labeled_count == b.labeled_count);
    std::set<std::size_t> sa(a.original_index.begin(), a.original_index.begin() + a.labeled_count);
    std::set<std::size_t> sb(b.original_index.begin(), b.original_index.begin() + b.labeled_count);
    CHECK(sa != sb);
    const Dataset a2 = split_labels(full, 0.3, 1);
    CHECK(a2.samples == a.samples);
}

TEST_CASE("reordering preserves rows and their labels")
{
    const Dataset full = synthetic_curves(3, 15, 0.1, 9);
    const Dataset s = split_labels(full, 0.4, 8);
    CHECK(labeled_rows(full) == labeled_rows(s));
    for (int i = 0; i < s.size(); ++i) {
        const auto src = s.original_index[i];
        CHECK(s.samples.row(i) == full.samples.row(static_cast<Eigen::Index>(src)));
        CHECK(s.reference_labels[i] == full.reference_labels[src]);
        if (i < s.labeled_count)
            CHECK(*s.labels[i] == s.reference_labels[i]);
    }
}

TEST_CASE("validate rejects broken invariants")
{
    Dataset ds = synthetic_curves(2, 4, 0.1, 1);
    validate(ds);
    Dataset gap = ds;
    gap.labels[2].reset();
    CHECK_THROWS_AS(validate(gap), StructuralError);
    Dataset range = ds;
    range.labels[0] = 3;
    CHECK_THROWS_AS(validate(range), StructuralError);
    Dataset missing = ds;
    for (int i = 0; i < missing.size(); ++i)
        if (missing.labels[i] == 2)
            missing.labels[i] = 1;
    CHECK_THROWS_AS(validate(missing), StructuralError);
}
