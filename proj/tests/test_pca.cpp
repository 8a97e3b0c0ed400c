#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "synthaug/pca.hpp"
#include "synthaug/rng.hpp"

using namespace synthaug;

namespace {

FeatureMatrix random_features(std::size_t rows, std::size_t cols, Rng& rng, double mean = 0.0,
                              double stddev = 1.0) {
    FeatureMatrix f;
    f.rows = rows;
    f.cols = cols;
    f.values.resize(rows * cols);
    for (auto& v : f.values) v = rng.normal(mean, stddev);
    for (std::size_t r = 0; r < rows; ++r)
        f.meta.push_back({"row" + std::to_string(r), r % 2 ? "class1" : "class0", "real"});
    return f;
}

CovarianceMatrix random_symmetric(std::size_t d, Rng& rng) {
    CovarianceMatrix c;
    c.dim = d;
    c.values.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            const double v = rng.normal();
            c.at(i, j) = v;
            c.at(j, i) = v;
        }
    return c;
}

double residual_inf(const CovarianceMatrix& c, const EigenPairs& e) {
    double worst = 0;
    for (std::size_t j = 0; j < e.dim; ++j) {
        for (std::size_t i = 0; i < e.dim; ++i) {
            double cu = 0;
            for (std::size_t k = 0; k < e.dim; ++k) cu += c.at(i, k) * e.vec(k, j);
            worst = std::max(worst, std::abs(cu - e.values[j] * e.vec(i, j)));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("standardize: constant column zeroes out with a degenerate flag") {
    Rng rng(1);
    auto f = random_features(10, 3, rng);
    for (std::size_t r = 0; r < f.rows; ++r) f.at(r, 1) = 4.2;
    StandardizationParams p;
    auto z = standardize(f, p);
    REQUIRE(p.degenerate[1]);
    REQUIRE_FALSE(p.degenerate[0]);
    REQUIRE(p.any_degenerate());
    for (std::size_t r = 0; r < z.rows; ++r) REQUIRE(z.at(r, 1) == 0.0);
}

TEST_CASE("standardize: output columns have zero mean and unit sample std") {
    Rng rng(2);
    auto f = random_features(40, 5, rng, 3.0, 7.0);
    StandardizationParams p;
    auto z = standardize(f, p);
    for (std::size_t c = 0; c < z.cols; ++c) {
        double mean = 0;
        for (std::size_t r = 0; r < z.rows; ++r) mean += z.at(r, c);
        mean /= double(z.rows);
        double ss = 0;
        for (std::size_t r = 0; r < z.rows; ++r) {
            const double d = z.at(r, c) - mean;
            ss += d * d;
        }
        const double std_ = std::sqrt(ss / double(z.rows - 1));
        REQUIRE(std::abs(mean) < 1e-10);
        REQUIRE(std::abs(std_ - 1.0) < 1e-10);
    }
}

TEST_CASE("standardize: a single row is rejected") {
    FeatureMatrix f;
    f.rows = 1;
    f.cols = 3;
    f.values = {1, 2, 3};
    StandardizationParams p;
    REQUIRE_THROWS_AS(standardize(f, p), PcaError);
}

TEST_CASE("covariance: identical columns share variance and covariance") {
    Rng rng(3);
    FeatureMatrix f;
    f.rows = 12;
    f.cols = 2;
    f.values.resize(24);
    for (std::size_t r = 0; r < 12; ++r) {
        const double v = rng.normal();
        f.at(r, 0) = v;
        f.at(r, 1) = v;
    }
    auto c = covariance(f);
    REQUIRE(c.at(0, 0) == Catch::Approx(c.at(1, 1)).epsilon(1e-14));
    REQUIRE(c.at(0, 1) == Catch::Approx(c.at(0, 0)).epsilon(1e-14));
}

TEST_CASE("covariance: random matrix matches the pairwise-sum oracle to 1e-12") {
    Rng rng(4);
    auto f = random_features(6, 3, rng);
    auto c = covariance(f);
    REQUIRE(c.dim == 3);  // 3-dimensional data gives a 3x3 matrix
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double mi = 0, mj = 0;
            for (std::size_t r = 0; r < 6; ++r) {
                mi += f.at(r, i);
                mj += f.at(r, j);
            }
            mi /= 6;
            mj /= 6;
            double acc = 0;
            for (std::size_t r = 0; r < 6; ++r) acc += (f.at(r, i) - mi) * (f.at(r, j) - mj);
            acc /= 5.0;
            REQUIRE(std::abs(c.at(i, j) - acc) < 1e-12);
        }
    // symmetry and non-negative diagonal
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(c.at(i, i) >= 0.0);
        for (std::size_t j = 0; j < 3; ++j) REQUIRE(std::abs(c.at(i, j) - c.at(j, i)) < 1e-12);
    }
}

TEST_CASE("eigen: identity matrix has a flat unit spectrum") {
    CovarianceMatrix c;
    c.dim = 4;
    c.values.assign(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) c.at(i, i) = 1.0;
    auto e = eigen_decompose(c);
    for (double v : e.values) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("eigen: diagonal matrix returns its entries sorted with axis vectors") {
    CovarianceMatrix c;
    c.dim = 2;
    c.values = {1.0, 0.0, 0.0, 3.0};
    auto e = eigen_decompose(c);
    REQUIRE(e.values[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(e.values[1] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(e.vec(1, 0)) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(e.vec(0, 0)) == Catch::Approx(0.0).margin(1e-12));
    // sign convention: dominant component positive
    REQUIRE(e.vec(1, 0) > 0);
    REQUIRE(e.vec(0, 1) > 0);
}

TEST_CASE("eigen: random symmetric matrices satisfy residual and trace bounds") {
    Rng rng(5);
    for (std::size_t d : {std::size_t(5), std::size_t(64)}) {
        for (int trial = 0; trial < (d == 5 ? 10 : 2); ++trial) {
            auto c = random_symmetric(d, rng);
            auto e = eigen_decompose(c);
            REQUIRE(residual_inf(c, e) < 1e-8);
            double trace = 0, lsum = 0;
            for (std::size_t i = 0; i < d; ++i) {
                trace += c.at(i, i);
                lsum += e.values[i];
            }
            REQUIRE(std::abs(trace - lsum) < 1e-9);
            for (std::size_t i = 0; i + 1 < d; ++i) REQUIRE(e.values[i] >= e.values[i + 1]);
            // orthonormal columns
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i; j < d; ++j) {
                    double dot = 0;
                    for (std::size_t k = 0; k < d; ++k) dot += e.vec(k, i) * e.vec(k, j);
                    if (i == j)
                        REQUIRE(std::abs(dot - 1.0) < 1e-10);
                    else
                        REQUIRE(std::abs(dot) < 1e-8);
                }
        }
    }
}

TEST_CASE("eigen: asymmetric input is rejected") {
    CovarianceMatrix c;
    c.dim = 2;
    c.values = {1.0, 0.5, 0.2, 1.0};
    REQUIRE_THROWS_AS(eigen_decompose(c), PcaError);
}

TEST_CASE("project: full projection is an isometry") {
    Rng rng(6);
    auto f = random_features(15, 4, rng);
    StandardizationParams p;
    auto z = standardize(f, p);
    auto e = eigen_decompose(covariance(z));
    auto s = project(z, e, 4);
    for (std::size_t a = 0; a < z.rows; ++a)
        for (std::size_t b = a + 1; b < z.rows; ++b) {
            double dz = 0, ds = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                dz += (z.at(a, c) - z.at(b, c)) * (z.at(a, c) - z.at(b, c));
                ds += (s.at(a, c) - s.at(b, c)) * (s.at(a, c) - s.at(b, c));
            }
            REQUIRE(std::abs(std::sqrt(dz) - std::sqrt(ds)) < 1e-8);
        }
}

TEST_CASE("project: PC1 score variance equals the top eigenvalue") {
    Rng rng(7);
    auto f = random_features(50, 6, rng, -2.0, 3.0);
    StandardizationParams p;
    auto z = standardize(f, p);
    auto cov = covariance(z);
    auto e = eigen_decompose(cov);
    auto s = project(z, e, 2);
    double mean = 0;
    for (std::size_t r = 0; r < s.rows; ++r) mean += s.at(r, 0);
    mean /= double(s.rows);
    double var = 0;
    for (std::size_t r = 0; r < s.rows; ++r) var += (s.at(r, 0) - mean) * (s.at(r, 0) - mean);
    var /= double(s.rows - 1);
    REQUIRE(std::abs(var - e.values[0]) < 1e-8);

    SECTION("projection energy: total score variance equals the eigenvalue sum") {
        auto full = project(z, e, z.cols);
        double total = 0;
        for (std::size_t c = 0; c < full.cols; ++c) {
            double m = 0;
            for (std::size_t r = 0; r < full.rows; ++r) m += full.at(r, c);
            m /= double(full.rows);
            for (std::size_t r = 0; r < full.rows; ++r)
                total += (full.at(r, c) - m) * (full.at(r, c) - m);
        }
        total /= double(full.rows - 1);
        double lsum = 0;
        for (double v : e.values) lsum += v;
        REQUIRE(std::abs(total - lsum) < 1e-8);
    }

    SECTION("standardized covariance has a unit diagonal") {
        for (std::size_t i = 0; i < cov.dim; ++i)
            REQUIRE(std::abs(cov.at(i, i) - 1.0) < 1e-9);
    }
}

TEST_CASE("project: a diagonal covariance reorders coordinates up to sign") {
    Rng rng(8);
    CovarianceMatrix c;
    c.dim = 3;
    c.values = {2.0, 0, 0, 0, 5.0, 0, 0, 0, 0.5};
    auto e = eigen_decompose(c);
    REQUIRE(e.values[0] == Catch::Approx(5.0));
    REQUIRE(e.values[1] == Catch::Approx(2.0));
    REQUIRE(e.values[2] == Catch::Approx(0.5));
    auto f = random_features(4, 3, rng);
    auto s = project(f, e, 3);
    for (std::size_t r = 0; r < 4; ++r) {
        REQUIRE(s.at(r, 0) == Catch::Approx(f.at(r, 1)).margin(1e-10));
        REQUIRE(s.at(r, 1) == Catch::Approx(f.at(r, 0)).margin(1e-10));
        REQUIRE(s.at(r, 2) == Catch::Approx(f.at(r, 2)).margin(1e-10));
    }
}

TEST_CASE("project: component count is validated") {
    Rng rng(9);
    auto f = random_features(6, 3, rng);
    auto e = eigen_decompose(covariance(f));
    REQUIRE_THROWS_AS(project(f, e, 0), PcaError);
    REQUIRE_THROWS_AS(project(f, e, 4), PcaError);
}

TEST_CASE("scatter: CSV row contract and byte determinism; SVG self-contained") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "synthaug_tests" / "pca";
    fs::create_directories(dir);
    Rng rng(10);
    auto f = random_features(9, 5, rng);
    for (std::size_t r = 0; r < f.rows; ++r) f.meta[r].origin = r % 3 ? "real" : "synthetic";
    StandardizationParams p;
    auto z = standardize(f, p);
    auto s = project(z, eigen_decompose(covariance(z)), 2);

    const std::string csv_path = (dir / "scatter.csv").string();
    write_scatter_csv(csv_path, s);
    std::ifstream is(csv_path);
    std::string line;
    std::size_t lines = 0;
    std::getline(is, line);
    REQUIRE(line == "id,label,origin,pc1,pc2");
    while (std::getline(is, line)) ++lines;
    REQUIRE(lines == 9);

    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), {});
    };
    const std::string first = slurp(csv_path);
    write_scatter_csv(csv_path, s);
    REQUIRE(slurp(csv_path) == first);

    const std::string svg_path = (dir / "scatter.svg").string();
    write_scatter_svg(svg_path, s);
    const std::string svg = slurp(svg_path);
    REQUIRE(svg.rfind("<svg", 0) == 0);
    REQUIRE(svg.find("circle") != std::string::npos);
    REQUIRE(svg.find("class0 / real") != std::string::npos);
    REQUIRE(svg.find("href") == std::string::npos);  // no external assets
    REQUIRE(svg.find("http://www.w3.org/2000/svg") != std::string::npos);
}

TEST_CASE("feature CSV round-trips") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "synthaug_tests" / "pca";
    fs::create_directories(dir);
    Rng rng(11);
    auto f = random_features(7, 4, rng);
    const std::string path = (dir / "features.csv").string();
    save_features_csv(path, f);
    auto back = load_features_csv(path);
    REQUIRE(back.rows == f.rows);
    REQUIRE(back.cols == f.cols);
    for (std::size_t i = 0; i < f.values.size(); ++i)
        REQUIRE(back.values[i] == Catch::Approx(f.values[i]).epsilon(1e-7));
    REQUIRE(back.meta[3].id == f.meta[3].id);
    REQUIRE(back.meta[3].label == f.meta[3].label);
}
