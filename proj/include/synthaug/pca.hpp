// Principal component analysis from first principles: column
// standardization, sample covariance, a cyclic Jacobi eigensolver for the
// symmetric covariance matrix, projection onto the leading eigenvectors and
// scatter emission (CSV, optional self-contained SVG).
//
// Everything here runs in double precision regardless of what produced the
// features.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synthaug/tensor.hpp"

namespace synthaug {

class PcaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FeatureMeta {
    std::string id;
    std::string label;
    std::string origin;  // "real" | "synthetic"
};

struct FeatureMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;  // row-major rows x cols
    std::vector<FeatureMeta> meta;

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    void validate() const {
        if (values.size() != rows * cols) throw PcaError("feature matrix storage mismatch");
        if (!meta.empty() && meta.size() != rows)
            throw PcaError("feature metadata length does not match row count");
    }
};

struct StandardizationParams {
    std::vector<double> mu;
    std::vector<double> sigma;          // sample standard deviation
    std::vector<bool> degenerate;       // sigma below 1e-12, column zeroed
    bool any_degenerate() const {
        return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
    }
};

// z = (x - mu) / sigma columnwise; constant columns map to zero
inline FeatureMatrix standardize(const FeatureMatrix& x, StandardizationParams& params) {
    x.validate();
    if (x.rows < 2) throw PcaError("standardize needs at least 2 rows, got " + std::to_string(x.rows));
    params.mu.assign(x.cols, 0.0);
    params.sigma.assign(x.cols, 0.0);
    params.degenerate.assign(x.cols, false);
    for (std::size_t c = 0; c < x.cols; ++c) {
        double m = 0;
        for (std::size_t r = 0; r < x.rows; ++r) m += x.at(r, c);
        m /= double(x.rows);
        double ss = 0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double d = x.at(r, c) - m;
            ss += d * d;
        }
        params.mu[c] = m;
        params.sigma[c] = std::sqrt(ss / double(x.rows - 1));
    }
    FeatureMatrix z = x;
    for (std::size_t c = 0; c < x.cols; ++c) {
        if (params.sigma[c] < 1e-12) {
            params.degenerate[c] = true;
            for (std::size_t r = 0; r < x.rows; ++r) z.at(r, c) = 0.0;
        } else {
            for (std::size_t r = 0; r < x.rows; ++r)
                z.at(r, c) = (x.at(r, c) - params.mu[c]) / params.sigma[c];
        }
    }
    return z;
}

// square row-major matrix
struct CovarianceMatrix {
    std::size_t dim = 0;
    std::vector<double> values;
    double& at(std::size_t r, std::size_t c) { return values[r * dim + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
};

// C = Zc^T Zc / (n-1) with column-centered Zc
inline CovarianceMatrix covariance(const FeatureMatrix& z) {
    z.validate();
    if (z.rows < 2) throw PcaError("covariance needs at least 2 rows");
    std::vector<double> mean(z.cols, 0.0);
    for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t c = 0; c < z.cols; ++c) mean[c] += z.at(r, c);
    for (auto& m : mean) m /= double(z.rows);

    CovarianceMatrix cov;
    cov.dim = z.cols;
    cov.values.assign(z.cols * z.cols, 0.0);
    for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t i = 0; i < z.cols; ++i) {
            const double di = z.at(r, i) - mean[i];
            for (std::size_t j = i; j < z.cols; ++j)
                cov.at(i, j) += di * (z.at(r, j) - mean[j]);
        }
    for (std::size_t i = 0; i < z.cols; ++i)
        for (std::size_t j = i; j < z.cols; ++j) {
            cov.at(i, j) /= double(z.rows - 1);
            cov.at(j, i) = cov.at(i, j);
        }
    return cov;
}

struct EigenPairs {
    std::vector<double> values;   // descending
    std::vector<double> vectors;  // row-major dim x dim, column j pairs with values[j]
    std::size_t dim = 0;

    double vec(std::size_t row, std::size_t col) const { return vectors[row * dim + col]; }
};

// Cyclic Jacobi rotations on the symmetrized input until every off-diagonal
// magnitude drops below 1e-12, at most 100 sweeps.
inline EigenPairs eigen_decompose(const CovarianceMatrix& input) {
    const std::size_t d = input.dim;
    if (d == 0) throw PcaError("eigen_decompose on an empty matrix");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::abs(input.at(i, j) - input.at(j, i)) > 1e-9)
                throw PcaError("matrix is not symmetric within 1e-9");

    std::vector<double> a(input.values);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a[i * d + j] = 0.5 * (input.at(i, j) + input.at(j, i));
    std::vector<double> v(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

    const double tol = 1e-12;
    const int max_sweeps = 100;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off = std::max(off, std::abs(a[p * d + q]));
        if (off < tol) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < tol) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off = std::max(off, std::abs(a[p * d + q]));
        if (off >= tol)
            throw PcaError("Jacobi sweep limit reached without convergence (max off-diagonal " +
                           std::to_string(off) + ")");
    }

    // sort descending, carry columns along
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a[x * d + x] > a[y * d + y]; });

    EigenPairs out;
    out.dim = d;
    out.values.resize(d);
    out.vectors.resize(d * d);
    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t src = order[j];
        out.values[j] = a[src * d + src];
        // sign convention: the largest-magnitude component points positive
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double mag = std::abs(v[i * d + src]);
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double flip = v[arg * d + src] < 0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) out.vectors[i * d + j] = flip * v[i * d + src];
    }
    return out;
}

// scores = Z * U_k
inline FeatureMatrix project(const FeatureMatrix& z, const EigenPairs& pairs, std::size_t k) {
    z.validate();
    if (k < 1 || k > pairs.dim)
        throw PcaError("component count " + std::to_string(k) + " out of range 1.." +
                       std::to_string(pairs.dim));
    if (z.cols != pairs.dim) throw PcaError("feature dimension does not match the eigenbasis");
    FeatureMatrix scores;
    scores.rows = z.rows;
    scores.cols = k;
    scores.values.assign(z.rows * k, 0.0);
    scores.meta = z.meta;
    for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < z.cols; ++c) acc += z.at(r, c) * pairs.vec(c, j);
            scores.at(r, j) = acc;
        }
    return scores;
}

// -- scatter output ------------------------------------------------------------

inline void write_scatter_csv(const std::string& path, const FeatureMatrix& scores) {
    scores.validate();
    if (scores.cols < 2) throw PcaError("scatter output needs at least 2 components");
    if (scores.meta.size() != scores.rows) throw PcaError("scatter output needs row metadata");
    std::ofstream os(path);
    if (!os) throw PcaError("cannot write scatter CSV: " + path);
    os << "id,label,origin,pc1,pc2\n";
    char buf[64];
    for (std::size_t r = 0; r < scores.rows; ++r) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", scores.at(r, 0), scores.at(r, 1));
        os << scores.meta[r].id << ',' << scores.meta[r].label << ',' << scores.meta[r].origin << ','
           << buf << "\n";
    }
}

// Self-contained scatter SVG, colored by (label, origin) with a legend.
inline void write_scatter_svg(const std::string& path, const FeatureMatrix& scores) {
    scores.validate();
    if (scores.cols < 2) throw PcaError("SVG scatter needs exactly 2 components");
    if (scores.meta.size() != scores.rows) throw PcaError("SVG scatter needs row metadata");

    static const char* kPalette[] = {"#6a329f", "#3b76d1", "#d13b3b", "#3bab5a",
                                     "#d1a23b", "#3bbdd1", "#d13bb0", "#7f7f7f"};
    std::map<std::string, std::size_t> groups;  // "label/origin" -> palette slot
    for (const auto& m : scores.meta) groups.emplace(m.label + " / " + m.origin, 0);
    std::size_t slot = 0;
    for (auto& [key, idx] : groups) idx = slot++ % 8;

    double xmin = scores.at(0, 0), xmax = xmin, ymin = scores.at(0, 1), ymax = ymin;
    for (std::size_t r = 0; r < scores.rows; ++r) {
        xmin = std::min(xmin, scores.at(r, 0));
        xmax = std::max(xmax, scores.at(r, 0));
        ymin = std::min(ymin, scores.at(r, 1));
        ymax = std::max(ymax, scores.at(r, 1));
    }
    const double spanx = xmax - xmin > 1e-12 ? xmax - xmin : 1.0;
    const double spany = ymax - ymin > 1e-12 ? ymax - ymin : 1.0;
    const double W = 640, H = 480, margin = 48;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << "principal component projection</text>\n";
    char buf[160];
    for (std::size_t r = 0; r < scores.rows; ++r) {
        const double px = margin + (scores.at(r, 0) - xmin) / spanx * (W - 2 * margin);
        const double py = H - margin - (scores.at(r, 1) - ymin) / spany * (H - 2 * margin);
        const auto& m = scores.meta[r];
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px,
                      py, kPalette[groups[m.label + " / " + m.origin]]);
        os << buf;
    }
    double ly = 36;
    for (const auto& [key, idx] : groups) {
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"%s\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">%s</text>\n",
                      W - 180.0, ly, kPalette[idx], W - 170.0, ly + 4, key.c_str());
        os << buf;
        ly += 16;
    }
    os << "</svg>\n";

    std::ofstream file(path);
    if (!file) throw PcaError("cannot write scatter SVG: " + path);
    file << os.str();
}

// feature-dump CSV: header "id,label,origin,f0..f{d-1}", one row per sample
inline void save_features_csv(const std::string& path, const FeatureMatrix& f) {
    f.validate();
    if (f.meta.size() != f.rows) throw PcaError("feature dump needs row metadata");
    std::ofstream os(path);
    if (!os) throw PcaError("cannot write feature CSV: " + path);
    os << "id,label,origin";
    for (std::size_t c = 0; c < f.cols; ++c) os << ",f" << c;
    os << "\n";
    char buf[32];
    for (std::size_t r = 0; r < f.rows; ++r) {
        os << f.meta[r].id << ',' << f.meta[r].label << ',' << f.meta[r].origin;
        for (std::size_t c = 0; c < f.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", f.at(r, c));
            os << ',' << buf;
        }
        os << "\n";
    }
}

inline FeatureMatrix load_features_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw PcaError("cannot open feature CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw PcaError("feature CSV is empty: " + path);
    std::size_t cols = 0;
    {
        std::istringstream hs(line);
        std::string cell;
        std::vector<std::string> header;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
        if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "origin")
            throw PcaError("feature CSV header must start id,label,origin,f0..: " + path);
        cols = header.size() - 3;
    }
    FeatureMatrix f;
    f.cols = cols;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        FeatureMeta meta;
        std::getline(ls, meta.id, ',');
        std::getline(ls, meta.label, ',');
        std::getline(ls, meta.origin, ',');
        for (std::size_t c = 0; c < cols; ++c) {
            if (!std::getline(ls, cell, ',')) throw PcaError("short feature row: " + line);
            f.values.push_back(std::stod(cell));
        }
        f.meta.push_back(std::move(meta));
        f.rows++;
    }
    f.validate();
    return f;
}

}  // namespace synthaug
