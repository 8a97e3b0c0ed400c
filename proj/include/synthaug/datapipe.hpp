// Dataset plumbing: manifest ingestion, hash deduplication, preprocessing
// to network tensors, stratified splits and the procedural toy corpus that
// stands in for the radiograph data at desk scale.
#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthaug/image.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/tensor.hpp"

namespace synthaug {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// class 0 is the positive (COVID) class; the toy corpus aliases them
inline constexpr std::size_t kNumClasses = 2;
inline constexpr const char* kClassNames[kNumClasses] = {"COVID-CXR", "Normal-CXR"};

inline std::size_t parse_label(const std::string& s) {
    if (s == "COVID-CXR" || s == "class0") return 0;
    if (s == "Normal-CXR" || s == "class1") return 1;
    throw DataError("unknown label string: \"" + s + "\"");
}

inline const char* label_name(std::size_t label) {
    if (label >= kNumClasses) throw DataError("label index out of range");
    return kClassNames[label];
}

struct ImageRecord {
    std::string id;      // stable unique string
    std::string source;  // origin tag, e.g. dataset name or "toy" / "synthetic"
    Image8 pixels;
    std::size_t label = 0;
    std::uint64_t hash64 = 0;
};

struct ManifestEntry {
    std::string path;
    std::size_t label = 0;
    std::string source;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::array<std::size_t, kNumClasses> class_counts() const {
        std::array<std::size_t, kNumClasses> counts{};
        for (const auto& e : entries) counts[e.label]++;
        return counts;
    }
};

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_array()) throw DataError("manifest " + path + " must be a JSON array");
    DatasetManifest m;
    for (const auto& item : j) {
        ManifestEntry e;
        e.path = item.at("path").get<std::string>();
        e.label = parse_label(item.at("label").get<std::string>());
        e.source = item.value("source", std::string("unknown"));
        m.entries.push_back(std::move(e));
    }
    std::vector<std::string> paths;
    for (const auto& e : m.entries) paths.push_back(e.path);
    std::sort(paths.begin(), paths.end());
    if (std::adjacent_find(paths.begin(), paths.end()) != paths.end())
        throw DataError("manifest " + path + " contains duplicate paths");
    return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : m.entries)
        j.push_back({{"path", e.path}, {"label", label_name(e.label)}, {"source", e.source}});
    std::ofstream os(path);
    if (!os) throw DataError("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

struct IngestReport {
    std::array<std::size_t, kNumClasses> class_counts{};
    std::size_t total = 0;
};

// Load every manifest entry; relative paths resolve against base_dir.
inline std::vector<ImageRecord> ingest(const DatasetManifest& manifest, const std::string& base_dir,
                                       IngestReport* report = nullptr) {
    std::vector<ImageRecord> records;
    records.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        ImageRecord rec;
        try {
            rec.pixels = load_png(p.string());
        } catch (const ImageError& err) {
            throw DataError(std::string("ingest failed for \"") + e.path + "\": " + err.what());
        }
        rec.id = e.path;
        rec.source = e.source;
        rec.label = e.label;
        rec.hash64 = average_hash(rec.pixels);
        records.push_back(std::move(rec));
    }
    if (report) {
        report->total = records.size();
        report->class_counts = {};
        for (const auto& r : records) report->class_counts[r.label]++;
    }
    return records;
}

// -- dedup --------------------------------------------------------------------

struct DedupRemoval {
    std::string kept;
    std::string removed;
    int hamming = 0;
};

// First occurrence in manifest order wins; anything within the Hamming
// threshold of an already-kept record is dropped.
inline std::vector<ImageRecord> dedup(const std::vector<ImageRecord>& records, int hamming_threshold,
                                      std::vector<DedupRemoval>* removals = nullptr) {
    if (hamming_threshold < 0) throw DataError("hamming threshold must be >= 0");
    std::vector<ImageRecord> kept;
    for (const auto& r : records) {
        const ImageRecord* dup = nullptr;
        for (const auto& k : kept)
            if (hamming_distance(k.hash64, r.hash64) <= hamming_threshold) {
                dup = &k;
                break;
            }
        if (dup) {
            if (removals) removals->push_back({dup->id, r.id, hamming_distance(dup->hash64, r.hash64)});
        } else {
            kept.push_back(r);
        }
    }
    return kept;
}

inline void save_dedup_report(const std::string& path, const std::vector<DedupRemoval>& removals) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : removals)
        j.push_back({{"kept", r.kept}, {"removed", r.removed}, {"hamming", r.hamming}});
    std::ofstream os(path);
    if (!os) throw DataError("cannot write dedup report: " + path);
    os << j.dump(2) << "\n";
}

// -- preprocessing --------------------------------------------------------------

enum class PixelRange { Unit, Symmetric };  // [0,1] or [-1,1]

// Bilinear resize to (h,w), grayscale replicated to 3 channels, rescaled.
inline Tensor<float> preprocess(const std::vector<ImageRecord>& records, std::size_t h, std::size_t w,
                                PixelRange range) {
    if (h == 0 || w == 0) throw DataError("preprocess: target dimensions must be positive");
    if (records.empty()) throw DataError("preprocess: no records given");
    Tensor<float> out({records.size(), h, w, 3});
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Image8& img = records[i].pixels;
        std::vector<float> src(img.pixels.begin(), img.pixels.end());
        std::vector<float> resized =
            resize_bilinear(src, img.height, img.width, img.channels, h, w);
        for (std::size_t p = 0; p < h * w; ++p) {
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = img.channels == 1 ? resized[p] : resized[p * 3 + c];
                out[(i * h * w + p) * 3 + c] =
                    range == PixelRange::Unit ? v / 255.0f : v / 127.5f - 1.0f;
            }
        }
    }
    return out;
}

// -- splits ----------------------------------------------------------------------

struct SplitSpec {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
    bool stratified = true;
};

namespace detail_split {

inline SplitSpec split_with_counts(const std::vector<ImageRecord>& records,
                                   const std::array<std::size_t, kNumClasses>& test_counts,
                                   std::uint64_t seed) {
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);

    SplitSpec spec;
    spec.seed = seed;
    std::vector<bool> is_test(records.size(), false);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < 2)
            throw DataError(std::string("cannot split class ") + label_name(c) +
                            " with fewer than 2 samples");
        if (test_counts[c] == 0 || test_counts[c] >= idx.size())
            throw DataError(std::string("test count for class ") + label_name(c) +
                            " must leave at least one sample on each side");
        Rng rng(derive_seed(seed, "split", c));
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t i = 0; i < test_counts[c]; ++i) is_test[idx[i]] = true;
    }
    for (std::size_t i = 0; i < records.size(); ++i)
        (is_test[i] ? spec.test_ids : spec.train_ids).push_back(records[i].id);
    return spec;
}

}  // namespace detail_split

// Stratified split: per class, round(n_c * test_fraction) samples go to test.
inline SplitSpec split(const std::vector<ImageRecord>& records, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw DataError("test_fraction must lie strictly between 0 and 1");
    std::array<std::size_t, kNumClasses> counts{}, test_counts{};
    for (const auto& r : records) counts[r.label]++;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (counts[c] == 0) continue;
        if (counts[c] < 2)
            throw DataError(std::string("cannot split class ") + label_name(c) +
                            " with fewer than 2 samples");
        std::size_t k = std::size_t(std::llround(double(counts[c]) * test_fraction));
        k = std::min(std::max<std::size_t>(k, 1), counts[c] - 1);
        test_counts[c] = k;
    }
    return detail_split::split_with_counts(records, test_counts, seed);
}

// Stratified split with explicit per-class test counts (the reference corpus
// split 72/120 is not reachable from any single fraction).
inline SplitSpec split_counts(const std::vector<ImageRecord>& records,
                              const std::array<std::size_t, kNumClasses>& test_counts,
                              std::uint64_t seed) {
    return detail_split::split_with_counts(records, test_counts, seed);
}

inline void save_split(const std::string& path, const SplitSpec& s) {
    nlohmann::json j{{"train", s.train_ids},
                     {"test", s.test_ids},
                     {"seed", s.seed},
                     {"stratified", s.stratified}};
    std::ofstream os(path);
    if (!os) throw DataError("cannot write split file: " + path);
    os << j.dump(2) << "\n";
}

inline SplitSpec load_split(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open split file: " + path);
    nlohmann::json j;
    is >> j;
    SplitSpec s;
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.stratified = j.value("stratified", true);
    return s;
}

// -- toy corpus --------------------------------------------------------------------

struct ToyCorpusSpec {
    std::size_t resolution = 32;
    std::size_t per_class = 50;
    double noise = 0.1;  // sigma in [0,1], scaled by 255 in pixel units
    std::uint64_t seed = 0;
};

// class 0: filled centered disc, radius 0.3 * min extent
// class 1: full-width diagonal cross with 3-pixel strokes
// both on mid-gray background with additive Gaussian noise, clamped to [0,255]
inline Image8 toy_template(std::size_t resolution, std::size_t label) {
    Image8 img(resolution, resolution, 1, 128);
    const double n = double(resolution);
    if (label == 0) {
        const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
        const double radius = 0.3 * n;
        for (std::size_t y = 0; y < resolution; ++y)
            for (std::size_t x = 0; x < resolution; ++x) {
                const double dx = double(x) - cx, dy = double(y) - cy;
                if (dx * dx + dy * dy <= radius * radius) img.at(y, x, 0) = 255;
            }
    } else {
        const double half_stroke = 1.5;
        for (std::size_t y = 0; y < resolution; ++y)
            for (std::size_t x = 0; x < resolution; ++x) {
                const double d_main = std::abs(double(y) - double(x)) / std::sqrt(2.0);
                const double d_anti = std::abs(double(y) + double(x) - (n - 1)) / std::sqrt(2.0);
                if (d_main <= half_stroke || d_anti <= half_stroke) img.at(y, x, 0) = 255;
            }
    }
    return img;
}

inline std::vector<ImageRecord> gen_toy_corpus(const ToyCorpusSpec& spec) {
    if (spec.resolution < 16) throw DataError("toy corpus resolution must be at least 16");
    if (spec.noise < 0.0 || spec.noise > 1.0) throw DataError("toy corpus noise must be in [0,1]");
    std::vector<ImageRecord> records;
    records.reserve(spec.per_class * kNumClasses);
    for (std::size_t label = 0; label < kNumClasses; ++label) {
        const Image8 base = toy_template(spec.resolution, label);
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            ImageRecord rec;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "toy-class%zu-%04zu.png", label, i);
            rec.id = buf;
            rec.source = "toy";
            rec.label = label;
            rec.pixels = base;
            if (spec.noise > 0.0) {
                Rng rng(derive_seed(spec.seed, "toy", label * spec.per_class + i));
                for (auto& px : rec.pixels.pixels) {
                    const double v = double(px) + rng.normal(0.0, spec.noise * 255.0);
                    px = std::uint8_t(std::clamp(v, 0.0, 255.0) + 0.5);
                }
            }
            rec.hash64 = average_hash(rec.pixels);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// Write records as PNG files plus a manifest; returns the manifest.
inline DatasetManifest export_records(const std::vector<ImageRecord>& records, const std::string& dir,
                                      const std::string& manifest_name = "manifest.json") {
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    for (const auto& r : records) {
        const std::string file = r.id;
        save_png((std::filesystem::path(dir) / file).string(), r.pixels);
        m.entries.push_back({file, r.label, r.source});
    }
    save_manifest((std::filesystem::path(dir) / manifest_name).string(), m);
    return m;
}

}  // namespace synthaug
