#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "synthaug/datapipe.hpp"

using namespace synthaug;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "synthaug_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("png: gray and rgb images round-trip bit-exactly") {
    auto dir = fresh_dir("png");
    Rng rng(1);
    for (std::size_t channels : {std::size_t(1), std::size_t(3)}) {
        Image8 img(13, 9, channels);
        for (auto& p : img.pixels) p = std::uint8_t(rng.uniform_index(256));
        const std::string path = (dir / ("img" + std::to_string(channels) + ".png")).string();
        save_png(path, img);
        Image8 back = load_png(path);
        REQUIRE(back.height == img.height);
        REQUIRE(back.width == img.width);
        REQUIRE(back.channels == img.channels);
        REQUIRE(back.pixels == img.pixels);
    }
    REQUIRE_THROWS_AS(load_png((dir / "missing.png").string()), ImageError);
    std::ofstream bad(dir / "bad.png");
    bad << "this is not a png";
    bad.close();
    REQUIRE_THROWS_AS(load_png((dir / "bad.png").string()), ImageError);
}

TEST_CASE("average hash: half-black half-white 8x8 image gives the hand pattern") {
    Image8 img(8, 8, 1);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) img.at(y, x, 0) = x < 4 ? 0 : 255;
    // mean 127.5; the right half exceeds it -> per row the low nibble is set
    const std::uint64_t hash = average_hash(img);
    REQUIRE(hash == 0x0F0F0F0F0F0F0F0Full);
    REQUIRE(__builtin_popcountll(hash) == 32);
}

TEST_CASE("average hash: stable under recomputation, differs across toy classes") {
    auto disc = toy_template(32, 0);
    auto cross = toy_template(32, 1);
    REQUIRE(average_hash(disc) == average_hash(disc));
    REQUIRE(average_hash(disc) != average_hash(cross));
    REQUIRE(hamming_distance(average_hash(disc), average_hash(disc)) == 0);
}

TEST_CASE("ingest: valid manifest loads with labels; missing path names the file") {
    auto dir = fresh_dir("ingest");
    DatasetManifest m;
    Rng rng(2);
    for (int i = 0; i < 3; ++i) {
        Image8 img(8, 8, 1);
        for (auto& p : img.pixels) p = std::uint8_t(rng.uniform_index(256));
        const std::string name = "img" + std::to_string(i) + ".png";
        save_png((dir / name).string(), img);
        m.entries.push_back({name, std::size_t(i % 2), "testset"});
    }
    IngestReport report;
    auto records = ingest(m, dir.string(), &report);
    REQUIRE(records.size() == 3);
    REQUIRE(records[0].label == 0);
    REQUIRE(records[1].label == 1);
    REQUIRE(records[2].label == 0);
    REQUIRE(report.class_counts[0] == 2);
    REQUIRE(report.class_counts[1] == 1);

    m.entries.push_back({"not_there.png", 0, "testset"});
    try {
        ingest(m, dir.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(std::string(e.what()).find("not_there.png") != std::string::npos);
    }
}

TEST_CASE("ingest: reference-corpus class counts 403 and 721 surface in the report") {
    auto dir = fresh_dir("refcorpus");
    DatasetManifest m;
    Image8 covid(8, 8, 1, 40), normal(8, 8, 1, 200);
    save_png((dir / "covid.png").string(), covid);
    save_png((dir / "normal.png").string(), normal);
    for (int i = 0; i < 403; ++i) m.entries.push_back({"covid.png", 0, "ref"});
    for (int i = 0; i < 721; ++i) m.entries.push_back({"normal.png", 1, "ref"});
    IngestReport report;
    // duplicate paths are fine here: ingest does not enforce manifest invariants
    ingest(m, dir.string(), &report);
    REQUIRE(report.total == 1124);
    REQUIRE(report.class_counts[0] == 403);
    REQUIRE(report.class_counts[1] == 721);
}

TEST_CASE("manifest: json round-trip and validation") {
    auto dir = fresh_dir("manifest");
    DatasetManifest m;
    m.entries.push_back({"a.png", 0, "src1"});
    m.entries.push_back({"b.png", 1, "src2"});
    const std::string path = (dir / "manifest.json").string();
    save_manifest(path, m);
    auto back = load_manifest(path);
    REQUIRE(back.entries.size() == 2);
    REQUIRE(back.entries[0].path == "a.png");
    REQUIRE(back.entries[0].label == 0);
    REQUIRE(back.entries[1].label == 1);
    REQUIRE(back.entries[1].source == "src2");
    auto counts = back.class_counts();
    REQUIRE(counts[0] == 1);
    REQUIRE(counts[1] == 1);

    std::ofstream os(dir / "dup.json");
    os << R"([{"path":"x.png","label":"COVID-CXR","source":"s"},)"
       << R"({"path":"x.png","label":"Normal-CXR","source":"s"}])";
    os.close();
    REQUIRE_THROWS_AS(load_manifest((dir / "dup.json").string()), DataError);

    std::ofstream os2(dir / "badlabel.json");
    os2 << R"([{"path":"x.png","label":"Viral-Pneumonia","source":"s"}])";
    os2.close();
    REQUIRE_THROWS_AS(load_manifest((dir / "badlabel.json").string()), DataError);
}

TEST_CASE("dedup: byte-identical duplicate is removed, first occurrence wins") {
    auto corpus = gen_toy_corpus({32, 3, 0.2, 5});
    std::vector<ImageRecord> records = corpus;
    ImageRecord dup = corpus[1];
    dup.id = "copy-of-1";
    records.push_back(dup);

    std::vector<DedupRemoval> removals;
    auto kept = dedup(records, 0, &removals);
    REQUIRE(kept.size() == corpus.size());
    REQUIRE(removals.size() == 1);
    REQUIRE(removals[0].kept == corpus[1].id);
    REQUIRE(removals[0].removed == "copy-of-1");
    REQUIRE(removals[0].hamming == 0);
}

TEST_CASE("dedup: visually distinct toy classes survive threshold 0") {
    auto corpus = gen_toy_corpus({32, 10, 0.15, 6});
    std::vector<DedupRemoval> removals;
    auto kept = dedup(corpus, 0, &removals);
    REQUIRE(kept.size() == corpus.size());
    REQUIRE(removals.empty());
}

TEST_CASE("dedup is idempotent for any threshold") {
    auto corpus = gen_toy_corpus({32, 8, 0.3, 7});
    // plant some duplicates
    corpus.push_back(corpus[0]);
    corpus.back().id = "dup0";
    corpus.push_back(corpus[5]);
    corpus.back().id = "dup5";
    for (int threshold : {0, 2, 8, 40}) {
        auto once = dedup(corpus, threshold);
        auto twice = dedup(once, threshold);
        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) REQUIRE(once[i].id == twice[i].id);
    }
}

TEST_CASE("preprocess: extreme values hit the range endpoints exactly") {
    ImageRecord white, black;
    white.pixels = Image8(10, 10, 1, 255);
    black.pixels = Image8(10, 10, 3, 0);
    auto unit = preprocess({white}, 8, 8, PixelRange::Unit);
    REQUIRE(unit.shape() == Shape{1, 8, 8, 3});
    for (std::size_t i = 0; i < unit.numel(); ++i) REQUIRE(unit[i] == 1.0f);
    auto sym = preprocess({black}, 8, 8, PixelRange::Symmetric);
    for (std::size_t i = 0; i < sym.numel(); ++i) REQUIRE(sym[i] == -1.0f);
}

TEST_CASE("preprocess: 224x224 input lands at 112x112x3 and ranges hold") {
    ImageRecord rec;
    rec.pixels = Image8(224, 224, 1);
    Rng rng(8);
    for (auto& p : rec.pixels.pixels) p = std::uint8_t(rng.uniform_index(256));
    auto unit = preprocess({rec}, 112, 112, PixelRange::Unit);
    REQUIRE(unit.shape() == Shape{1, 112, 112, 3});
    auto sym = preprocess({rec}, 112, 112, PixelRange::Symmetric);
    for (std::size_t i = 0; i < unit.numel(); ++i) {
        REQUIRE(unit[i] >= 0.0f);
        REQUIRE(unit[i] <= 1.0f);
        REQUIRE(sym[i] >= -1.0f);
        REQUIRE(sym[i] <= 1.0f);
    }
    // grayscale replicated into all three channels
    for (std::size_t p = 0; p < 112 * 112; ++p) {
        REQUIRE(unit[p * 3] == unit[p * 3 + 1]);
        REQUIRE(unit[p * 3] == unit[p * 3 + 2]);
    }
}

TEST_CASE("split: reference corpus counts 72/120 leave train at 331/601") {
    auto disc = toy_template(16, 0);
    std::vector<ImageRecord> records;
    for (int i = 0; i < 403; ++i)
        records.push_back({"c" + std::to_string(i), "ref", disc, 0, 0});
    for (int i = 0; i < 721; ++i)
        records.push_back({"n" + std::to_string(i), "ref", disc, 1, 0});

    auto spec = split_counts(records, {72, 120}, 11);
    REQUIRE(spec.test_ids.size() == 192);
    REQUIRE(spec.train_ids.size() == 932);
    std::array<std::size_t, 2> train_counts{}, test_counts{};
    std::set<std::string> train_set(spec.train_ids.begin(), spec.train_ids.end());
    for (const auto& r : records)
        (train_set.count(r.id) ? train_counts : test_counts)[r.label]++;
    REQUIRE(train_counts[0] == 331);
    REQUIRE(train_counts[1] == 601);
    REQUIRE(test_counts[0] == 72);
    REQUIRE(test_counts[1] == 120);
}

TEST_CASE("split: fractional stratification is exact on balanced toy data") {
    auto records = gen_toy_corpus({16, 10, 0.0, 3});
    auto spec = split(records, 0.2, 21);
    REQUIRE(spec.test_ids.size() == 4);
    REQUIRE(spec.train_ids.size() == 16);
    std::array<std::size_t, 2> test_counts{};
    std::set<std::string> test_set(spec.test_ids.begin(), spec.test_ids.end());
    for (const auto& r : records)
        if (test_set.count(r.id)) test_counts[r.label]++;
    REQUIRE(test_counts[0] == 2);
    REQUIRE(test_counts[1] == 2);
}

TEST_CASE("split: deterministic per seed, exact partition, no overlap") {
    auto records = gen_toy_corpus({16, 13, 0.4, 9});
    auto a = split(records, 0.3, 77);
    auto b = split(records, 0.3, 77);
    REQUIRE(a.train_ids == b.train_ids);
    REQUIRE(a.test_ids == b.test_ids);

    auto c = split(records, 0.3, 78);
    REQUIRE(a.test_ids != c.test_ids);

    std::set<std::string> all;
    for (const auto& id : a.train_ids) all.insert(id);
    for (const auto& id : a.test_ids) all.insert(id);
    REQUIRE(all.size() == records.size());
    REQUIRE(a.train_ids.size() + a.test_ids.size() == records.size());
}

TEST_CASE("split: undersized classes are rejected") {
    std::vector<ImageRecord> records;
    records.push_back({"only", "t", toy_template(16, 0), 0, 0});
    records.push_back({"n0", "t", toy_template(16, 1), 1, 0});
    records.push_back({"n1", "t", toy_template(16, 1), 1, 0});
    REQUIRE_THROWS_AS(split(records, 0.5, 1), DataError);
    REQUIRE_THROWS_AS(split(records, 0.0, 1), DataError);
    REQUIRE_THROWS_AS(split(records, 1.0, 1), DataError);
}

TEST_CASE("toy corpus: counts, determinism and separability") {
    ToyCorpusSpec spec{32, 50, 0.0, 123};
    auto corpus = gen_toy_corpus(spec);
    REQUIRE(corpus.size() == 100);
    std::array<std::size_t, 2> counts{};
    for (const auto& r : corpus) counts[r.label]++;
    REQUIRE(counts[0] == 50);
    REQUIRE(counts[1] == 50);

    SECTION("noiseless corpus is separated perfectly by template matching") {
        const auto t0 = toy_template(32, 0);
        const auto t1 = toy_template(32, 1);
        auto score = [](const Image8& img, const Image8& tmpl) {
            double s = 0;
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                s += (double(img.pixels[i]) - 128.0) * (double(tmpl.pixels[i]) - 128.0);
            return s;
        };
        for (const auto& r : corpus) {
            const std::size_t predicted = score(r.pixels, t0) >= score(r.pixels, t1) ? 0 : 1;
            REQUIRE(predicted == r.label);
        }
    }

    SECTION("fixed seed reproduces a byte-identical corpus") {
        ToyCorpusSpec noisy{32, 20, 0.1, 99};
        auto a = gen_toy_corpus(noisy);
        auto b = gen_toy_corpus(noisy);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].pixels.pixels == b[i].pixels.pixels);
            REQUIRE(a[i].hash64 == b[i].hash64);
        }
        auto c = gen_toy_corpus({32, 20, 0.1, 100});
        bool all_same = true;
        for (std::size_t i = 0; i < a.size(); ++i)
            all_same = all_same && a[i].pixels.pixels == c[i].pixels.pixels;
        REQUIRE_FALSE(all_same);
    }

    SECTION("invalid specs are rejected") {
        REQUIRE_THROWS_AS(gen_toy_corpus({8, 10, 0.0, 1}), DataError);
        REQUIRE_THROWS_AS(gen_toy_corpus({32, 10, 1.5, 1}), DataError);
    }
}

TEST_CASE("export_records writes decodable PNGs and a loadable manifest") {
    auto dir = fresh_dir("export");
    auto corpus = gen_toy_corpus({16, 4, 0.05, 2});
    auto manifest = export_records(corpus, dir.string());
    REQUIRE(manifest.entries.size() == 8);
    auto loaded = load_manifest((dir / "manifest.json").string());
    IngestReport report;
    auto records = ingest(loaded, dir.string(), &report);
    REQUIRE(report.class_counts[0] == 4);
    REQUIRE(report.class_counts[1] == 4);
    for (std::size_t i = 0; i < records.size(); ++i) {
        REQUIRE(records[i].pixels.pixels == corpus[i].pixels.pixels);
        REQUIRE(records[i].hash64 == corpus[i].hash64);
    }
}
