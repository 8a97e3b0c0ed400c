#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "synthaug/checkpoint.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/tensor.hpp"

using namespace synthaug;

TEST_CASE("tensor shape and data length stay consistent") {
    Tensor<float> t({2, 3, 4});
    REQUIRE(t.numel() == 24);
    REQUIRE(t.rank() == 3);
    REQUIRE_THROWS_AS(Tensor<float>({2, 0, 4}), ShapeError);
    REQUIRE_THROWS_AS((Tensor<float>({2, 2}, {1.f, 2.f, 3.f})), ShapeError);
    REQUIRE_THROWS_AS(t.reshaped({5, 5}), ShapeError);
    Tensor<float> r = t.reshaped({4, 6});
    REQUIRE(r.dim(0) == 4);
    REQUIRE(r.numel() == t.numel());
}

TEST_CASE("rng streams are reproducible and seed derivation separates stages") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    REQUIRE(derive_seed(7, "gan") != derive_seed(7, "classifier"));
    REQUIRE(derive_seed(7, "gan", 0) != derive_seed(7, "gan", 1));
    REQUIRE(derive_seed(7, "gan", 3) == derive_seed(7, "gan", 3));

    Rng n(9);
    double sum = 0, sq = 0;
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
        double v = n.normal();
        sum += v;
        sq += v * v;
    }
    REQUIRE(std::abs(sum / count) < 0.05);
    REQUIRE(std::abs(sq / count - 1.0) < 0.05);
}

TEST_CASE("rng uniform_index covers the range without excursions") {
    Rng r(11);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) {
        auto k = r.uniform_index(5);
        REQUIRE(k < 5);
        counts[k]++;
    }
    for (int c : counts) REQUIRE(c > 800);
}

TEST_CASE("CGW1 checkpoints round-trip bit-exactly") {
    auto dir = std::filesystem::temp_directory_path() / "synthaug_cgw1_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "t.cgw1").string();

    Rng rng(3);
    NamedTensors tensors;
    Tensor<float> a({3, 4});
    fill_normal(a, rng);
    Tensor<float> b({2, 2, 2, 5});
    fill_normal(b, rng);
    tensors.emplace_back("layer0.weight", a);
    tensors.emplace_back("layer0.bias", b);

    save_cgw1(path, tensors);
    NamedTensors back = load_cgw1(path);
    REQUIRE(back.size() == 2);
    REQUIRE(back[0].first == "layer0.weight");
    REQUIRE(back[1].first == "layer0.bias");
    REQUIRE(bitwise_equal(back[0].second, a));
    REQUIRE(bitwise_equal(back[1].second, b));

    SECTION("empty container round-trips") {
        save_cgw1(path, {});
        REQUIRE(load_cgw1(path).empty());
    }

    SECTION("wrong magic is rejected") {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE1234";
        os.close();
        REQUIRE_THROWS_AS(load_cgw1(path), FormatError);
    }

    SECTION("truncation is rejected") {
        save_cgw1(path, tensors);
        auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size - 7);
        REQUIRE_THROWS_AS(load_cgw1(path), FormatError);
    }
}

TEST_CASE("CGW1 byte layout matches the specification") {
    auto dir = std::filesystem::temp_directory_path() / "synthaug_cgw1_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "layout.cgw1").string();
    Tensor<float> t({2}, {1.0f, -2.0f});
    save_cgw1(path, {{"ab", t}});

    std::ifstream is(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
    // magic, count=1, namelen=2, "ab", rank=1, dim=2, then 8 bytes of f32
    const std::vector<unsigned char> head = {'C', 'G', 'W', '1', 1, 0, 0, 0, 2, 0,
                                             'a', 'b', 1,   2,  0, 0, 0};
    REQUIRE(bytes.size() == head.size() + 8);
    REQUIRE(std::equal(head.begin(), head.end(), bytes.begin()));
    float vals[2];
    std::memcpy(vals, bytes.data() + head.size(), 8);
    REQUIRE(vals[0] == 1.0f);
    REQUIRE(vals[1] == -2.0f);
}
