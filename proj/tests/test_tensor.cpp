#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>

#include "spconv/tensor.hpp"

using namespace spconv;

TEST_CASE("output_shape on known layer geometries") {
    // vgg3_1: 56x56, 3x3 stride 1 same-padding
    {
        const auto sh = conv_shape::make(16, 128, 256, 56, 56, 3, 3, 1, 1);
        CHECK(output_shape(sh) == std::pair{56, 56});
    }
    // resnet3_2/r: 56x56, 3x3 stride 2 feeds the next stage at 28x28
    {
        const auto sh = conv_shape::make(16, 128, 128, 56, 56, 3, 3, 2, 2);
        CHECK(output_shape(sh) == std::pair{28, 28});
    }
    // 1x1 identity geometry
    {
        const auto sh = conv_shape::make(1, 4, 4, 5, 5, 1, 1, 1, 1);
        CHECK(output_shape(sh) == std::pair{5, 5});
        CHECK(sh.padW == 0);
        CHECK(sh.padH == 0);
    }
}

TEST_CASE("shape rejection") {
    // filter larger than the padded image
    CHECK_THROWS_AS(conv_shape::make_padded(1, 1, 1, 2, 2, 5, 5, 1, 1, 1, 1),
                    error);
    CHECK_THROWS_AS(conv_shape::make(0, 1, 1, 4, 4, 1, 1, 1, 1), error);
    CHECK_THROWS_AS(conv_shape::make_padded(1, 1, 1, 4, 4, 3, 3, 1, 1, 3, 1),
                    error); // pad >= R
    CHECK_THROWS_AS(conv_shape::make(1, 1, 1, 4, 4, 3, 3, -1, 1), error);
}

TEST_CASE("affected_outputs examples") {
    {
        const auto sh = conv_shape::make(1, 1, 1, 5, 5, 3, 3, 1, 1);
        const auto got = affected_outputs(sh, 2);
        const std::vector<std::pair<int, int>> want = {{2, 1}, {1, 2}, {0, 3}};
        CHECK(got == want);
    }
    {
        const auto sh = conv_shape::make(1, 1, 1, 5, 5, 3, 3, 2, 2);
        const auto got = affected_outputs(sh, 0);
        const std::vector<std::pair<int, int>> want = {{1, 0}};
        CHECK(got == want);
    }
    {
        const auto sh = conv_shape::make(1, 1, 1, 9, 9, 1, 1, 1, 1);
        for (int x = 0; x < 9; ++x) {
            const auto got = affected_outputs(sh, x);
            REQUIRE(got.size() == 1);
            CHECK(got[0] == std::pair{0, x});
        }
    }
}

TEST_CASE("affected_outputs properties vs brute force") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const int R = 1 + int(rng() % 5);
        const int O = 1 + int(rng() % 3);
        const int pad = int(rng() % R);
        const int W = R + int(rng() % 12);
        conv_shape sh;
        try {
            sh = conv_shape::make_padded(1, 1, 1, W, W, R, R, O, O, pad, pad);
        } catch (const error&) {
            continue;
        }
        const int wp = sh.out_w();
        for (int x = 0; x < W; ++x) {
            const auto got = affected_outputs(sh, x);
            CHECK(int(got.size()) <= (R + O - 1) / O);
            // brute force over all (u, xp)
            std::vector<std::pair<int, int>> want;
            for (int u = R - 1; u >= 0; --u)
                for (int xp = 0; xp < wp; ++xp)
                    if (xp * O + u - pad == x) want.emplace_back(u, xp);
            CHECK(got == want);
            // ascending output column
            for (std::size_t i = 1; i < got.size(); ++i)
                CHECK(got[i - 1].second < got[i].second);
        }
        if (O == 1) {
            // interior columns feed exactly R outputs
            for (int x = R - 1 - pad; x <= W - R + pad && x < W; ++x)
                if (x >= 0)
                    CHECK(affected_outputs(sh, x).size() == std::size_t(R));
        }
    }
}

TEST_CASE("bwi_affected_outputs mirrors the forward relation") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int R = 1 + int(rng() % 5);
        const int O = 1 + int(rng() % 3);
        const int pad = int(rng() % R);
        const int W = R + int(rng() % 12);
        conv_shape sh;
        try {
            sh = conv_shape::make_padded(1, 1, 1, W, W, R, R, O, O, pad, pad);
        } catch (const error&) {
            continue;
        }
        for (int xp = 0; xp < sh.out_w(); ++xp)
            for (const auto& [u, x] : bwi_affected_outputs(sh, xp)) {
                CHECK(x == xp * O + u - pad);
                CHECK(x >= 0);
                CHECK(x < W);
            }
    }
}

namespace {

plain_tensor iota_tensor(int n, int c, int h, int w) {
    plain_tensor t(n, c, h, w);
    std::iota(t.data.begin(), t.data.end(), 0.0f);
    return t;
}

plain_tensor random_tensor(int n, int c, int h, int w, u64 seed) {
    plain_tensor t(n, c, h, w);
    std::mt19937_64 rng(seed);
    for (auto& v : t.data) v = float(int(rng() % 1000)) / 17.0f - 29.0f;
    return t;
}

} // namespace

TEST_CASE("pack identity cases") {
    // 1 x V x 1 x 1 is the identity permutation under ActNCHWc
    const int V = 8;
    const plain_tensor t = iota_tensor(1, V, 1, 1);
    const blocked_tensor b = pack_act_nchwc(t, V);
    CHECK(b.data == t.data);

    // N=V, C=1: ActCHWNn groups the N values contiguously
    const plain_tensor t2 = iota_tensor(V, 1, 1, 1);
    const blocked_tensor b2 = pack_act_chwnn(t2, V);
    CHECK(b2.data == t2.data);
}

TEST_CASE("pack/unpack round-trip is bitwise identity") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const int V = std::vector{4, 8, 16}[rng() % 3];
        const int n = 1 + int(rng() % 4);
        const int c = V * (1 + int(rng() % 3));
        const int h = 1 + int(rng() % 5);
        const int w = 1 + int(rng() % 5);
        const plain_tensor t = random_tensor(n, c, h, w, trial);

        const plain_tensor r1 = unpack(pack_act_nchwc(t, V));
        CHECK(r1.data == t.data);
        const plain_tensor r2 = unpack(pack_act_chwnn(t, V));
        CHECK(r2.data == t.data);

        // filters: (K=n*V? use c for both roles) -- K and C divisible by V
        const plain_tensor g = random_tensor(c, c, h, w, trial + 1000);
        const plain_tensor r3 = unpack(pack_filter(g, V));
        CHECK(r3.data == g.data);
    }
}

TEST_CASE("blocked address functions are bijections") {
    const int V = 4;
    // distinct sentinels must land on distinct offsets covering the data
    const plain_tensor t = iota_tensor(V, 2 * V, 3, 2);
    for (auto layout : {tensor_layout::act_nchwc, tensor_layout::act_chwnn}) {
        const blocked_tensor b = layout == tensor_layout::act_nchwc
                                     ? pack_act_nchwc(t, V)
                                     : pack_act_chwnn(t, V);
        std::vector<float> sorted = b.data;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i)
            CHECK(sorted[i] == float(i));
    }
    const plain_tensor g = iota_tensor(V, V, 3, 5);
    const blocked_tensor fb = pack_filter(g, V);
    std::vector<float> sorted = fb.data;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        CHECK(sorted[i] == float(i));
}

TEST_CASE("chwnn ragged tail lanes are zero") {
    const int V = 8;
    const plain_tensor t = random_tensor(3, 2, 2, 2, 99); // N=3 < V
    const blocked_tensor b = pack_act_chwnn(t, V);
    CHECK(b.data.size() == std::size_t(1) * 2 * 2 * 2 * V);
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                for (int lane = 3; lane < V; ++lane)
                    CHECK(b.data[b.chwnn_index(lane, ch, y, x)] == 0.0f);
    // unpack drops the padding
    CHECK(unpack(b).data == t.data);
}

TEST_CASE("pack rejects non-divisible channels") {
    const plain_tensor t = iota_tensor(1, 6, 2, 2);
    CHECK_THROWS_AS(pack_act_nchwc(t, 4), error);
    CHECK_THROWS_AS(pack_filter(t, 4), error);
}

TEST_CASE("filter pack honors the sweep access order") {
    // innermost K vector, then the C lane, then filter width
    const int V = 4;
    const plain_tensor g = iota_tensor(V, V, 2, 3);
    const blocked_tensor b = pack_filter(g, V);
    const std::size_t base = b.filter_index(0, 0, 0, 1);
    CHECK(b.filter_index(1, 0, 0, 1) == base + 1);        // k lane fastest
    CHECK(b.filter_index(0, 1, 0, 1) == base + V);        // then c lane
    CHECK(b.filter_index(0, 0, 1, 1) == base + V * V);    // then r
}

TEST_CASE("tensor file round-trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "spconv_tensor_test";
    fs::create_directories(dir);

    const plain_tensor t = random_tensor(2, 8, 3, 4, 5);
    save_tensor(dir / "p.tns", t);
    CHECK(fs::file_size(dir / "p.tns") == 64 + t.size() * 4);
    CHECK(load_is_plain(dir / "p.tns"));
    const plain_tensor lt = load_plain_tensor(dir / "p.tns");
    CHECK(lt.n == t.n);
    CHECK(lt.data == t.data);

    const blocked_tensor b = pack_act_nchwc(t, 8);
    save_tensor(dir / "b.tns", b);
    CHECK(!load_is_plain(dir / "b.tns"));
    const blocked_tensor lb = load_blocked_tensor(dir / "b.tns");
    CHECK(lb.layout == b.layout);
    CHECK(lb.V == b.V);
    CHECK(lb.data == b.data);

    const blocked_tensor f = pack_filter(random_tensor(8, 8, 3, 3, 6), 8);
    save_tensor(dir / "f.tns", f);
    const blocked_tensor lf = load_blocked_tensor(dir / "f.tns");
    CHECK(lf.k == 8);
    CHECK(lf.data == f.data);

    // corrupt header is rejected
    {
        std::FILE* fp = std::fopen((dir / "bad.tns").c_str(), "wb");
        const char junk[80] = "not a tensor";
        std::fwrite(junk, 1, sizeof junk, fp);
        std::fclose(fp);
        CHECK_THROWS_AS(load_blocked_tensor(dir / "bad.tns"), error);
    }
    fs::remove_all(dir);
}
