#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "spconv/kernels.hpp"
#include "spconv/vec.hpp"

using namespace spconv;

namespace {

template <int V>
lane_mask scalar_cmp(const float* v) {
    return scalar_backend<V>::cmp_neq_zero(scalar_backend<V>::load(v));
}

// Collect the lanes the popcount/trailing-zeros loop visits.
std::vector<int> iterate_lanes(lane_mask m) {
    std::vector<int> seen;
    for_each_set_lane(m, [&](int lane) { seen.push_back(lane); });
    return seen;
}

std::vector<int> set_bits(lane_mask m, int V) {
    std::vector<int> out;
    for (int i = 0; i < V; ++i)
        if (m & (lane_mask(1) << i)) out.push_back(i);
    return out;
}

} // namespace

TEST_CASE("cmp_neq_zero bit placement") {
    {
        const float v[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        CHECK(scalar_cmp<8>(v) == 0b00000000);
    }
    {
        const float v[8] = {0, 2, 0, 0, 5, 0, 7, 0};
        CHECK(scalar_cmp<8>(v) == 0b01010010);
    }
    {
        const float v[4] = {-0.0f, 1e-30f, -3.5f, 0.0f};
        CHECK(scalar_cmp<4>(v) == 0b0110);
    }
    {
        // NaN and Inf lanes count as non-zero
        const float v[4] = {std::numeric_limits<float>::quiet_NaN(), 0.0f,
                            std::numeric_limits<float>::infinity(), -0.0f};
        CHECK(scalar_cmp<4>(v) == 0b0101);
    }
}

TEST_CASE("mask primitives") {
    CHECK(mask_popcount(0b01010010) == 3);
    CHECK(mask_popcount(0b0000) == 0);
    CHECK(mask_popcount(0xFFFF) == 16);

    CHECK(mask_trailing_zeros(0b01010010) == 1);
    CHECK(mask_trailing_zeros(0b1000) == 3);
    CHECK(mask_trailing_zeros(0b0001) == 0);

    CHECK(mask_shift_consume(0b01010010, 1) == 0b00010100);
    CHECK(mask_shift_consume(0b1000, 3) == 0b0000);
    CHECK(mask_shift_consume(0b0101, 0) == 0b0010);
}

TEST_CASE("iteration visits set lanes ascending: exhaustive V=8") {
    for (lane_mask m = 0; m < 256; ++m)
        CHECK(iterate_lanes(m) == set_bits(m, 8));
}

TEST_CASE("iteration visits set lanes ascending: sampled V=16") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100000; ++t) {
        const lane_mask m = lane_mask(rng()) & 0xFFFF;
        const auto got = iterate_lanes(m);
        if (got != set_bits(m, 16)) {
            REQUIRE(got == set_bits(m, 16)); // report the failing mask once
        }
    }
    CHECK(true);
}

TEST_CASE("broadcast_fma basics (scalar backend)") {
    using vb = scalar_backend<4>;
    float acc[4] = {1, 1, 1, 1};
    const float w[4] = {1, 2, 3, 4};
    vb::store(acc, broadcast_fma<vb>(vb::load(acc), 2.0f, vb::load(w)));
    CHECK(acc[0] == 3.0f);
    CHECK(acc[1] == 5.0f);
    CHECK(acc[2] == 7.0f);
    CHECK(acc[3] == 9.0f);

    // scalar 0 leaves the accumulator numerically unchanged
    float acc2[4] = {-1.5f, 0.0f, 3.25f, 1e-20f};
    const float w2[4] = {7, -8, 9, 1e30f};
    vb::store(acc2, broadcast_fma<vb>(vb::load(acc2), 0.0f, vb::load(w2)));
    CHECK(acc2[0] == -1.5f);
    CHECK(acc2[1] == 0.0f);
    CHECK(acc2[2] == 3.25f);
    CHECK(acc2[3] == 1e-20f);

    using vb2 = scalar_backend<4>;
    float acc3[4] = {0, 0, 0, 0};
    const float w3[4] = {4, -4, 0, 0};
    vb2::store(acc3, broadcast_fma<vb2>(vb2::load(acc3), 0.5f, vb2::load(w3)));
    CHECK(acc3[0] == 2.0f);
    CHECK(acc3[1] == -2.0f);
}

TEST_CASE("SIMD backends agree with scalar emulation") {
    std::mt19937_64 rng(11);
    for (int V : {4, 8, 16}) {
        const auto probes = vector_probes(V);
        REQUIRE(!probes.empty());
        REQUIRE(probes.front().name.substr(0, 6) == "scalar");
        for (int t = 0; t < 2000; ++t) {
            std::vector<float> v(V), w(V), acc(V);
            for (int i = 0; i < V; ++i) {
                switch (rng() % 8) {
                case 0: v[i] = 0.0f; break;
                case 1: v[i] = -0.0f; break;
                case 2: v[i] = 1e-38f; break; // denormal-adjacent
                case 3: v[i] = std::numeric_limits<float>::quiet_NaN(); break;
                default:
                    v[i] = float(int(rng() % 2001) - 1000) / 64.0f;
                }
                w[i] = float(int(rng() % 2001) - 1000) / 128.0f;
                acc[i] = float(int(rng() % 2001) - 1000) / 32.0f;
            }
            const float s = float(int(rng() % 41) - 20) / 8.0f;

            const lane_mask ref_mask = probes.front().cmp_neq_zero(v.data());
            std::vector<float> ref_acc = acc;
            probes.front().broadcast_fma(ref_acc.data(), s, w.data());
            std::vector<float> ref_add = acc;
            probes.front().add(ref_add.data(), w.data());

            for (std::size_t p = 1; p < probes.size(); ++p) {
                CHECK(probes[p].cmp_neq_zero(v.data()) == ref_mask);
                std::vector<float> got = acc;
                probes[p].broadcast_fma(got.data(), s, w.data());
                for (int i = 0; i < V; ++i) {
                    if (std::isnan(ref_acc[i])) {
                        CHECK(std::isnan(got[i]));
                    } else {
                        // fused vs separate rounding may differ by one ulp
                        CHECK(got[i]
                              == doctest::Approx(ref_acc[i]).epsilon(1e-6));
                    }
                }
                std::vector<float> got_add = acc;
                probes[p].add(got_add.data(), w.data());
                for (int i = 0; i < V; ++i)
                    CHECK(got_add[i] == ref_add[i]);
            }
        }
    }
}

TEST_CASE("vector width validation") {
    CHECK(valid_vector_width(4));
    CHECK(valid_vector_width(8));
    CHECK(valid_vector_width(16));
    CHECK(!valid_vector_width(2));
    CHECK(!valid_vector_width(12));
    CHECK(!valid_vector_width(32));
    CHECK(full_mask(4) == 0xF);
    CHECK(full_mask(16) == 0xFFFF);
}
