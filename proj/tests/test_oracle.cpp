#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "spconv/oracle.hpp"
#include "spconv/sparsity.hpp"
#include "testutil.hpp"

using namespace spconv;

TEST_CASE("dense_fwd: all-ones 3x3 same-padding counts overlaps") {
    const auto sh = conv_shape::make(1, 1, 1, 3, 3, 3, 3, 1, 1);
    plain_tensor D(1, 1, 3, 3), G(1, 1, 3, 3);
    for (auto& v : D.data) v = 1.0f;
    for (auto& v : G.data) v = 1.0f;
    const plain_tensor Y = dense_fwd(D, G, sh);
    const float want[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int e = 0; e < 9; ++e) CHECK(Y.data[e] == want[e]);
}

TEST_CASE("dense_fwd: center-delta filter is the identity") {
    const auto sh = conv_shape::make(2, 3, 3, 4, 5, 3, 3, 1, 1);
    const plain_tensor D = gen_sparse(2, 3, 4, 5, 0.2, 42);
    plain_tensor G(3, 3, 3, 3);
    for (int k = 0; k < 3; ++k) G.at(k, k, 1, 1) = 1.0f;
    const plain_tensor Y = dense_fwd(D, G, sh);
    CHECK(Y.data == D.data);
}

TEST_CASE("dense_fwd: zero input gives zero output") {
    const auto sh = conv_shape::make(1, 2, 2, 4, 4, 3, 3, 1, 1);
    const plain_tensor D(1, 2, 4, 4);
    const plain_tensor G = gen_sparse(2, 2, 3, 3, 0.0, 1);
    const plain_tensor Y = dense_fwd(D, G, sh);
    for (float v : Y.data) CHECK(v == 0.0f);
}

TEST_CASE("dense_bwi: 1x1 conv is a channel matmul per pixel") {
    const auto sh = conv_shape::make(1, 3, 2, 2, 2, 1, 1, 1, 1);
    const plain_tensor dY = gen_sparse(1, 2, 2, 2, 0.0, 3);
    const plain_tensor G = gen_sparse(2, 3, 1, 1, 0.0, 4);
    const plain_tensor dD = dense_bwi(dY, G, sh);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                double want = 0.0;
                for (int k = 0; k < 2; ++k)
                    want += double(dY.at(0, k, y, x)) * G.at(k, c, 0, 0);
                CHECK(dD.at(0, c, y, x)
                      == doctest::Approx(want).epsilon(1e-6));
            }
}

TEST_CASE("dense_bwi/bww: zero gradient gives zero result") {
    const auto sh = conv_shape::make(1, 2, 2, 4, 4, 3, 3, 1, 1);
    const plain_tensor dY(1, 2, 4, 4);
    const plain_tensor G = gen_sparse(2, 2, 3, 3, 0.0, 1);
    const plain_tensor D = gen_sparse(1, 2, 4, 4, 0.0, 2);
    for (float v : dense_bwi(dY, G, sh).data) CHECK(v == 0.0f);
    for (float v : dense_bww(D, dY, sh).data) CHECK(v == 0.0f);
}

TEST_CASE("dense_bww: single-pixel 1x1 is an outer product") {
    const auto sh = conv_shape::make(1, 3, 2, 1, 1, 1, 1, 1, 1);
    const plain_tensor D = gen_sparse(1, 3, 1, 1, 0.0, 5);
    const plain_tensor dY = gen_sparse(1, 2, 1, 1, 0.0, 6);
    const plain_tensor dG = dense_bww(D, dY, sh);
    for (int k = 0; k < 2; ++k)
        for (int c = 0; c < 3; ++c)
            CHECK(dG.at(k, c, 0, 0)
                  == doctest::Approx(double(D.at(0, c, 0, 0))
                                     * dY.at(0, k, 0, 0))
                         .epsilon(1e-6));
}

TEST_CASE("linearity of dense_fwd") {
    const auto sh = conv_shape::make(2, 3, 2, 5, 5, 3, 3, 1, 1);
    std::mt19937_64 rng(9);
    auto signed_tensor = [&](int n, int c, int h, int w) {
        plain_tensor t(n, c, h, w);
        for (auto& v : t.data) v = float(int(rng() % 2001) - 1000) / 500.0f;
        return t;
    };
    const plain_tensor D1 = signed_tensor(2, 3, 5, 5);
    const plain_tensor D2 = signed_tensor(2, 3, 5, 5);
    const plain_tensor G = signed_tensor(2, 3, 3, 3);
    const float a = 0.75f, b = -1.25f;
    plain_tensor mix(2, 3, 5, 5);
    for (std::size_t e = 0; e < mix.size(); ++e)
        mix.data[e] = a * D1.data[e] + b * D2.data[e];
    const plain_tensor lhs = dense_fwd(mix, G, sh);
    const plain_tensor y1 = dense_fwd(D1, G, sh);
    const plain_tensor y2 = dense_fwd(D2, G, sh);
    plain_tensor rhs(2, 2, 5, 5);
    for (std::size_t e = 0; e < rhs.size(); ++e)
        rhs.data[e] = a * y1.data[e] + b * y2.data[e];
    CHECK(max_rel_error(lhs, rhs) < 1e-5);
}

TEST_CASE("adjointness ties the three components together") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const conv_shape sh = testutil::random_tiny_shape(rng, 4);
        const int hp = sh.out_h(), wp = sh.out_w();
        const plain_tensor D =
            gen_sparse(sh.N, sh.C, sh.H, sh.W, 0.3, trial * 3 + 1);
        const plain_tensor G =
            gen_sparse(sh.K, sh.C, sh.S, sh.R, 0.0, trial * 3 + 2);
        const plain_tensor dY =
            gen_sparse(sh.N, sh.K, hp, wp, 0.3, trial * 3 + 3);

        const double a = dot(dense_fwd(D, G, sh), dY);
        const double b = dot(D, dense_bwi(dY, G, sh));
        const double c = dot(G, dense_bww(D, dY, sh));
        CHECK(std::abs(a - b) <= 1e-5 * std::max(1.0, std::abs(a)));
        CHECK(std::abs(a - c) <= 1e-5 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("finite differences confirm both backward components") {
    const auto sh = conv_shape::make(2, 4, 4, 5, 5, 3, 3, 1, 1);
    CHECK(finite_diff_check(component::bwi, sh, 1e-3) < 1e-3);
    CHECK(finite_diff_check(component::bww, sh, 1e-3) < 1e-3);
}

TEST_CASE("finite differences converge at second order") {
    // The quadratic loss differentiates exactly under central
    // differences, so the order measurement uses the nonlinear loss.
    const auto sh = conv_shape::make(1, 2, 2, 4, 4, 3, 3, 1, 1);
    const double e1 =
        finite_diff_check(component::bww, sh, 2e-2, fd_loss::exp_sum);
    const double e2 =
        finite_diff_check(component::bww, sh, 1e-2, fd_loss::exp_sum);
    CHECK(e1 > 0.0);
    const double ratio = e1 / e2;
    CHECK(ratio > 2.5);
    CHECK(ratio < 6.5);
}

TEST_CASE("expected_fma_counts: 1x1 fwd with K=128, V=16") {
    const auto sh = conv_shape::make(1, 16, 128, 4, 4, 1, 1, 1, 1);
    const kernel_plan pl = plan(sh, component::fwd, 16);
    CHECK(pl.Q == 128);
    plain_tensor D(1, 16, 4, 4);
    // n non-zero elements => executed = n * R*Q/V = 8n
    D.at(0, 3, 1, 2) = 1.0f;
    D.at(0, 5, 0, 0) = 2.0f;
    D.at(0, 9, 3, 3) = 3.0f;
    const auto rep = expected_fma_counts(sh, pl, D);
    CHECK(rep.executed_vector_fmas == 3u * 8u);
    CHECK(rep.nonzero_elements == 3u);
}

TEST_CASE("expected_fma_counts: all-zero and fully dense masks") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const conv_shape sh = testutil::random_tiny_shape(rng, 4);
        for (component comp :
             {component::fwd, component::bwi, component::bww}) {
            const kernel_plan pl = plan(sh, comp, 4);
            const int mn = sh.N;
            const int mc = comp == component::bwi ? sh.K : sh.C;
            const int mh = comp == component::bwi ? sh.out_h() : sh.H;
            const int mw = comp == component::bwi ? sh.out_w() : sh.W;
            const plain_tensor zeros(mn, mc, mh, mw);
            const auto rz = expected_fma_counts(sh, pl, zeros);
            CHECK(rz.executed_vector_fmas == 0u);
            CHECK(rz.skipped_vector_fmas == rz.dense_total());

            const plain_tensor dense = gen_sparse(mn, mc, mh, mw, 0.0, trial);
            const auto rd = expected_fma_counts(sh, pl, dense);
            if (comp == component::bww) {
                // ragged tails shrink the dense reference too
                CHECK(rd.executed_vector_fmas == rd.dense_total());
            } else {
                CHECK(rd.executed_vector_fmas == rd.dense_total());
                CHECK(rd.skipped_vector_fmas == 0u);
            }
        }
    }
}
