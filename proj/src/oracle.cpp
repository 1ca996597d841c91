#include "spconv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spconv/vec.hpp"

namespace spconv {

namespace {

// Valid output-column range for one filter column u: all x' in [0, W')
// with 0 <= x'*O + u - pad < limit.
struct span {
    int lo, hi; // half-open
};

int floor_div(int a, int b) { // b > 0
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

span valid_out_span(int u, int pad, int stride, int in_limit, int out_limit) {
    int lo = std::max(0, -floor_div(u - pad, stride));
    int hi = std::min(out_limit, floor_div(in_limit - 1 + pad - u, stride) + 1);
    return {lo, std::max(hi, lo)};
}

void check_fwd_shapes(const plain_tensor& D, const plain_tensor& G,
                      const conv_shape& sh) {
    SPCONV_REQUIRE(D.n == sh.N && D.c == sh.C && D.h == sh.H && D.w == sh.W,
                   "dense conv: input dims do not match shape");
    SPCONV_REQUIRE(G.n == sh.K && G.c == sh.C && G.h == sh.S && G.w == sh.R,
                   "dense conv: filter dims do not match shape");
}

} // namespace

plain_tensor dense_fwd(const plain_tensor& D, const plain_tensor& G,
                       const conv_shape& sh) {
    sh.validate();
    check_fwd_shapes(D, G, sh);
    const int wp = sh.out_w(), hp = sh.out_h();
    plain_tensor Y(sh.N, sh.K, hp, wp);
    std::vector<double> acc(std::size_t(hp) * wp);
    for (int i = 0; i < sh.N; ++i) {
        for (int k = 0; k < sh.K; ++k) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int c = 0; c < sh.C; ++c) {
                for (int v = 0; v < sh.S; ++v) {
                    const span ys = valid_out_span(v, sh.padH, sh.P, sh.H, hp);
                    for (int u = 0; u < sh.R; ++u) {
                        const double g = G.at(k, c, v, u);
                        const span xs =
                            valid_out_span(u, sh.padW, sh.O, sh.W, wp);
                        for (int yp = ys.lo; yp < ys.hi; ++yp) {
                            const int y = yp * sh.P + v - sh.padH;
                            const float* drow = &D.data[D.index(i, c, y, 0)];
                            double* arow = &acc[std::size_t(yp) * wp];
                            for (int xp = xs.lo; xp < xs.hi; ++xp)
                                arow[xp] +=
                                    g * drow[xp * sh.O + u - sh.padW];
                        }
                    }
                }
            }
            float* out = &Y.data[Y.index(i, k, 0, 0)];
            for (std::size_t e = 0; e < acc.size(); ++e)
                out[e] = float(acc[e]);
        }
    }
    return Y;
}

plain_tensor dense_bwi(const plain_tensor& dY, const plain_tensor& G,
                       const conv_shape& sh) {
    sh.validate();
    const int wp = sh.out_w(), hp = sh.out_h();
    SPCONV_REQUIRE(dY.n == sh.N && dY.c == sh.K && dY.h == hp && dY.w == wp,
                   "dense_bwi: gradient dims do not match shape");
    SPCONV_REQUIRE(G.n == sh.K && G.c == sh.C && G.h == sh.S && G.w == sh.R,
                   "dense_bwi: filter dims do not match shape");
    plain_tensor dD(sh.N, sh.C, sh.H, sh.W);
    std::vector<double> acc(std::size_t(sh.H) * sh.W);
    for (int i = 0; i < sh.N; ++i) {
        for (int c = 0; c < sh.C; ++c) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int k = 0; k < sh.K; ++k) {
                for (int v = 0; v < sh.S; ++v) {
                    const span ys = valid_out_span(v, sh.padH, sh.P, sh.H, hp);
                    for (int u = 0; u < sh.R; ++u) {
                        const double g = G.at(k, c, v, u);
                        const span xs =
                            valid_out_span(u, sh.padW, sh.O, sh.W, wp);
                        for (int yp = ys.lo; yp < ys.hi; ++yp) {
                            const int y = yp * sh.P + v - sh.padH;
                            const float* grow =
                                &dY.data[dY.index(i, k, yp, 0)];
                            double* arow = &acc[std::size_t(y) * sh.W];
                            for (int xp = xs.lo; xp < xs.hi; ++xp)
                                arow[xp * sh.O + u - sh.padW] +=
                                    g * grow[xp];
                        }
                    }
                }
            }
            float* out = &dD.data[dD.index(i, c, 0, 0)];
            for (std::size_t e = 0; e < acc.size(); ++e)
                out[e] = float(acc[e]);
        }
    }
    return dD;
}

plain_tensor dense_bww(const plain_tensor& D, const plain_tensor& dY,
                       const conv_shape& sh) {
    sh.validate();
    const int wp = sh.out_w(), hp = sh.out_h();
    SPCONV_REQUIRE(D.n == sh.N && D.c == sh.C && D.h == sh.H && D.w == sh.W,
                   "dense_bww: input dims do not match shape");
    SPCONV_REQUIRE(dY.n == sh.N && dY.c == sh.K && dY.h == hp && dY.w == wp,
                   "dense_bww: gradient dims do not match shape");
    plain_tensor dG(sh.K, sh.C, sh.S, sh.R);
    for (int k = 0; k < sh.K; ++k) {
        for (int c = 0; c < sh.C; ++c) {
            for (int v = 0; v < sh.S; ++v) {
                const span ys = valid_out_span(v, sh.padH, sh.P, sh.H, hp);
                for (int u = 0; u < sh.R; ++u) {
                    const span xs = valid_out_span(u, sh.padW, sh.O, sh.W, wp);
                    double acc = 0.0;
                    for (int i = 0; i < sh.N; ++i) {
                        for (int yp = ys.lo; yp < ys.hi; ++yp) {
                            const int y = yp * sh.P + v - sh.padH;
                            const float* drow = &D.data[D.index(i, c, y, 0)];
                            const float* grow =
                                &dY.data[dY.index(i, k, yp, 0)];
                            for (int xp = xs.lo; xp < xs.hi; ++xp)
                                acc += double(grow[xp])
                                       * drow[xp * sh.O + u - sh.padW];
                        }
                    }
                    dG.at(k, c, v, u) = float(acc);
                }
            }
        }
    }
    return dG;
}

fma_count_report expected_fma_counts(const conv_shape& sh,
                                     const kernel_plan& plan,
                                     const plain_tensor& mask_source) {
    sh.validate();
    const int V = plan.V;
    const int wp = sh.out_w(), hp = sh.out_h();
    const u64 qv = u64(plan.Q) / V;
    fma_count_report rep;
    u64 dense_exec = 0;

    auto count_lane_run = [&](int i0, int lanes, auto&& value_at) {
        int nnz = 0;
        for (int l = 0; l < lanes; ++l)
            if (value_at(i0 + l) != 0.0f) ++nnz;
        return nnz;
    };

    switch (plan.comp) {
    case component::fwd: {
        SPCONV_REQUIRE(mask_source.n == sh.N && mask_source.c == sh.C
                           && mask_source.h == sh.H && mask_source.w == sh.W,
                       "expected_fma_counts: mask source must be the input");
        const u64 tiles = u64(sh.K) / plan.Q;
        std::vector<int> tsize(sh.W);
        for (int x = 0; x < sh.W; ++x)
            tsize[x] = int(affected_outputs(sh, x).size());
        for (int yp = 0; yp < hp; ++yp) {
            for (int v = 0; v < sh.S; ++v) {
                const int yin = yp * sh.P + v - sh.padH;
                if (yin < 0 || yin >= sh.H) continue;
                for (int i = 0; i < sh.N; ++i) {
                    for (int cb = 0; cb < sh.C / V; ++cb) {
                        for (int x = 0; x < sh.W; ++x) {
                            const int nnz = count_lane_run(
                                cb * V, V, [&](int ch) {
                                    return mask_source.at(i, ch, yin, x);
                                });
                            rep.checked_vectors += tiles;
                            rep.nonzero_elements += tiles * nnz;
                            rep.executed_vector_fmas +=
                                tiles * u64(nnz) * tsize[x] * qv;
                            dense_exec += tiles * u64(V) * tsize[x] * qv;
                        }
                    }
                }
            }
        }
        break;
    }
    case component::bwi: {
        SPCONV_REQUIRE(mask_source.n == sh.N && mask_source.c == sh.K
                           && mask_source.h == hp && mask_source.w == wp,
                       "expected_fma_counts: mask source must be the output "
                       "gradient");
        const u64 tiles = u64(sh.C) / plan.Q;
        std::vector<int> tsize(wp);
        for (int xp = 0; xp < wp; ++xp)
            tsize[xp] = int(bwi_affected_outputs(sh, xp).size());
        for (int y = 0; y < sh.H; ++y) {
            for (int v = 0; v < sh.S; ++v) {
                const int num = y + sh.padH - v;
                if (num < 0 || num % sh.P != 0) continue;
                const int yp = num / sh.P;
                if (yp >= hp) continue;
                for (int i = 0; i < sh.N; ++i) {
                    for (int kb = 0; kb < sh.K / V; ++kb) {
                        for (int xp = 0; xp < wp; ++xp) {
                            const int nnz = count_lane_run(
                                kb * V, V, [&](int ch) {
                                    return mask_source.at(i, ch, yp, xp);
                                });
                            rep.checked_vectors += tiles;
                            rep.nonzero_elements += tiles * nnz;
                            rep.executed_vector_fmas +=
                                tiles * u64(nnz) * tsize[xp] * qv;
                            dense_exec += tiles * u64(V) * tsize[xp] * qv;
                        }
                    }
                }
            }
        }
        break;
    }
    case component::bww: {
        const bool on_input = plan.check == bww_check::input;
        if (on_input) {
            SPCONV_REQUIRE(mask_source.n == sh.N && mask_source.c == sh.C
                               && mask_source.h == sh.H
                               && mask_source.w == sh.W,
                           "expected_fma_counts: mask source must be the "
                           "input");
        } else {
            SPCONV_REQUIRE(mask_source.n == sh.N && mask_source.c == sh.K
                               && mask_source.h == hp && mask_source.w == wp,
                           "expected_fma_counts: mask source must be the "
                           "output gradient");
        }
        const u64 tiles =
            u64(on_input ? sh.K : sh.C) / plan.Q;
        const int chans = on_input ? sh.C : sh.K;
        const int cols = on_input ? sh.W : wp;
        std::vector<int> tsize(cols);
        for (int x = 0; x < cols; ++x)
            tsize[x] = int(on_input ? affected_outputs(sh, x).size()
                                    : bwi_affected_outputs(sh, x).size());
        const int nb = (sh.N + V - 1) / V;
        for (int v = 0; v < sh.S; ++v) {
            for (int ch = 0; ch < chans; ++ch) {
                for (int ib = 0; ib < nb; ++ib) {
                    const int lanes = std::min(V, sh.N - ib * V);
                    for (int yp = 0; yp < hp; ++yp) {
                        const int yin = yp * sh.P + v - sh.padH;
                        if (yin < 0 || yin >= sh.H) continue;
                        const int row = on_input ? yin : yp;
                        for (int x = 0; x < cols; ++x) {
                            const int nnz = count_lane_run(
                                ib * V, lanes, [&](int i) {
                                    return mask_source.at(i, ch, row, x);
                                });
                            rep.checked_vectors += tiles;
                            rep.nonzero_elements += tiles * nnz;
                            rep.executed_vector_fmas +=
                                tiles * u64(nnz) * tsize[x] * qv;
                            dense_exec += tiles * u64(lanes) * tsize[x] * qv;
                        }
                    }
                }
            }
        }
        break;
    }
    }
    rep.skipped_vector_fmas = dense_exec - rep.executed_vector_fmas;
    return rep;
}

namespace {

// 64-bit convolution core for the finite-difference checker.
std::vector<double> fwd_f64(const std::vector<double>& D,
                            const std::vector<double>& G,
                            const conv_shape& sh) {
    const int wp = sh.out_w(), hp = sh.out_h();
    std::vector<double> Y(std::size_t(sh.N) * sh.K * hp * wp, 0.0);
    for (int i = 0; i < sh.N; ++i)
        for (int k = 0; k < sh.K; ++k)
            for (int yp = 0; yp < hp; ++yp)
                for (int xp = 0; xp < wp; ++xp) {
                    double acc = 0.0;
                    for (int c = 0; c < sh.C; ++c)
                        for (int v = 0; v < sh.S; ++v) {
                            const int y = yp * sh.P + v - sh.padH;
                            if (y < 0 || y >= sh.H) continue;
                            for (int u = 0; u < sh.R; ++u) {
                                const int x = xp * sh.O + u - sh.padW;
                                if (x < 0 || x >= sh.W) continue;
                                acc += D[((std::size_t(i) * sh.C + c) * sh.H
                                          + y)
                                             * sh.W
                                         + x]
                                       * G[((std::size_t(k) * sh.C + c) * sh.S
                                            + v)
                                               * sh.R
                                           + u];
                            }
                        }
                    Y[((std::size_t(i) * sh.K + k) * hp + yp) * wp + xp] = acc;
                }
    return Y;
}

double loss_of(const std::vector<double>& Y, fd_loss loss) {
    double l = 0.0;
    for (double y : Y)
        l += loss == fd_loss::half_sq_norm ? 0.5 * y * y : std::exp(y);
    return l;
}

std::vector<double> loss_grad(const std::vector<double>& Y, fd_loss loss) {
    std::vector<double> g(Y.size());
    for (std::size_t e = 0; e < Y.size(); ++e)
        g[e] = loss == fd_loss::half_sq_norm ? Y[e] : std::exp(Y[e]);
    return g;
}

} // namespace

double finite_diff_check(component comp, const conv_shape& sh, double epsilon,
                         fd_loss loss, u64 seed) {
    sh.validate();
    SPCONV_REQUIRE(comp == component::bwi || comp == component::bww,
                   "finite_diff_check: checks the two backward components");
    const std::size_t d_size = std::size_t(sh.N) * sh.C * sh.H * sh.W;
    const std::size_t g_size = std::size_t(sh.K) * sh.C * sh.S * sh.R;
    SPCONV_REQUIRE(d_size <= 10000 && g_size <= 10000,
                   "finite_diff_check: shape too large for a dense sweep");

    std::mt19937_64 rng(seed);
    auto uniform = [&]() {
        return (double(rng() >> 11) * 0x1p-53 - 0.5);
    };
    std::vector<double> D(d_size), G(g_size);
    for (auto& v : D) v = uniform();
    for (auto& v : G) v = uniform();

    const std::vector<double> Y = fwd_f64(D, G, sh);
    const std::vector<double> gY = loss_grad(Y, loss);
    const int wp = sh.out_w(), hp = sh.out_h();

    // Analytic gradient through the chain rule, expressed with the same
    // index relations the dense oracles use.
    std::vector<double> analytic(comp == component::bwi ? d_size : g_size,
                                 0.0);
    for (int i = 0; i < sh.N; ++i)
        for (int k = 0; k < sh.K; ++k)
            for (int yp = 0; yp < hp; ++yp)
                for (int xp = 0; xp < wp; ++xp) {
                    const double gy =
                        gY[((std::size_t(i) * sh.K + k) * hp + yp) * wp + xp];
                    for (int c = 0; c < sh.C; ++c)
                        for (int v = 0; v < sh.S; ++v) {
                            const int y = yp * sh.P + v - sh.padH;
                            if (y < 0 || y >= sh.H) continue;
                            for (int u = 0; u < sh.R; ++u) {
                                const int x = xp * sh.O + u - sh.padW;
                                if (x < 0 || x >= sh.W) continue;
                                const std::size_t di =
                                    ((std::size_t(i) * sh.C + c) * sh.H + y)
                                        * sh.W
                                    + x;
                                const std::size_t gi =
                                    ((std::size_t(k) * sh.C + c) * sh.S + v)
                                        * sh.R
                                    + u;
                                if (comp == component::bwi)
                                    analytic[di] += gy * G[gi];
                                else
                                    analytic[gi] += gy * D[di];
                            }
                        }
                }

    std::vector<double>& target = comp == component::bwi ? D : G;
    double max_rel = 0.0;
    for (std::size_t e = 0; e < target.size(); ++e) {
        const double saved = target[e];
        target[e] = saved + epsilon;
        const double lp = loss_of(fwd_f64(D, G, sh), loss);
        target[e] = saved - epsilon;
        const double lm = loss_of(fwd_f64(D, G, sh), loss);
        target[e] = saved;
        const double fd = (lp - lm) / (2.0 * epsilon);
        const double rel =
            std::abs(fd - analytic[e]) / std::max(std::abs(analytic[e]), 1e-6);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

double dot(const plain_tensor& a, const plain_tensor& b) {
    SPCONV_REQUIRE(a.size() == b.size(), "dot: size mismatch");
    double acc = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e)
        acc += double(a.data[e]) * b.data[e];
    return acc;
}

double max_rel_error(const plain_tensor& a, const plain_tensor& ref) {
    SPCONV_REQUIRE(a.size() == ref.size(), "max_rel_error: size mismatch");
    double worst = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) {
        const double d = std::abs(double(a.data[e]) - ref.data[e]);
        worst = std::max(worst, d / (std::abs(double(ref.data[e])) + 1e-6));
    }
    return worst;
}

} // namespace spconv
