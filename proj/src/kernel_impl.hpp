#pragma once

// Templated task bodies shared by every vector backend. Each backend
// translation unit instantiates these with its own register type and
// registers the resulting function pointers; kernels.cpp owns dispatch,
// validation and the worker pool.

#include <algorithm>
#include <cassert>

#include "spconv/kernels.hpp"
#include "spconv/vec.hpp"

namespace spconv {
namespace detail {

// Accumulator vectors a task may keep live. Plans are validated against
// this bound at dispatch.
inline constexpr int max_ring_vectors = 64;

struct kernel_args {
    const conv_shape* shape = nullptr;
    const kernel_plan* plan = nullptr;
    run_mode mode = run_mode::sparse;
    const float* src = nullptr;   // swept tensor (checked for zeros)
    const float* other = nullptr; // filters (fwd/bwi) or the FMA operand (bww)
    float* dst = nullptr;
    // Flattened per-column target table: for sweep column x the pairs
    // (t_u[p], t_col[p]) for p in [t_off[x], t_off[x+1]) name the filter
    // column and output column of each FMA group, ascending t_col.
    const int* t_off = nullptr;
    const int* t_u = nullptr;
    const int* t_col = nullptr;
};

using task_fn = void (*)(const kernel_args&, int, int, int,
                         kernel_counters&);

struct kernel_entry {
    int width = 0;
    const char* name = "";
    bool native = false;
    task_fn fwd = nullptr;
    task_fn bwi = nullptr;
    task_fn bww = nullptr;
};

// FWD and BWI share one row-sweep body; BWI runs it with the roles of C
// and K swapped, a transposed filter, and the inverse column mapping.
// Task coordinates: (image tile, output row, channel tile).
template <class VB, bool IsFwd>
void conv_row_task(const kernel_args& a, int itile, int orow, int tile,
                   kernel_counters& kc) {
    using reg = typename VB::reg;
    constexpr int V = VB::width;
    const conv_shape& sh = *a.shape;
    const kernel_plan& pl = *a.plan;
    const bool sparse = a.mode == run_mode::sparse;
    const int qv = pl.Q / V;

    const int red_blocks = (IsFwd ? sh.C : sh.K) / V;
    const int out_blocks = (IsFwd ? sh.K : sh.C) / V;
    const int in_rows = IsFwd ? sh.H : sh.out_h();
    const int in_cols = IsFwd ? sh.W : sh.out_w();
    const int out_rows = IsFwd ? sh.out_h() : sh.H;
    const int out_cols = IsFwd ? sh.out_w() : sh.W;

    const int m = std::min(pl.M, sh.N);
    const int i_lo = itile * m;
    const int i_hi = std::min(sh.N, i_lo + m);
    const int ob0 = tile * qv;

    const int ring_cols = sh.R + (pl.pipelined ? 1 : 0);
    assert(ring_cols * qv <= max_ring_vectors);
    reg ring[max_ring_vectors];

    const std::size_t fstride_j = std::size_t(red_blocks) * sh.S * sh.R * V * V;
    const std::size_t dstride_j = std::size_t(out_rows) * out_cols * V;

    for (int v = 0; v < sh.S; ++v) {
        int srow;
        if constexpr (IsFwd) {
            srow = orow * sh.P + v - sh.padH;
            if (srow < 0 || srow >= in_rows) continue; // virtual padding row
        } else {
            const int num = orow + sh.padH - v;
            if (num < 0 || num % sh.P != 0) continue;
            srow = num / sh.P;
            if (srow >= in_rows) continue;
        }
        for (int rb = 0; rb < red_blocks; ++rb) {
            const float* fbase =
                a.other
                + ((std::size_t(ob0) * red_blocks + rb) * sh.S + v) * sh.R * V
                      * V;
            for (int i = i_lo; i < i_hi; ++i) {
                const float* srow_p =
                    a.src
                    + ((std::size_t(i) * red_blocks + rb) * in_rows + srow)
                          * in_cols * V;
                float* dbase =
                    a.dst
                    + ((std::size_t(i) * out_blocks + ob0) * out_rows + orow)
                          * out_cols * V;
                const float* next_row_p =
                    pl.prefetch_hints && srow + 1 < in_rows
                        ? srow_p + std::size_t(in_cols) * V
                        : nullptr;

                // Row sweep. Output columns rotate through the ring;
                // each is loaded on entry and stored when the sweep
                // passes it, regardless of the mask.
                int wlo = 0, whi = 0;
                bool open = false;
                u64 cols_moved = 0;
                auto load_col = [&](int col) {
                    reg* slot = &ring[col % ring_cols * qv];
                    const float* p = dbase + std::size_t(col) * V;
                    for (int j = 0; j < qv; ++j)
                        slot[j] = VB::load(p + j * dstride_j);
                };
                auto store_col = [&](int col) {
                    const reg* slot = &ring[col % ring_cols * qv];
                    float* p = dbase + std::size_t(col) * V;
                    for (int j = 0; j < qv; ++j)
                        VB::store(p + j * dstride_j, slot[j]);
                };

                for (int x = 0; x < in_cols; ++x) {
                    if (next_row_p)
                        __builtin_prefetch(next_row_p + std::size_t(x) * V,
                                           0, 2);
                    const int tb = a.t_off[x], te = a.t_off[x + 1];
                    if (tb != te) {
                        const int lo = a.t_col[tb];
                        const int hi = a.t_col[te - 1];
                        if (!open) {
                            wlo = whi = lo;
                            open = true;
                        }
                        for (; wlo < lo && wlo < whi; ++wlo) store_col(wlo);
                        if (wlo < lo) wlo = whi = lo; // gap when O > R
                        for (; whi <= hi; ++whi, ++cols_moved) load_col(whi);
                        if (pl.pipelined && x + 1 < in_cols) {
                            // spare-slot analogue of pipelining: pull the
                            // next column's newest output in early; only
                            // when the next window continues this one
                            const int nb = a.t_off[x + 1];
                            const int ne = a.t_off[x + 2];
                            if (nb != ne && whi >= a.t_col[nb]) {
                                const int hi2 = a.t_col[ne - 1];
                                for (; whi <= hi2 && whi - wlo < ring_cols;
                                     ++whi, ++cols_moved)
                                    load_col(whi);
                            }
                        }
                    }

                    const float* svec = srow_p + std::size_t(x) * V;
                    auto fma_lanes = [&](int lane) {
                        const reg bd = VB::broadcast(svec[lane]);
                        const float* flane = fbase + std::size_t(lane) * V;
                        for (int p = tb; p < te; ++p) {
                            const float* fu =
                                flane + std::size_t(a.t_u[p]) * V * V;
                            reg* slot = &ring[a.t_col[p] % ring_cols * qv];
                            for (int j = 0; j < qv; ++j)
                                slot[j] = VB::fma(slot[j], bd,
                                                  VB::load(fu + j * fstride_j));
                        }
                    };

                    if (sparse) {
                        const lane_mask mask =
                            VB::cmp_neq_zero(VB::load(svec));
                        kc.checked_vectors += 1;
                        if (tb != te && mask != 0) {
                            const int nonzero = mask_popcount(mask);
                            lane_mask mrun = mask;
                            int lane = 0;
                            for (int t = 0; t < nonzero; ++t) {
                                const int z = mask_trailing_zeros(mrun);
                                lane += z;
                                fma_lanes(lane);
                                mrun = mask_shift_consume(mrun, z);
                                lane += 1;
                            }
                            kc.executed_vector_fmas +=
                                u64(nonzero) * (te - tb) * qv;
                        }
                    } else if (tb != te) {
                        for (int lane = 0; lane < V; ++lane) fma_lanes(lane);
                        kc.executed_vector_fmas += u64(V) * (te - tb) * qv;
                    }
                }
                for (; open && wlo < whi; ++wlo) store_col(wlo);
                kc.output_vector_loads += cols_moved * qv;
                kc.output_vector_stores += cols_moved * qv;
            }
        }
    }
}

// BWW keeps the R*Q/V filter-gradient accumulators resident for the
// whole row sweep (no ring), clears them at sweep start and merges with
// the previous partials once at sweep end. The zero check runs along
// the minibatch lanes of the ActCHWNn-packed tensor named by plan.check.
// Task coordinates: (filter row v, reduction channel, output tile).
template <class VB, bool CheckInput>
void bww_task_impl(const kernel_args& a, int v, int ch, int tile,
                   kernel_counters& kc) {
    using reg = typename VB::reg;
    constexpr int V = VB::width;
    const conv_shape& sh = *a.shape;
    const kernel_plan& pl = *a.plan;
    const bool sparse = a.mode == run_mode::sparse;
    const int qv = pl.Q / V;

    const int red_ch = CheckInput ? sh.C : sh.K;
    const int red_blocks = red_ch / V;
    const int out_blocks = (CheckInput ? sh.K : sh.C) / V;
    const int chk_rows = CheckInput ? sh.H : sh.out_h();
    const int chk_cols = CheckInput ? sh.W : sh.out_w();
    const int oth_rows = CheckInput ? sh.out_h() : sh.H;
    const int oth_cols = CheckInput ? sh.out_w() : sh.W;
    const int ob0 = tile * qv;
    const int nb = (sh.N + V - 1) / V;
    const int hp = sh.out_h();

    assert(sh.R * qv <= max_ring_vectors);
    reg acc[max_ring_vectors];
    const std::size_t ostride_j = std::size_t(oth_rows) * oth_cols * V;

    for (int ib = 0; ib < nb; ++ib) {
        const int valid = std::min(V, sh.N - ib * V);
        const float* chk_base =
            a.src + (std::size_t(ib) * red_ch + ch) * chk_rows * chk_cols * V;
        for (int yp = 0; yp < hp; ++yp) {
            const int y = yp * sh.P + v - sh.padH;
            if (y < 0 || y >= sh.H) continue;
            const int crow = CheckInput ? y : yp;
            const int orow = CheckInput ? yp : y;

            for (int e = 0; e < sh.R * qv; ++e) acc[e] = VB::zero();
            if (pl.prefetch_hints) {
                // pull the partials merged at sweep end in early
                for (int u = 0; u < sh.R; ++u)
                    __builtin_prefetch(
                        a.dst
                            + (((std::size_t(ob0) * red_blocks + ch / V)
                                    * sh.S
                                + v)
                                   * sh.R
                               + u)
                                  * V * V
                            + std::size_t(ch % V) * V,
                        1, 2);
            }
            const float* crow_p = chk_base + std::size_t(crow) * chk_cols * V;

            for (int x = 0; x < chk_cols; ++x) {
                const int tb = a.t_off[x], te = a.t_off[x + 1];
                const float* svec = crow_p + std::size_t(x) * V;
                auto fma_lanes = [&](int lane) {
                    const int img = ib * V + lane;
                    const reg bd = VB::broadcast(svec[lane]);
                    const float* obase =
                        a.other
                        + ((std::size_t(img) * out_blocks + ob0) * oth_rows
                           + orow)
                              * oth_cols * V;
                    for (int p = tb; p < te; ++p) {
                        const float* op =
                            obase + std::size_t(a.t_col[p]) * V;
                        reg* slot = &acc[a.t_u[p] * qv];
                        for (int j = 0; j < qv; ++j)
                            slot[j] = VB::fma(slot[j], bd,
                                              VB::load(op + j * ostride_j));
                    }
                };

                if (sparse) {
                    // Packed tail lanes beyond N are exact zeros, so the
                    // compare masks them off with no extra work.
                    const lane_mask mask = VB::cmp_neq_zero(VB::load(svec));
                    kc.checked_vectors += 1;
                    if (tb != te && mask != 0) {
                        const int nonzero = mask_popcount(mask);
                        lane_mask mrun = mask;
                        int lane = 0;
                        for (int t = 0; t < nonzero; ++t) {
                            const int z = mask_trailing_zeros(mrun);
                            lane += z;
                            fma_lanes(lane);
                            mrun = mask_shift_consume(mrun, z);
                            lane += 1;
                        }
                        kc.executed_vector_fmas +=
                            u64(nonzero) * (te - tb) * qv;
                    }
                } else if (tb != te) {
                    for (int lane = 0; lane < valid; ++lane) fma_lanes(lane);
                    kc.executed_vector_fmas += u64(valid) * (te - tb) * qv;
                }
            }

            // Merge previous partials: each dG vector is read and
            // written exactly once per row sweep.
            for (int u = 0; u < sh.R; ++u) {
                for (int j = 0; j < qv; ++j) {
                    float* gp = a.dst
                                + (((std::size_t(ob0 + j) * red_blocks
                                     + ch / V)
                                        * sh.S
                                    + v)
                                       * sh.R
                                   + u)
                                      * V * V
                                + std::size_t(ch % V) * V;
                    VB::store(gp, VB::add(VB::load(gp), acc[u * qv + j]));
                }
            }
            kc.output_vector_loads += u64(sh.R) * qv;
            kc.output_vector_stores += u64(sh.R) * qv;
        }
    }
}

template <class VB>
void bww_task(const kernel_args& a, int v, int ch, int tile,
              kernel_counters& kc) {
    if (a.plan->check == bww_check::input)
        bww_task_impl<VB, true>(a, v, ch, tile, kc);
    else
        bww_task_impl<VB, false>(a, v, ch, tile, kc);
}

template <class VB>
kernel_entry make_entry(const char* name, bool native) {
    kernel_entry e;
    e.width = VB::width;
    e.name = name;
    e.native = native;
    e.fwd = &conv_row_task<VB, true>;
    e.bwi = &conv_row_task<VB, false>;
    e.bww = &bww_task<VB>;
    return e;
}

template <class VB>
lane_mask probe_cmp(const float* v) {
    return VB::cmp_neq_zero(VB::load(v));
}

template <class VB>
void probe_bfma(float* acc, float s, const float* w) {
    VB::store(acc, broadcast_fma<VB>(VB::load(acc), s, VB::load(w)));
}

template <class VB>
void probe_add(float* x, const float* y) {
    VB::store(x, VB::add(VB::load(x), VB::load(y)));
}

template <class VB>
vec_probe make_probe(const char* name, bool native) {
    vec_probe p;
    p.name = name;
    p.width = VB::width;
    p.native = native;
    p.cmp_neq_zero = &probe_cmp<VB>;
    p.broadcast_fma = &probe_bfma<VB>;
    p.add = &probe_add<VB>;
    return p;
}

// Implemented by the per-ISA translation units.
void register_scalar_backends(std::vector<kernel_entry>& kernels,
                              std::vector<vec_probe>& probes);
#if defined(__x86_64__) || defined(_M_X64)
void register_sse_backends(std::vector<kernel_entry>& kernels,
                           std::vector<vec_probe>& probes);
void register_avx2_backends(std::vector<kernel_entry>& kernels,
                            std::vector<vec_probe>& probes);
void register_avx512_backends(std::vector<kernel_entry>& kernels,
                              std::vector<vec_probe>& probes);
#endif

} // namespace detail
} // namespace spconv
