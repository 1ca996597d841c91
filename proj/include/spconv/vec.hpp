#pragma once

// Portable vector-operation contract for the convolution kernels.
//
// Every kernel is written against a backend type that models:
//
//   struct backend {
//     static constexpr int width;              // V, lanes of 32-bit float
//     struct reg;                              // one vector of V floats
//     static reg  zero();
//     static reg  load(const float* p);        // p need not be aligned
//     static void store(float* p, reg r);
//     static reg  broadcast(float s);
//     static reg  add(reg a, reg b);
//     static reg  fma(reg acc, reg b, reg w);  // acc + b*w per lane
//     static lane_mask cmp_neq_zero(reg v);    // bit i set iff lane i != 0.0f
//   };
//
// Masks are plain integers regardless of backend, so the popcount /
// trailing-zeros skip loop is identical everywhere. Backends exist for
// scalar emulation (any V) and for SSE/AVX2/AVX-512 where compiled in;
// selection happens once per kernel invocation, never mid-kernel.

#include <bit>
#include <cassert>
#include <cstdint>

namespace spconv {

// Lane i maps to bit i; only the low V bits may ever be set.
using lane_mask = std::uint32_t;

inline constexpr int max_vector_width = 16;

constexpr bool valid_vector_width(int v) {
    return v == 4 || v == 8 || v == 16;
}

constexpr lane_mask full_mask(int v) {
    return v >= 32 ? ~lane_mask(0) : (lane_mask(1) << v) - 1;
}

inline int mask_popcount(lane_mask m) {
    return std::popcount(m);
}

// Index of the lowest set bit. Calling with m == 0 is a contract
// violation: the skip loop runs exactly popcount(m) iterations.
inline int mask_trailing_zeros(lane_mask m) {
    assert(m != 0);
    return std::countr_zero(m);
}

// Consume the lowest set bit after skipping its z leading zeros. The
// caller advances data pointers by z+1 positions in tandem.
inline lane_mask mask_shift_consume(lane_mask m, int z) {
    assert(z >= 0 && z + 1 <= 32);
    return m >> (z + 1);
}

// The skip loop: visits the set lanes of m in ascending order, running
// popcount(m) iterations located via trailing-zero counts. This shape
// (not a per-lane branch) is what the sparse kernels replicate inline.
template <class Fn>
inline void for_each_set_lane(lane_mask m, Fn&& fn) {
    const int nonzero = mask_popcount(m);
    int lane = 0;
    for (int t = 0; t < nonzero; ++t) {
        const int z = mask_trailing_zeros(m);
        lane += z;
        fn(lane);
        m = mask_shift_consume(m, z);
        lane += 1;
    }
}

// Reference backend: plain loops over a lane array. Correct for any V,
// used both as the fallback on hardware without wide vectors and as the
// equivalence oracle for the SIMD backends.
template <int V>
struct scalar_backend {
    static constexpr int width = V;
    static_assert(valid_vector_width(V));

    struct reg {
        float lane[V];
    };

    static reg zero() {
        reg r{};
        return r;
    }

    static reg load(const float* p) {
        reg r;
        for (int i = 0; i < V; ++i) r.lane[i] = p[i];
        return r;
    }

    static void store(float* p, reg r) {
        for (int i = 0; i < V; ++i) p[i] = r.lane[i];
    }

    static reg broadcast(float s) {
        reg r;
        for (int i = 0; i < V; ++i) r.lane[i] = s;
        return r;
    }

    static reg add(reg a, reg b) {
        for (int i = 0; i < V; ++i) a.lane[i] += b.lane[i];
        return a;
    }

    static reg fma(reg acc, reg b, reg w) {
        for (int i = 0; i < V; ++i) acc.lane[i] += b.lane[i] * w.lane[i];
        return acc;
    }

    static lane_mask cmp_neq_zero(reg v) {
        lane_mask m = 0;
        for (int i = 0; i < V; ++i) {
            // +0.0f == -0.0f compares equal; NaN != 0 is true, so NaN
            // lanes count as non-zero and participate in FMAs.
            if (v.lane[i] != 0.0f) m |= lane_mask(1) << i;
        }
        return m;
    }
};

// The contract's fused form; kernels hoist the broadcast out of their
// inner loops but the semantics are defined here.
template <class VB>
inline typename VB::reg broadcast_fma(typename VB::reg acc, float s,
                                      typename VB::reg w) {
    return VB::fma(acc, VB::broadcast(s), w);
}

} // namespace spconv
