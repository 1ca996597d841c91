#pragma once

// Output-parallel, vectorized, zero-skipping convolution kernels for the
// three training components, plus a dense mode (zero-check disabled)
// serving as the in-house baseline.
//
// The row sweep keeps the affected output vectors resident in a cyclic
// accumulator ring so each output vector is loaded and stored exactly
// once per sweep, independent of sparsity. The sparse inner loop is the
// popcount-bounded trailing-zeros iteration, never a per-lane branch.
//
// Tasks write pairwise-disjoint output regions, so any worker count
// produces bitwise-identical results with no atomics on the hot path.

#include <string>
#include <vector>

#include "spconv/planner.hpp"
#include "spconv/tensor.hpp"
#include "spconv/vec.hpp"

namespace spconv {

enum class run_mode { sparse, dense };

// Backend selection happens once per kernel invocation. `automatic`
// takes the native SIMD backend when the CPU supports the requested V,
// otherwise scalar emulation.
enum class backend_pref { automatic, force_scalar, force_native };

struct kernel_counters {
    u64 checked_vectors = 0;
    u64 executed_vector_fmas = 0;
    u64 output_vector_loads = 0;
    u64 output_vector_stores = 0;

    kernel_counters& operator+=(const kernel_counters& o) {
        checked_vectors += o.checked_vectors;
        executed_vector_fmas += o.executed_vector_fmas;
        output_vector_loads += o.output_vector_loads;
        output_vector_stores += o.output_vector_stores;
        return *this;
    }
    bool operator==(const kernel_counters&) const = default;
};

struct conv_result {
    blocked_tensor out;
    kernel_counters counters;
    std::string backend; // name of the backend that ran
};

bool native_backend_available(int V);
std::vector<std::string> backend_names();

// FWD: src is the input in ActNCHWc, filt the FilterKCRSblk filters;
// returns Y in ActNCHWc.
conv_result sparse_fwd(const blocked_tensor& src, const blocked_tensor& filt,
                       const conv_shape& shape, const kernel_plan& plan,
                       run_mode mode, int workers = 1,
                       backend_pref pref = backend_pref::automatic);

// BWI: grad_out is dL/dY in ActNCHWc over K; filt_t the transposed
// filters (pack_filter with swap_kc). Returns dL/dD in ActNCHWc over C.
conv_result sparse_bwi(const blocked_tensor& grad_out,
                       const blocked_tensor& filt_t, const conv_shape& shape,
                       const kernel_plan& plan, run_mode mode,
                       int workers = 1,
                       backend_pref pref = backend_pref::automatic);

// BWW: the checked tensor (plan.check) must be packed ActCHWNn, the
// other one ActNCHWc, i.e. check=input wants (D chwnn, dY nchwc) and
// check=output_grad the mirror. Returns dL/dG in FilterKCRSblk (K,C).
conv_result sparse_bww(const blocked_tensor& input,
                       const blocked_tensor& grad_out,
                       const conv_shape& shape, const kernel_plan& plan,
                       run_mode mode, int workers = 1,
                       backend_pref pref = backend_pref::automatic);

// Generic entry used by the harness: dispatches on plan.comp. For fwd
// and bwi, `a` is the swept tensor and `b` the (transposed) filters; for
// bww, `a` is the input and `b` the output gradient.
conv_result run_parallel(const blocked_tensor& a, const blocked_tensor& b,
                         const conv_shape& shape, const kernel_plan& plan,
                         run_mode mode, int workers,
                         backend_pref pref = backend_pref::automatic);

// One vector backend's contract operations, exposed for the
// scalar-vs-SIMD equivalence tests.
struct vec_probe {
    std::string name;
    int width = 0;
    bool native = false;
    lane_mask (*cmp_neq_zero)(const float* v) = nullptr;
    void (*broadcast_fma)(float* acc, float s, const float* w) = nullptr;
    void (*add)(float* a, const float* b) = nullptr;
};
std::vector<vec_probe> vector_probes(int V);

} // namespace spconv
