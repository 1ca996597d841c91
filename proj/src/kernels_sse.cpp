// V=4 backend on SSE + FMA. Built with -msse4.1 -mfma; registration
// checks the CPU at runtime before exposing it.

#include "kernel_impl.hpp"

#include <immintrin.h>

namespace spconv {
namespace detail {
namespace {

struct sse_backend {
    static constexpr int width = 4;
    using reg = __m128;

    static reg zero() { return _mm_setzero_ps(); }
    static reg load(const float* p) { return _mm_loadu_ps(p); }
    static void store(float* p, reg r) { _mm_storeu_ps(p, r); }
    static reg broadcast(float s) { return _mm_set1_ps(s); }
    static reg add(reg a, reg b) { return _mm_add_ps(a, b); }
    static reg fma(reg acc, reg b, reg w) {
        return _mm_fmadd_ps(b, w, acc);
    }
    static lane_mask cmp_neq_zero(reg v) {
        // CMPNEQPS is unordered-or-not-equal: NaN lanes count non-zero,
        // -0.0f compares equal to zero.
        return lane_mask(_mm_movemask_ps(_mm_cmpneq_ps(v, zero())));
    }
};

} // namespace

void register_sse_backends(std::vector<kernel_entry>& kernels,
                           std::vector<vec_probe>& probes) {
    if (!__builtin_cpu_supports("sse4.1") || !__builtin_cpu_supports("fma"))
        return;
    kernels.push_back(make_entry<sse_backend>("sse", true));
    probes.push_back(make_probe<sse_backend>("sse", true));
}

} // namespace detail
} // namespace spconv
