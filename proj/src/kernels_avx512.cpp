// V=16 backend on AVX-512F. Built with -mavx512f; registration checks
// the CPU at runtime before exposing it.

#include "kernel_impl.hpp"

#include <immintrin.h>

namespace spconv {
namespace detail {
namespace {

struct avx512_backend {
    static constexpr int width = 16;
    using reg = __m512;

    static reg zero() { return _mm512_setzero_ps(); }
    static reg load(const float* p) { return _mm512_loadu_ps(p); }
    static void store(float* p, reg r) { _mm512_storeu_ps(p, r); }
    static reg broadcast(float s) { return _mm512_set1_ps(s); }
    static reg add(reg a, reg b) { return _mm512_add_ps(a, b); }
    static reg fma(reg acc, reg b, reg w) {
        return _mm512_fmadd_ps(b, w, acc);
    }
    static lane_mask cmp_neq_zero(reg v) {
        return lane_mask(_mm512_cmp_ps_mask(v, zero(), _CMP_NEQ_UQ));
    }
};

} // namespace

void register_avx512_backends(std::vector<kernel_entry>& kernels,
                              std::vector<vec_probe>& probes) {
    if (!__builtin_cpu_supports("avx512f")) return;
    kernels.push_back(make_entry<avx512_backend>("avx512", true));
    probes.push_back(make_probe<avx512_backend>("avx512", true));
}

} // namespace detail
} // namespace spconv
