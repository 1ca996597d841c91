// V=8 backend on AVX2 + FMA. Built with -mavx2 -mfma; registration
// checks the CPU at runtime before exposing it.

#include "kernel_impl.hpp"

#include <immintrin.h>

namespace spconv {
namespace detail {
namespace {

struct avx2_backend {
    static constexpr int width = 8;
    using reg = __m256;

    static reg zero() { return _mm256_setzero_ps(); }
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg r) { _mm256_storeu_ps(p, r); }
    static reg broadcast(float s) { return _mm256_set1_ps(s); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg fma(reg acc, reg b, reg w) {
        return _mm256_fmadd_ps(b, w, acc);
    }
    static lane_mask cmp_neq_zero(reg v) {
        return lane_mask(_mm256_movemask_ps(
            _mm256_cmp_ps(v, zero(), _CMP_NEQ_UQ)));
    }
};

} // namespace

void register_avx2_backends(std::vector<kernel_entry>& kernels,
                            std::vector<vec_probe>& probes) {
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
        return;
    kernels.push_back(make_entry<avx2_backend>("avx2", true));
    probes.push_back(make_probe<avx2_backend>("avx2", true));
}

} // namespace detail
} // namespace spconv
