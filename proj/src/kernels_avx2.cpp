// AVX2+FMA variant of the distance kernel. This TU is compiled with
// -mavx2 -mfma; callers must check cpu_has_avx2_fma() before dispatching.

#include "vecjoin/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <cpuid.h>
#include <immintrin.h>

namespace vecjoin {
namespace kernels {

namespace {

// reads 0 <= d < 8 floats as __m256, zero-padded
inline __m256 masked_load8(const float* x, size_t d) {
    alignas(32) float buf[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (size_t i = 0; i < d; ++i) buf[i] = x[i];
    return _mm256_load_ps(buf);
}

}  // namespace

bool cpu_has_avx2_fma() {
    unsigned eax, ebx, ecx, edx;
    if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
    bool avx2 = (ebx & (1u << 5)) != 0;
    if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
    bool fma = (ecx & (1u << 12)) != 0;
    return avx2 && fma;
}

float l2sq_avx2(const float* a, const float* b, size_t d) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    while (d >= 16) {
        __m256 x0 = _mm256_loadu_ps(a);
        __m256 y0 = _mm256_loadu_ps(b);
        __m256 x1 = _mm256_loadu_ps(a + 8);
        __m256 y1 = _mm256_loadu_ps(b + 8);
        __m256 d0 = _mm256_sub_ps(x0, y0);
        __m256 d1 = _mm256_sub_ps(x1, y1);
        acc0 = _mm256_fmadd_ps(d0, d0, acc0);
        acc1 = _mm256_fmadd_ps(d1, d1, acc1);
        a += 16;
        b += 16;
        d -= 16;
    }
    if (d >= 8) {
        __m256 x = _mm256_loadu_ps(a);
        __m256 y = _mm256_loadu_ps(b);
        __m256 dd = _mm256_sub_ps(x, y);
        acc0 = _mm256_fmadd_ps(dd, dd, acc0);
        a += 8;
        b += 8;
        d -= 8;
    }
    if (d > 0) {
        __m256 x = masked_load8(a, d);
        __m256 y = masked_load8(b, d);
        __m256 dd = _mm256_sub_ps(x, y);
        acc1 = _mm256_fmadd_ps(dd, dd, acc1);
    }
    __m256 acc = _mm256_add_ps(acc0, acc1);
    __m128 lo = _mm256_castps256_ps128(acc);
    __m128 hi = _mm256_extractf128_ps(acc, 1);
    __m128 sum4 = _mm_add_ps(lo, hi);
    __m128 sum2 = _mm_add_ps(sum4, _mm_movehl_ps(sum4, sum4));
    __m128 sum1 = _mm_add_ss(sum2, _mm_shuffle_ps(sum2, sum2, 0x55));
    return _mm_cvtss_f32(sum1);
}

}  // namespace kernels
}  // namespace vecjoin

#endif  // x86
