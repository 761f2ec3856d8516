#include "vecjoin/kernels.hpp"

namespace vecjoin {
namespace kernels {

// Four scalar partial sums: keeps the dependency chain short so the reference
// stays reasonably fast without any intrinsics.
float l2sq_scalar(const float* a, const float* b, size_t d) {
    float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
    size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        float d0 = a[i] - b[i];
        float d1 = a[i + 1] - b[i + 1];
        float d2 = a[i + 2] - b[i + 2];
        float d3 = a[i + 3] - b[i + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; i < d; ++i) {
        float dd = a[i] - b[i];
        s0 += dd * dd;
    }
    return (s0 + s1) + (s2 + s3);
}

namespace {

L2SqFn select_impl();

L2SqFn g_l2sq = select_impl();
const char* g_impl_name = "scalar";

L2SqFn select_impl() {
#if defined(__x86_64__) || defined(__i386__)
    if (cpu_has_avx2_fma()) {
        g_impl_name = "avx2";
        return l2sq_avx2;
    }
#endif
    g_impl_name = "scalar";
    return l2sq_scalar;
}

}  // namespace

float l2sq(const float* a, const float* b, size_t d) { return g_l2sq(a, b, d); }

void l2sq_batch(const float* query, const float* base, size_t n, size_t d, float* out) {
    L2SqFn fn = g_l2sq;
    for (size_t i = 0; i < n; ++i) {
        out[i] = fn(query, base + i * d, d);
    }
}

const char* active_impl_name() { return g_impl_name; }

}  // namespace kernels
}  // namespace vecjoin
