#pragma once

#include <cstddef>

namespace vecjoin {
namespace kernels {

// Squared L2 distance between two d-dimensional float vectors.
// Dispatches once at startup to the widest instruction set the CPU supports;
// all variants are equivalence-tested against the scalar reference.
using L2SqFn = float (*)(const float*, const float*, size_t);

float l2sq(const float* a, const float* b, size_t d);

// Distances from one query row to n contiguous base rows.
void l2sq_batch(const float* query, const float* base, size_t n, size_t d, float* out);

const char* active_impl_name();

// Individual variants, exposed for equivalence tests and benchmarks.
float l2sq_scalar(const float* a, const float* b, size_t d);
#if defined(__x86_64__) || defined(__i386__)
float l2sq_avx2(const float* a, const float* b, size_t d);
bool cpu_has_avx2_fma();
#endif

}  // namespace kernels
}  // namespace vecjoin
