#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vecjoin/kernels.hpp"

using namespace vecjoin;

TEST_SUITE_BEGIN("kernels");

TEST_CASE("scalar kernel matches double-precision reference") {
    for (size_t d : {1u, 2u, 3u, 7u, 8u, 15u, 16u, 31u, 32u, 33u, 96u, 128u}) {
        auto a = vjtest::random_vectors(1, d, 100 + d, -2.f, 2.f);
        auto b = vjtest::random_vectors(1, d, 200 + d, -2.f, 2.f);
        double ref = vjtest::l2sq_ref(a.data(), b.data(), d);
        float got = kernels::l2sq_scalar(a.data(), b.data(), d);
        CHECK(got == doctest::Approx(ref).epsilon(1e-5));
    }
}

#if defined(__x86_64__) || defined(__i386__)
TEST_CASE("avx2 variant is equivalent to the scalar reference") {
    if (!kernels::cpu_has_avx2_fma()) {
        MESSAGE("cpu has no AVX2+FMA, skipping");
        return;
    }
    // every remainder path: d mod 16 in 0..15, plus tiny dims
    for (size_t d = 1; d <= 70; ++d) {
        auto a = vjtest::random_vectors(1, d, 300 + d, -3.f, 3.f);
        auto b = vjtest::random_vectors(1, d, 400 + d, -3.f, 3.f);
        double ref = vjtest::l2sq_ref(a.data(), b.data(), d);
        float scalar = kernels::l2sq_scalar(a.data(), b.data(), d);
        float avx = kernels::l2sq_avx2(a.data(), b.data(), d);
        CHECK(avx == doctest::Approx(ref).epsilon(1e-5));
        CHECK(avx == doctest::Approx(scalar).epsilon(1e-5));
    }
}

TEST_CASE("avx2 equivalence on bulk random pairs") {
    if (!kernels::cpu_has_avx2_fma()) return;
    const size_t d = 96;
    auto data = vjtest::random_vectors(512, d, 77, -1.f, 1.f);
    for (size_t i = 0; i + 1 < 512; i += 2) {
        const float* a = data.data() + i * d;
        const float* b = data.data() + (i + 1) * d;
        double ref = vjtest::l2sq_ref(a, b, d);
        CHECK(kernels::l2sq_avx2(a, b, d) == doctest::Approx(ref).epsilon(1e-5));
    }
}
#endif

TEST_CASE("dispatched kernel and batch helper agree") {
    const size_t d = 33, n = 40;
    auto base = vjtest::random_vectors(n, d, 9);
    auto q = vjtest::random_vectors(1, d, 10);
    std::vector<float> out(n);
    kernels::l2sq_batch(q.data(), base.data(), n, d, out.data());
    for (size_t i = 0; i < n; ++i) {
        CHECK(out[i] == kernels::l2sq(q.data(), base.data() + i * d, d));
        CHECK(out[i] == doctest::Approx(vjtest::l2sq_ref(q.data(), base.data() + i * d, d))
                            .epsilon(1e-5));
    }
    CHECK(out[0] >= 0.f);
    MESSAGE("active kernel: ", kernels::active_impl_name());
}

TEST_CASE("identical vectors have zero distance") {
    auto a = vjtest::random_vectors(1, 128, 5);
    CHECK(kernels::l2sq(a.data(), a.data(), 128) == 0.0f);
}

TEST_SUITE_END();
