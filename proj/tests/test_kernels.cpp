#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "evolm/kernels.hpp"
#include "evolm/rng.hpp"

using namespace evolm;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.normal();
    }
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("kernel variants are bit-identical to the scalar reference") {
    const auto& ref = kernels::scalar();
    for (const auto& name : kernels::available()) {
        if (name == "scalar") {
            continue;
        }
        CAPTURE(name);
        REQUIRE(kernels::set_active(name));
        const auto& simd = kernels::active();
        Rng rng(42);

        // Sizes straddle the vector width so tails get exercised.
        const std::vector<std::array<std::size_t, 3>> shapes{
            {1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {2, 9, 13}, {16, 4, 1}, {5, 17, 6}};
        for (const auto [m, k, n] : shapes) {
            const auto a = random_vec(m * k, rng);
            const auto b = random_vec(k * n, rng);
            std::vector<double> c_ref(m * n), c_simd(m * n);
            ref.matmul(a.data(), b.data(), c_ref.data(), m, k, n);
            simd.matmul(a.data(), b.data(), c_simd.data(), m, k, n);
            CHECK(bits_equal(c_ref, c_simd));
        }

        for (const std::size_t n : {1u, 3u, 4u, 5u, 31u, 64u, 1001u}) {
            const auto a = random_vec(n, rng);
            const auto b = random_vec(n, rng);
            std::vector<double> r1(n), r2(n);

            ref.add(a.data(), b.data(), r1.data(), n);
            simd.add(a.data(), b.data(), r2.data(), n);
            CHECK(bits_equal(r1, r2));

            ref.sub(a.data(), b.data(), r1.data(), n);
            simd.sub(a.data(), b.data(), r2.data(), n);
            CHECK(bits_equal(r1, r2));

            ref.mul(a.data(), b.data(), r1.data(), n);
            simd.mul(a.data(), b.data(), r2.data(), n);
            CHECK(bits_equal(r1, r2));

            r1 = b;
            r2 = b;
            ref.axpy(0.37, a.data(), r1.data(), n);
            simd.axpy(0.37, a.data(), r2.data(), n);
            CHECK(bits_equal(r1, r2));

            r1 = a;
            r2 = a;
            ref.scale(-1.25, r1.data(), n);
            simd.scale(-1.25, r2.data(), n);
            CHECK(bits_equal(r1, r2));
        }

        // Three AdamW steps over the same state must stay bit-identical.
        for (const std::size_t n : {1u, 7u, 64u, 129u}) {
            auto p1 = random_vec(n, rng);
            auto p2 = p1;
            std::vector<double> m1(n, 0.0), v1(n, 0.0), m2(n, 0.0), v2(n, 0.0);
            for (int t = 1; t <= 3; ++t) {
                const auto g = random_vec(n, rng);
                const double bc1 = 1.0 - std::pow(0.9, t);
                const double bc2 = 1.0 - std::pow(0.999, t);
                ref.adamw_update(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3, 0.9,
                                 0.999, 1e-8, 0.01, bc1, bc2);
                simd.adamw_update(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3, 0.9,
                                  0.999, 1e-8, 0.01, bc1, bc2);
            }
            CHECK(bits_equal(p1, p2));
            CHECK(bits_equal(m1, m2));
            CHECK(bits_equal(v1, v2));
        }
    }
    // Restore default selection for the rest of the suite.
    kernels::set_active(kernels::available().back());
}

TEST_CASE("kernel dispatch") {
    CHECK(kernels::set_active("scalar"));
    CHECK(std::string(kernels::active().name) == "scalar");
    CHECK_FALSE(kernels::set_active("not-an-isa"));
    CHECK(std::string(kernels::active().name) == "scalar");
    kernels::set_active(kernels::available().back());
}
