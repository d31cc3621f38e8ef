#include "evolm/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace evolm::kernels {

namespace {

// 4-wide fp64 variants. Each output element receives additions in the same
// k order as the scalar reference, and mul/add stay separate instructions,
// so results are bit-identical to the scalar table.
void matmul_avx2(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n4; j += 4) {
            _mm256_storeu_pd(crow + j, _mm256_setzero_pd());
        }
        for (std::size_t j = n4; j < n; ++j) {
            crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = b + kk * n;
            const __m256d va = _mm256_set1_pd(aik);
            for (std::size_t j = 0; j < n4; j += 4) {
                const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            for (std::size_t j = n4; j < n; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) {
        out[i] = a[i] + b[i];
    }
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) {
        out[i] = a[i] - b[i];
    }
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) {
        out[i] = a[i] * b[i];
    }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    const __m256d va = _mm256_set1_pd(alpha);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (std::size_t i = n4; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_avx2(double alpha, double* x, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    const __m256d va = _mm256_set1_pd(alpha);
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (std::size_t i = n4; i < n; ++i) {
        x[i] *= alpha;
    }
}

void adamw_avx2(double* p, const double* g, double* m, double* v,
                std::size_t n, double lr, double beta1, double beta2,
                double eps, double weight_decay, double bc1, double bc2) {
    const double decay = 1.0 - lr * weight_decay;
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const std::size_t n4 = n - n % 4;
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vomb1 = _mm256_set1_pd(omb1);
    const __m256d vomb2 = _mm256_set1_pd(omb2);
    const __m256d vdecay = _mm256_set1_pd(decay);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        const __m256d mi =
            _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vomb1, gi));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(vomb2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vbc1);
        const __m256d vhat = _mm256_div_pd(vi, vbc2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        const __m256d step = _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom));
        _mm256_storeu_pd(p + i,
                         _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(p + i), vdecay), step));
    }
    for (std::size_t i = n4; i < n; ++i) {
        const double mi = beta1 * m[i] + omb1 * g[i];
        const double vi = beta2 * v[i] + omb2 * (g[i] * g[i]);
        m[i] = mi;
        v[i] = vi;
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p[i] = p[i] * decay - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace

const Ops* avx2_ops() {
    if (!__builtin_cpu_supports("avx2")) {
        return nullptr;
    }
    static const Ops table{
        "avx2",   matmul_avx2, add_avx2,   sub_avx2,
        mul_avx2, axpy_avx2,   scale_avx2, adamw_avx2,
    };
    return &table;
}

}  // namespace evolm::kernels

#else

namespace evolm::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace evolm::kernels

#endif
