#include "evolm/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

namespace evolm::kernels {

namespace {

// 2-wide fp64 variants, same accumulation order as the scalar reference.
void matmul_neon(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n2; j += 2) {
            vst1q_f64(crow + j, vdupq_n_f64(0.0));
        }
        for (std::size_t j = n2; j < n; ++j) {
            crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = b + kk * n;
            const float64x2_t va = vdupq_n_f64(aik);
            for (std::size_t j = 0; j < n2; j += 2) {
                const float64x2_t prod = vmulq_f64(va, vld1q_f64(brow + j));
                vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
            }
            for (std::size_t j = n2; j < n; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (std::size_t i = n2; i < n; ++i) {
        out[i] = a[i] + b[i];
    }
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (std::size_t i = n2; i < n; ++i) {
        out[i] = a[i] - b[i];
    }
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (std::size_t i = n2; i < n; ++i) {
        out[i] = a[i] * b[i];
    }
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    const float64x2_t va = vdupq_n_f64(alpha);
    for (std::size_t i = 0; i < n2; i += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (std::size_t i = n2; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_neon(double alpha, double* x, std::size_t n) {
    const std::size_t n2 = n - n % 2;
    const float64x2_t va = vdupq_n_f64(alpha);
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
    }
    for (std::size_t i = n2; i < n; ++i) {
        x[i] *= alpha;
    }
}

void adamw_neon(double* p, const double* g, double* m, double* v,
                std::size_t n, double lr, double beta1, double beta2,
                double eps, double weight_decay, double bc1, double bc2) {
    const double decay = 1.0 - lr * weight_decay;
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const std::size_t n2 = n - n % 2;
    const float64x2_t vb1 = vdupq_n_f64(beta1);
    const float64x2_t vb2 = vdupq_n_f64(beta2);
    const float64x2_t vomb1 = vdupq_n_f64(omb1);
    const float64x2_t vomb2 = vdupq_n_f64(omb2);
    const float64x2_t vdecay = vdupq_n_f64(decay);
    const float64x2_t vlr = vdupq_n_f64(lr);
    const float64x2_t veps = vdupq_n_f64(eps);
    const float64x2_t vbc1 = vdupq_n_f64(bc1);
    const float64x2_t vbc2 = vdupq_n_f64(bc2);
    for (std::size_t i = 0; i < n2; i += 2) {
        const float64x2_t gi = vld1q_f64(g + i);
        const float64x2_t mi = vaddq_f64(vmulq_f64(vb1, vld1q_f64(m + i)), vmulq_f64(vomb1, gi));
        const float64x2_t vi = vaddq_f64(vmulq_f64(vb2, vld1q_f64(v + i)),
                                         vmulq_f64(vomb2, vmulq_f64(gi, gi)));
        vst1q_f64(m + i, mi);
        vst1q_f64(v + i, vi);
        const float64x2_t mhat = vdivq_f64(mi, vbc1);
        const float64x2_t vhat = vdivq_f64(vi, vbc2);
        const float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), veps);
        const float64x2_t step = vmulq_f64(vlr, vdivq_f64(mhat, denom));
        vst1q_f64(p + i, vsubq_f64(vmulq_f64(vld1q_f64(p + i), vdecay), step));
    }
    for (std::size_t i = n2; i < n; ++i) {
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

const Ops* neon_ops() {
    static const Ops table{
        "neon",   matmul_neon, add_neon,   sub_neon,
        mul_neon, axpy_neon,   scale_neon, adamw_neon,
    };
    return &table;
}

}  // namespace evolm::kernels

#else

namespace evolm::kernels {
const Ops* neon_ops() { return nullptr; }
}  // namespace evolm::kernels

#endif
