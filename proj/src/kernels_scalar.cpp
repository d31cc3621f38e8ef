#include <cmath>
#include <cstddef>

#include "evolm/kernels.hpp"

namespace evolm::kernels {

namespace {

// Reference kernels. The vector variants mirror this accumulation order
// exactly: output row initialised to zero, then one rank-1 update per k.
void matmul_scalar(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

void add_scalar_k(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] + b[i];
    }
}

void sub_scalar_k(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] - b[i];
    }
}

void mul_scalar_k(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] * b[i];
    }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_scalar(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= alpha;
    }
}

void adamw_scalar(double* p, const double* g, double* m, double* v,
                  std::size_t n, double lr, double beta1, double beta2,
                  double eps, double weight_decay, double bc1, double bc2) {
    const double decay = 1.0 - lr * weight_decay;
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
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

const Ops& scalar() {
    static const Ops table{
        "scalar",     matmul_scalar, add_scalar_k, sub_scalar_k,
        mul_scalar_k, axpy_scalar,   scale_scalar, adamw_scalar,
    };
    return table;
}

}  // namespace evolm::kernels
