#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace evolm::kernels {

// Data-parallel fp64 kernels behind the tensor ops. Every variant of a kernel
// must produce bit-identical output: vector variants broadcast the left
// operand and walk the reduction axis in the same order as the scalar
// reference, and nothing here uses FMA contraction. The equivalence tests
// assert exact equality between the scalar table and the selected table.
struct Ops {
    const char* name;

    // c = a * b with a: m x k, b: k x n, c: m x n, all row-major.
    void (*matmul)(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // x *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);

    // Fused AdamW step: decay first (p *= 1 - lr*wd), then the bias-corrected
    // moment update. bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
    void (*adamw_update)(double* p, const double* g, double* m, double* v,
                         std::size_t n, double lr, double beta1, double beta2,
                         double eps, double weight_decay, double bc1, double bc2);
};

const Ops& scalar();

// Currently selected table. Defaults to the best variant the CPU supports;
// the EVOLM_KERNELS environment variable ("scalar", "avx2", "neon") overrides.
const Ops& active();

// Force a variant by name. Returns false (and leaves the selection unchanged)
// when the variant is not available on this machine.
bool set_active(std::string_view name);

std::vector<std::string> available();

// Defined in the per-ISA translation units; null when not compiled in or not
// supported by the running CPU.
const Ops* avx2_ops();
const Ops* neon_ops();

}  // namespace evolm::kernels
