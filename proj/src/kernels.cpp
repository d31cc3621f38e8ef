#include "evolm/kernels.hpp"

#include <cstdlib>

namespace evolm::kernels {

namespace {

const Ops* lookup(std::string_view name) {
    if (name == "scalar") {
        return &scalar();
    }
    if (name == "avx2") {
        return avx2_ops();
    }
    if (name == "neon") {
        return neon_ops();
    }
    return nullptr;
}

const Ops* pick_default() {
    if (const char* env = std::getenv("EVOLM_KERNELS")) {
        if (const Ops* forced = lookup(env)) {
            return forced;
        }
    }
    if (const Ops* simd = avx2_ops()) {
        return simd;
    }
    if (const Ops* simd = neon_ops()) {
        return simd;
    }
    return &scalar();
}

const Ops*& selection() {
    static const Ops* current = pick_default();
    return current;
}

}  // namespace

const Ops& active() { return *selection(); }

bool set_active(std::string_view name) {
    if (const Ops* table = lookup(name)) {
        selection() = table;
        return true;
    }
    return false;
}

std::vector<std::string> available() {
    std::vector<std::string> names{"scalar"};
    if (avx2_ops()) {
        names.emplace_back("avx2");
    }
    if (neon_ops()) {
        names.emplace_back("neon");
    }
    return names;
}

}  // namespace evolm::kernels
