#include "imd/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace imd::simd {

#ifndef IMD_HAVE_AVX2
const KernelTable* avx2_kernels() noexcept { return nullptr; }
#endif

const KernelTable& active_kernels() noexcept {
    static const KernelTable& chosen = [] () -> const KernelTable& {
        const char* env = std::getenv("IMD_SIMD");
        if (env != nullptr && std::string_view(env) == "scalar") return scalar_kernels();
        if (const KernelTable* t = avx2_kernels()) return *t;
        return scalar_kernels();
    }();
    return chosen;
}

}  // namespace imd::simd
