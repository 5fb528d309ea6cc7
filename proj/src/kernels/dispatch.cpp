#include <cstdlib>
#include <stdexcept>
#include <string>

#include "isdml/kernels.hpp"

namespace isdml::kernels {

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

bool available(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(ISDML_HAVE_AVX2)
            __builtin_cpu_init();
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(ISDML_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!available(isa))
        throw std::invalid_argument("kernel variant not available: " + std::string(isa_name(isa)));
    switch (isa) {
#if defined(ISDML_HAVE_AVX2)
        case Isa::avx2: return detail::avx2_table;
#endif
#if defined(ISDML_HAVE_NEON)
        case Isa::neon: return detail::neon_table;
#endif
        default: return detail::scalar_table;
    }
}

namespace {

const KernelTable& select() {
    if (const char* forced = std::getenv("ISDML_KERNELS"); forced && std::string_view(forced) == "scalar")
        return detail::scalar_table;
    if (available(Isa::avx2)) return table(Isa::avx2);
    if (available(Isa::neon)) return table(Isa::neon);
    return detail::scalar_table;
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& chosen = select();
    return chosen;
}

}  // namespace isdml::kernels
