#include "uqeval/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace uqeval::kern {

const Ops& scalar_ops();
#ifdef UQEVAL_HAVE_AVX2
const Ops& avx2_ops();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(UQEVAL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_initial() {
    if (const char* env = std::getenv("UQEVAL_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
        // "auto" or anything unusable falls through to detection
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> b{pick_initial()};
    return b;
}

} // namespace

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2:   return cpu_has_avx2();
    }
    return false;
}

const Ops& ops_for(Backend b) {
#ifdef UQEVAL_HAVE_AVX2
    if (b == Backend::avx2) return avx2_ops();
#endif
    (void)b;
    return scalar_ops();
}

const Ops& active() {
    return ops_for(current().load(std::memory_order_relaxed));
}

Backend active_backend() {
    return current().load(std::memory_order_relaxed);
}

bool set_backend(Backend b) {
    if (!backend_available(b)) return false;
    current().store(b, std::memory_order_relaxed);
    return true;
}

std::vector<Backend> available_backends() {
    std::vector<Backend> out{Backend::scalar};
    if (backend_available(Backend::avx2)) out.push_back(Backend::avx2);
    return out;
}

std::string backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

} // namespace uqeval::kern
