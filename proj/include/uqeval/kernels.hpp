#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace uqeval::kern {

// Data-parallel inner loops behind softmax/entropy. Two backends: a scalar
// reference and an AVX2 variant, selected once at startup (overridable via
// the UQEVAL_KERNELS env var or set_backend). Both produce bit-identical
// results; the equivalence suite asserts it.
enum class Backend { scalar, avx2 };

struct Ops {
    const char* name;
    // max over x[0..n); n >= 1
    double (*reduce_max)(const double* x, std::size_t n);
    // out[i] = exp(x[i] - shift)
    void (*exp_store)(const double* x, std::size_t n, double shift, double* out);
    // blocked sum of x[0..n)
    double (*sum)(const double* x, std::size_t n);
    // x[i] *= c
    void (*scale)(double* x, std::size_t n, double c);
    // -sum p[i]*ln(p[i]), entries below 1e-300 contribute 0
    double (*entropy_nats)(const double* p, std::size_t n);
};

const Ops& active();
Backend active_backend();
bool backend_available(Backend b);
// Returns false (and leaves the active backend unchanged) if b is unavailable.
bool set_backend(Backend b);
const Ops& ops_for(Backend b);
std::vector<Backend> available_backends();
std::string backend_name(Backend b);

} // namespace uqeval::kern
