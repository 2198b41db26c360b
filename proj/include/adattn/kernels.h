#pragma once

#include <cstddef>

namespace adattn::kernels {

// Dense float64 array primitives. Every entry point has a scalar reference
// implementation and, on x86-64 hosts with AVX2, a vectorized variant picked
// at runtime. The two are equivalence-tested against each other; elementwise
// kernels match bit for bit, reductions (dot/sum) and fused axpy may differ
// by reassociation/FMA rounding only.
struct Ops {
  void (*add)(double* out, const double* a, const double* b, std::size_t n);
  void (*sub)(double* out, const double* a, const double* b, std::size_t n);
  void (*mul)(double* out, const double* a, const double* b, std::size_t n);
  void (*scale)(double* out, const double* a, double s, std::size_t n);
  void (*axpy)(double* y, double a, const double* x, std::size_t n);  // y += a*x
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*vmax)(const double* a, std::size_t n);  // n > 0
  void (*relu)(double* out, const double* a, std::size_t n);
  void (*sigmoid)(double* out, const double* a, std::size_t n);
  void (*vtanh)(double* out, const double* a, std::size_t n);
  void (*vexp)(double* out, const double* a, std::size_t n);
};

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);

bool avx2_available();          // CPU + build both support it
Backend active_backend();
void set_backend(Backend b);    // throws NumericError-free std::runtime_error if unsupported
void reset_backend();           // back to auto-detection (honours ADATTN_BACKEND env var)

const Ops& ops();               // active dispatch table
const Ops& scalar_ops();        // reference path, always available
const Ops* avx2_ops_or_null();  // nullptr when not compiled in or CPU lacks AVX2

}  // namespace adattn::kernels
