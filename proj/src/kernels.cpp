#include "adattn/kernels.h"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace adattn::kernels {

const Ops* avx2_ops_table();  // defined in kernels_avx2.cpp

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
#else
  return false;
#endif
}

Backend detect_default() {
  if (const char* env = std::getenv("ADATTN_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Backend::avx2;
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

Backend& current() {
  static Backend b = detect_default();
  return b;
}

}  // namespace

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
  static const bool ok = avx2_ops_table() != nullptr && cpu_has_avx2();
  return ok;
}

const Ops* avx2_ops_or_null() { return avx2_available() ? avx2_ops_table() : nullptr; }

Backend active_backend() { return current(); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available())
    throw std::runtime_error("kernels: avx2 backend not available on this host/build");
  current() = b;
}

void reset_backend() { current() = detect_default(); }

const Ops& ops() { return current() == Backend::avx2 ? *avx2_ops_table() : scalar_ops(); }

}  // namespace adattn::kernels
