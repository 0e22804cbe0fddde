#include "gsabt/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "gsabt/errors.hpp"

namespace gsabt::kern {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels* select() {
  const char* env = std::getenv("GSABT_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    if (std::strcmp(env, "avx2") == 0) {
      const Kernels* k = avx2_kernels();
      if (k == nullptr || !cpu_has_avx2())
        throw ConfigError("GSABT_KERNELS=avx2 requested but AVX2 unavailable");
      return k;
    }
    throw ConfigError(std::string("unknown GSABT_KERNELS value: ") + env);
  }
  if (cpu_has_avx2()) {
    if (const Kernels* k = avx2_kernels()) return k;
  }
  return &scalar_kernels();
}

}  // namespace

const Kernels& active() {
  static const Kernels* chosen = select();
  return *chosen;
}

std::string active_name() { return active().name; }

}  // namespace gsabt::kern
