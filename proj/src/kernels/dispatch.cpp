#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vfl/kernels/kernels.hpp"

namespace vfl::kernels {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
constexpr bool kHaveAvx2Build = true;
#else
constexpr bool kHaveAvx2Build = false;
#endif

Backend detect() {
  if (const char* env = std::getenv("VFL_LAB_KERNELS")) {
    const std::string choice(env);
    if (choice == "scalar") return Backend::kScalar;
    if (choice == "avx2" && supported(Backend::kAvx2)) return Backend::kAvx2;
  }
  return supported(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table_ptr{&table(detect())};
  return table_ptr;
}

}  // namespace

bool supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return kHaveAvx2Build && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
#if defined(__x86_64__) || defined(_M_X64)
  if (backend == Backend::kAvx2) return avx2::kTable;
#endif
  (void)backend;
  return scalar::kTable;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_backend(Backend backend) {
  if (!supported(backend))
    throw std::invalid_argument("kernel backend not supported on this CPU: " +
                                std::string(backend_name(backend)));
  current().store(&table(backend), std::memory_order_release);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

}  // namespace vfl::kernels
