#include <atomic>
#include <cstdlib>
#include <string>

#include "psgd/kernels.hpp"

namespace psgd::kernels {

#if PSGD_HAVE_AVX2
const KernelTable& avx2_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if PSGD_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* resolve(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  if (name == "auto" || name.empty()) {
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
  }
  return nullptr;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{[] {
    const char* env = std::getenv("PSGD_KERNELS");
    const KernelTable* t = resolve(env ? std::string_view(env) : std::string_view("auto"));
    return t ? t : resolve("auto");
  }()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = resolve(name);
  if (!t) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> out{"scalar"};
  if (avx2_table()) out.emplace_back("avx2");
  return out;
}

}  // namespace psgd::kernels
