#include "psgd/harness/seeding.hpp"

#include <stdexcept>

#include "psgd/rng.hpp"

namespace psgd::harness {

std::uint64_t seed_for(std::uint64_t base_seed, std::uint64_t method_index, std::uint64_t dim_index,
                       std::uint64_t regime_index, std::uint64_t replication) {
  if (method_index >= kMaxMethods || dim_index >= kMaxDims || regime_index >= kMaxRegimes ||
      replication >= kMaxReplications)
    throw std::out_of_range("seed_for: index outside the supported range");
  const std::uint64_t pack = (method_index << 56) | (dim_index << 48) | (regime_index << 40) | replication;
  return mix64(mix64(base_seed) ^ pack);
}

const char* seed_scheme_description() {
  return "seed = mix64(mix64(base_seed) ^ (method << 56 | dim << 48 | regime << 40 | replication)), "
         "mix64 = SplitMix64 finalizer; indices are positions in the configured lists";
}

}  // namespace psgd::harness
