#pragma once

#include <cstdint>

namespace psgd::harness {

inline constexpr std::uint64_t kMaxMethods = 1u << 8;
inline constexpr std::uint64_t kMaxDims = 1u << 8;
inline constexpr std::uint64_t kMaxRegimes = 1u << 8;
inline constexpr std::uint64_t kMaxReplications = std::uint64_t{1} << 32;

/// seed = mix64(mix64(base) XOR pack), where pack places the method index in
/// bits 56..63, the dim index in 48..55, the regime index in 40..47 and the
/// replication in 0..31. Both steps are bijections, so distinct tuples within
/// the ranges above always get distinct seeds. Out-of-range indices throw.
std::uint64_t seed_for(std::uint64_t base_seed, std::uint64_t method_index, std::uint64_t dim_index,
                       std::uint64_t regime_index, std::uint64_t replication);

/// Human-readable description written into run metadata.
const char* seed_scheme_description();

}  // namespace psgd::harness
