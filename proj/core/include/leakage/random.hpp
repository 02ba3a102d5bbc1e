#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace leakage {

using Rng = std::mt19937_64;

/// Mixes a parent seed with a stream tag into a statistically independent child seed.
/// Used wherever one master seed fans out into per-fold, per-model, per-slot streams.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept;

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> tags) noexcept;

/// Stable 64-bit tag for a string key ("soft_l5", "fold", ...).
std::uint64_t string_tag(const char* key) noexcept;

}  // namespace leakage
