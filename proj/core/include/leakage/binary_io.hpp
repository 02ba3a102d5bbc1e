#pragma once

#include <cstdint>
#include <vector>

namespace leakage {

/// Appends values as little-endian IEEE-754 doubles / unsigned 64-bit integers.
void append_f64_le(std::vector<char>& out, double v);
void append_u64_le(std::vector<char>& out, std::uint64_t v);

/// Reads at byte offset `pos` and advances it; throws ShapeError past the end.
double read_f64_le(const std::vector<char>& in, std::size_t& pos);
std::uint64_t read_u64_le(const std::vector<char>& in, std::size_t& pos);

}  // namespace leakage
