#include "leakage/binary_io.hpp"

#include <bit>

#include "leakage/error.hpp"

namespace leakage {

void append_u64_le(std::vector<char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
}

void append_f64_le(std::vector<char>& out, double v) { append_u64_le(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64_le(const std::vector<char>& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ShapeError("binary file truncated");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
  }
  pos += 8;
  return v;
}

double read_f64_le(const std::vector<char>& in, std::size_t& pos) {
  return std::bit_cast<double>(read_u64_le(in, pos));
}

}  // namespace leakage
