#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "tldr/tensor.hpp"

namespace tldr {

// Tensor record: u32 little-endian header length, JSON header
// {"shape": [...], "dtype": "float64"}, then the flat little-endian float64
// payload in row-major order.
void write_tensor(std::ostream& out, const Tensor& tensor);

// `offset` is the stream position of the record; it is advanced past it and
// reported in any FormatError.
Tensor read_tensor(std::istream& in, std::size_t& offset);

void write_u32(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32(std::istream& in, std::size_t& offset);
std::string read_bytes(std::istream& in, std::size_t count, std::size_t& offset);

}  // namespace tldr
