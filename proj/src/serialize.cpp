#include "tldr/serialize.hpp"

#include <array>
#include <bit>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "tldr/error.hpp"

namespace tldr {

namespace {
constexpr std::uint32_t kMaxHeader = 1u << 20;
}

void write_u32(std::ostream& out, std::uint32_t value) {
  std::array<char, 4> bytes{};
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

std::uint32_t read_u32(std::istream& in, std::size_t& offset) {
  const std::string bytes = read_bytes(in, 4, offset);
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

std::string read_bytes(std::istream& in, std::size_t count, std::size_t& offset) {
  std::string buffer(count, '\0');
  in.read(buffer.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw FormatError("unexpected end of file: wanted " + std::to_string(count) + " bytes",
                      offset + static_cast<std::size_t>(in.gcount()));
  }
  offset += count;
  return buffer;
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  const nlohmann::json header = {{"shape", tensor.shape()}, {"dtype", "float64"}};
  const std::string text = header.dump();
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::array<char, 8> bytes{};
  for (double v : tensor.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.write(bytes.data(), bytes.size());
  }
}

Tensor read_tensor(std::istream& in, std::size_t& offset) {
  const std::size_t start = offset;
  const std::uint32_t header_len = read_u32(in, offset);
  if (header_len == 0 || header_len > kMaxHeader) {
    throw FormatError("implausible tensor header length " + std::to_string(header_len), start);
  }
  const std::size_t header_at = offset;
  const std::string text = read_bytes(in, header_len, offset);
  Shape shape;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("dtype").get<std::string>() != "float64") {
      throw FormatError("unsupported dtype " + header.at("dtype").dump(), header_at);
    }
    shape = header.at("shape").get<Shape>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad tensor header: ") + e.what(), header_at);
  }
  const std::size_t count = numel(shape);
  const std::string payload = read_bytes(in, count * 8, offset);
  std::vector<double> data(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[k * 8 + i])) << (8 * i);
    }
    data[k] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace tldr
