#include "tldr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "tldr/error.hpp"

namespace tldr {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

// Reads "P?" magic, width, height and maxval, then the single whitespace byte.
void read_header(std::istream& in, const std::filesystem::path& path, const char* magic,
                 std::size_t& width, std::size_t& height) {
  std::string m;
  in >> m;
  if (m != magic) throw FormatError(path.string() + ": expected " + magic + " header", 0);
  auto next_number = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long long v = -1;
    in >> v;
    if (!in || v <= 0) throw FormatError(path.string() + ": bad header field", static_cast<std::size_t>(in.tellg()));
    return static_cast<std::size_t>(v);
  };
  width = next_number();
  height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported", 0);
  in.get();
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected 3 x H x W, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  auto f = open_out(path);
  f << "P6\n" << w << ' ' << h << "\n255\n";
  std::string row(w * 3, '\0');
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(c * h + y) * w + x], 0.0, 1.0);
        row[x * 3 + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("write failed: " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::size_t w = 0, h = 0;
  read_header(in, path, "P6", w, h);
  std::string bytes(w * h * 3, '\0');
  const auto start = static_cast<std::size_t>(in.tellg());
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError(path.string() + ": truncated pixel data", start + static_cast<std::size_t>(in.gcount()));
  }
  Tensor image({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        image[(c * h + y) * w + x] = static_cast<unsigned char>(bytes[(y * w + x) * 3 + c]) / 255.0;
      }
    }
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const std::vector<int>& labels,
               std::size_t height, std::size_t width) {
  if (labels.size() != height * width) {
    throw DimensionError("write_pgm: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  std::string bytes(labels.size(), '\0');
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 255) throw LabelError("write_pgm: label outside 0..255");
    bytes[i] = static_cast<char>(static_cast<unsigned char>(labels[i]));
  }
  auto f = open_out(path);
  f << "P5\n" << width << ' ' << height << "\n255\n";
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<int> read_pgm(const std::filesystem::path& path, std::size_t& height,
                          std::size_t& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  read_header(in, path, "P5", width, height);
  std::string bytes(width * height, '\0');
  const auto start = static_cast<std::size_t>(in.tellg());
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError(path.string() + ": truncated pixel data", start + static_cast<std::size_t>(in.gcount()));
  }
  std::vector<int> labels(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) labels[i] = static_cast<unsigned char>(bytes[i]);
  return labels;
}

}  // namespace tldr
