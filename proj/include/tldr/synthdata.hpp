#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "tldr/tensor.hpp"

namespace tldr {

enum class ShapeFamily { background, horizontal_band, ellipse, rectangle };

using Rgb = std::array<double, 3>;

// Intensity pattern t(x, y) in [0, 1]; colour = mix(color_a, color_b, t).
struct TextureProgram {
  double stripe_frequency = 0.0;    // cycles per pixel
  double stripe_orientation = 0.0;  // radians, direction of the wave vector
  double stripe_weight = 0.0;
  double checker_period = 0.0;      // pixels; 0 disables
  double checker_weight = 0.0;
  double noise_exponent = 1.0;      // octave amplitude falls as 2^(-exponent * octave)
  double noise_weight = 0.0;
};

struct ClassSpec {
  std::string name;
  ShapeFamily shape = ShapeFamily::background;
  TextureProgram texture;
  Rgb color_a{0.0, 0.0, 0.0};
  Rgb color_b{1.0, 1.0, 1.0};
};

// Applied after rendering, in order: hue rotation about the grey axis,
// contrast about 0.5, brightness offset, additive Gaussian noise, clamp.
struct StyleShift {
  double hue_rotation = 0.0;  // radians
  double contrast = 1.0;
  double brightness = 0.0;
  double noise_level = 0.0;   // standard deviation
};

struct DomainSpec {
  std::string name = "source";
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<ClassSpec> classes;
  StyleShift shift;
  std::uint64_t seed = 0;

  std::size_t num_classes() const noexcept { return classes.size(); }
};

struct SegSample {
  Tensor image;             // 3 x H x W in [0, 1]
  std::vector<int> label;   // H x W
};

struct StyleImage {
  Tensor image;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kBandA = 1;
inline constexpr std::size_t kBandB = 2;

// Five-class source domain: background, band-A, band-B (same shape family,
// different texture), blob, box.
DomainSpec default_source_spec(std::uint64_t seed, std::size_t height = 64, std::size_t width = 64);

// Throws ConfigError when K < 3 or no two classes share a shape family with
// different texture programs.
void validate(const DomainSpec& spec);

// Deterministic in (spec.seed, index).
SegSample generate_sample(const DomainSpec& spec, std::size_t index);
// Same layout and textures as generate_sample, before the style shift.
SegSample render_unshifted(const DomainSpec& spec, std::size_t index);
// A size x size patch filled with one class's texture.
Tensor render_class_patch(const DomainSpec& spec, std::size_t class_index, std::size_t size,
                          std::uint64_t seed);

StyleImage generate_style_image(std::uint64_t seed, std::size_t height = 64, std::size_t width = 64);
std::vector<StyleImage> generate_style_pool(std::uint64_t seed, std::size_t count,
                                            std::size_t height = 64, std::size_t width = 64);

struct DomainPairOptions {
  std::size_t num_targets = 3;
  double texture_perturbation = 0.1;  // relative bound on texture parameters
  std::size_t height = 64;
  std::size_t width = 64;
};

std::pair<DomainSpec, std::vector<DomainSpec>> make_domain_pair(
    std::uint64_t base_seed, const DomainPairOptions& options = {});

nlohmann::json to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const nlohmann::json& j);

}  // namespace tldr
