#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tldr/autodiff.hpp"

namespace tldr {

inline constexpr std::size_t kEncoderStages = 4;

struct Parameter {
  std::string name;
  Tensor value;
};

// Ordered per-stage feature maps, stage l has spatial size H/2^l.
using FeatureStack = std::vector<Var>;

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{8, 16, 32, 64};
  std::uint64_t seed = 0;
};

// Four conv3x3 -> relu -> max-pool2 stages.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig config, std::vector<Parameter> params, bool frozen);

  const EncoderConfig& config() const noexcept { return config_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  // Throws ContractError on a frozen encoder.
  std::vector<Parameter>& mutable_parameters();

  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }
  Encoder frozen_copy() const;

  // Parameters as tape leaves: variables, or constants when frozen.
  std::vector<Var> bind(Tape& tape) const;

  // image: N x 3 x H x W (or 3 x H x W); H and W divisible by 2^4.
  FeatureStack encode(std::span<const Var> bound, Var image) const;
  FeatureStack encode(Tape& tape, Var image) const;

 private:
  EncoderConfig config_;
  std::vector<Parameter> params_;
  bool frozen_ = false;
};

Encoder build_encoder(const EncoderConfig& config);

struct DecoderConfig {
  std::size_t num_classes = 5;
  std::size_t hidden = 32;
  std::size_t skip_channels = 16;  // stage-2 channels
  std::size_t deep_channels = 64;  // stage-4 channels
  std::uint64_t seed = 1;
  bool zero_head = false;
};

// deep(1x1) upsampled to stage-2 resolution + skip(1x1), relu, fuse(3x3),
// relu, head(1x1), bilinear upsample to input resolution.
class Decoder {
 public:
  Decoder() = default;
  Decoder(DecoderConfig config, std::vector<Parameter> params);

  const DecoderConfig& config() const noexcept { return config_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& mutable_parameters() noexcept { return params_; }

  std::vector<Var> bind(Tape& tape) const;
  Var decode(std::span<const Var> bound, const FeatureStack& features) const;
  Var decode(Tape& tape, const FeatureStack& features) const;

 private:
  DecoderConfig config_;
  std::vector<Parameter> params_;
};

Decoder build_decoder(const DecoderConfig& config);

DecoderConfig decoder_config_for(const EncoderConfig& encoder, std::size_t num_classes,
                                 std::uint64_t seed);

// Stacks 3 x H x W images in [0, 1] into N x 3 x H x W and standardises them
// with mean 0.5 and scale 0.25 per channel.
Tensor network_input(std::span<const Tensor> images);

struct Checkpoint {
  Encoder task_encoder;
  Encoder reference_encoder;
  Decoder decoder;
  // Optimizer moments, one per trainable tensor (task encoder then decoder).
  std::vector<Tensor> first_moments;
  std::vector<Tensor> second_moments;
  std::uint64_t iteration = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "TLDRCKPT", u32 version, u32 manifest length, JSON manifest
// (architecture, seeds, iteration, tensor index), then one tensor record per
// index entry in order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const EncoderConfig& config);
nlohmann::json to_json(const DecoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);

}  // namespace tldr
