#include "tldr/nets.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "tldr/error.hpp"
#include "tldr/serialize.hpp"

namespace tldr {

namespace {

constexpr char kMagic[] = "TLDRCKPT";
constexpr std::size_t kMagicLen = 8;

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void validate(const EncoderConfig& config) {
  if (config.in_channels == 0) throw ConfigError("encoder: in_channels must be positive");
  if (config.channels.size() != kEncoderStages) {
    throw ConfigError("encoder: exactly " + std::to_string(kEncoderStages) +
                      " stages required, got " + std::to_string(config.channels.size()));
  }
  for (std::size_t c : config.channels) {
    if (c == 0) throw ConfigError("encoder: stage channels must be positive");
  }
}

void validate(const DecoderConfig& config) {
  if (config.num_classes == 0 || config.hidden == 0 || config.skip_channels == 0 ||
      config.deep_channels == 0) {
    throw ConfigError("decoder: all channel counts must be positive");
  }
}

std::vector<Var> bind_params(Tape& tape, const std::vector<Parameter>& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Parameter& p : params) {
    out.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  }
  return out;
}

}  // namespace

Encoder::Encoder(EncoderConfig config, std::vector<Parameter> params, bool frozen)
    : config_(std::move(config)), params_(std::move(params)), frozen_(frozen) {
  validate(config_);
  if (params_.size() != 2 * kEncoderStages) {
    throw FormatError("encoder expects " + std::to_string(2 * kEncoderStages) +
                          " parameter tensors, got " + std::to_string(params_.size()),
                      0);
  }
  std::size_t in = config_.in_channels;
  for (std::size_t s = 0; s < kEncoderStages; ++s) {
    const Shape w{config_.channels[s], in, 3, 3};
    if (params_[2 * s].value.shape() != w || params_[2 * s + 1].value.shape() != Shape{w[0]}) {
      throw DimensionError("encoder stage " + std::to_string(s + 1) +
                           ": parameter shapes do not match config");
    }
    in = config_.channels[s];
  }
}

std::vector<Parameter>& Encoder::mutable_parameters() {
  if (frozen_) throw ContractError("encoder is frozen; parameter updates are rejected");
  return params_;
}

Encoder Encoder::frozen_copy() const { return Encoder(config_, params_, true); }

std::vector<Var> Encoder::bind(Tape& tape) const { return bind_params(tape, params_, !frozen_); }

FeatureStack Encoder::encode(std::span<const Var> bound, Var image) const {
  if (bound.size() != params_.size()) {
    throw ContractError("encode: bound parameter count mismatch");
  }
  Var x = image;
  if (x.value().rank() == 3) {
    const Shape& s = x.shape();
    x = ops::reshape(x, {1, s[0], s[1], s[2]});
  }
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    throw DimensionError("encode: expected N x " + std::to_string(config_.in_channels) +
                         " x H x W image, got " + shape_str(s));
  }
  const std::size_t factor = std::size_t{1} << kEncoderStages;
  if (s[2] % factor || s[3] % factor) {
    throw DimensionError("encode: spatial size " + shape_str(s) + " not divisible by " +
                         std::to_string(factor));
  }
  FeatureStack stack;
  stack.reserve(kEncoderStages);
  for (std::size_t st = 0; st < kEncoderStages; ++st) {
    x = ops::max_pool2(ops::relu(ops::conv2d(x, bound[2 * st], bound[2 * st + 1], 1, 1)));
    stack.push_back(x);
  }
  return stack;
}

FeatureStack Encoder::encode(Tape& tape, Var image) const {
  const auto bound = bind(tape);
  return encode(bound, image);
}

Encoder build_encoder(const EncoderConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  std::vector<Parameter> params;
  std::size_t in = config.in_channels;
  for (std::size_t s = 0; s < kEncoderStages; ++s) {
    const std::size_t out = config.channels[s];
    const std::string stage = "stage" + std::to_string(s + 1);
    params.push_back({stage + ".weight", he_normal({out, in, 3, 3}, in * 9, rng)});
    params.push_back({stage + ".bias", Tensor({out})});
    in = out;
  }
  return Encoder(config, std::move(params), false);
}

Decoder::Decoder(DecoderConfig config, std::vector<Parameter> params)
    : config_(std::move(config)), params_(std::move(params)) {
  validate(config_);
  if (params_.size() != 8) {
    throw FormatError("decoder expects 8 parameter tensors, got " + std::to_string(params_.size()), 0);
  }
  const std::size_t h = config_.hidden;
  const Shape expected[] = {{h, config_.deep_channels, 1, 1}, {h}, {h, config_.skip_channels, 1, 1},
                            {h},  {h, h, 3, 3}, {h}, {config_.num_classes, h, 1, 1},
                            {config_.num_classes}};
  for (std::size_t i = 0; i < 8; ++i) {
    if (params_[i].value.shape() != expected[i]) {
      throw DimensionError("decoder parameter " + params_[i].name + " has shape " +
                           shape_str(params_[i].value.shape()) + ", expected " +
                           shape_str(expected[i]));
    }
  }
}

std::vector<Var> Decoder::bind(Tape& tape) const { return bind_params(tape, params_, true); }

Var Decoder::decode(std::span<const Var> bound, const FeatureStack& features) const {
  if (bound.size() != params_.size()) throw ContractError("decode: bound parameter count mismatch");
  if (features.size() != kEncoderStages) {
    throw DimensionError("decode: expected " + std::to_string(kEncoderStages) +
                         " feature maps, got " + std::to_string(features.size()));
  }
  const Shape& skip_shape = features[1].shape();
  const Shape& deep_shape = features[3].shape();
  if (skip_shape[1] != config_.skip_channels || deep_shape[1] != config_.deep_channels) {
    throw DimensionError("decode: stack " + shape_str(skip_shape) + "/" + shape_str(deep_shape) +
                         " does not match decoder channels");
  }
  const std::size_t out_h = 2 * features[0].shape()[2];
  const std::size_t out_w = 2 * features[0].shape()[3];

  Var deep = ops::conv2d(features[3], bound[0], bound[1]);
  deep = ops::upsample_bilinear(deep, skip_shape[2], skip_shape[3]);
  Var skip = ops::conv2d(features[1], bound[2], bound[3]);
  Var x = ops::relu(ops::add(deep, skip));
  x = ops::relu(ops::conv2d(x, bound[4], bound[5], 1, 1));
  x = ops::conv2d(x, bound[6], bound[7]);
  return ops::upsample_bilinear(x, out_h, out_w);
}

Var Decoder::decode(Tape& tape, const FeatureStack& features) const {
  const auto bound = bind(tape);
  return decode(bound, features);
}

Decoder build_decoder(const DecoderConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  const std::size_t h = config.hidden;
  std::vector<Parameter> params;
  params.push_back({"deep.weight", he_normal({h, config.deep_channels, 1, 1}, config.deep_channels, rng)});
  params.push_back({"deep.bias", Tensor({h})});
  params.push_back({"skip.weight", he_normal({h, config.skip_channels, 1, 1}, config.skip_channels, rng)});
  params.push_back({"skip.bias", Tensor({h})});
  params.push_back({"fuse.weight", he_normal({h, h, 3, 3}, h * 9, rng)});
  params.push_back({"fuse.bias", Tensor({h})});
  Tensor head({config.num_classes, h, 1, 1});
  if (!config.zero_head) {
    std::normal_distribution<double> dist(0.0, 0.01);
    for (double& v : head.data()) v = dist(rng);
  }
  params.push_back({"head.weight", std::move(head)});
  params.push_back({"head.bias", Tensor({config.num_classes})});
  return Decoder(config, std::move(params));
}

DecoderConfig decoder_config_for(const EncoderConfig& encoder, std::size_t num_classes,
                                 std::uint64_t seed) {
  DecoderConfig config;
  config.num_classes = num_classes;
  config.skip_channels = encoder.channels.at(1);
  config.deep_channels = encoder.channels.at(3);
  config.seed = seed;
  return config;
}

Tensor network_input(std::span<const Tensor> images) {
  if (images.empty()) throw ContractError("network_input: empty batch");
  const Shape& first = images.front().shape();
  if (first.size() != 3) throw DimensionError("network_input: expected C x H x W, got " + shape_str(first));
  const std::size_t per = images.front().size();
  Tensor out({images.size(), first[0], first[1], first[2]});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != first) {
      throw DimensionError("network_input: mixed image shapes " + shape_str(first) + " and " +
                           shape_str(images[i].shape()));
    }
    const auto src = images[i].data();
    for (std::size_t k = 0; k < per; ++k) out[i * per + k] = (src[k] - 0.5) / 0.25;
  }
  return out;
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"in_channels", c.in_channels}, {"channels", c.channels}, {"seed", c.seed}};
}

nlohmann::json to_json(const DecoderConfig& c) {
  return {{"num_classes", c.num_classes}, {"hidden", c.hidden},
          {"skip_channels", c.skip_channels}, {"deep_channels", c.deep_channels},
          {"seed", c.seed}, {"zero_head", c.zero_head}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.channels = j.at("channels").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.skip_channels = j.at("skip_channels").get<std::size_t>();
  c.deep_channels = j.at("deep_channels").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.zero_head = j.at("zero_head").get<bool>();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json index = nlohmann::json::array();
  std::vector<const Tensor*> payload;
  auto add_group = [&](const std::string& group, const std::vector<Parameter>& params) {
    for (const Parameter& p : params) {
      index.push_back({{"group", group}, {"name", p.name}, {"shape", p.value.shape()}});
      payload.push_back(&p.value);
    }
  };
  add_group("task_encoder", ckpt.task_encoder.parameters());
  add_group("reference_encoder", ckpt.reference_encoder.parameters());
  add_group("decoder", ckpt.decoder.parameters());
  if (ckpt.first_moments.size() != ckpt.second_moments.size()) {
    throw ContractError("save_checkpoint: moment lists differ in length");
  }
  for (std::size_t i = 0; i < ckpt.first_moments.size(); ++i) {
    index.push_back({{"group", "adam_m"}, {"name", std::to_string(i)},
                     {"shape", ckpt.first_moments[i].shape()}});
    payload.push_back(&ckpt.first_moments[i]);
  }
  for (std::size_t i = 0; i < ckpt.second_moments.size(); ++i) {
    index.push_back({{"group", "adam_v"}, {"name", std::to_string(i)},
                     {"shape", ckpt.second_moments[i].shape()}});
    payload.push_back(&ckpt.second_moments[i]);
  }

  const nlohmann::json manifest = {
      {"version", kCheckpointVersion},
      {"architecture",
       {{"task_encoder", to_json(ckpt.task_encoder.config())},
        {"reference_encoder", to_json(ckpt.reference_encoder.config())},
        {"decoder", to_json(ckpt.decoder.config())}}},
      {"seeds",
       {{"task_encoder", ckpt.task_encoder.config().seed},
        {"reference_encoder", ckpt.reference_encoder.config().seed},
        {"decoder", ckpt.decoder.config().seed}}},
      {"iteration", ckpt.iteration},
      {"metadata", ckpt.metadata},
      {"tensors", index},
  };

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, kMagicLen);
  write_u32(out, kCheckpointVersion);
  const std::string text = manifest.dump();
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : payload) write_tensor(out, *t);
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::size_t offset = 0;
  if (read_bytes(in, kMagicLen, offset) != std::string(kMagic, kMagicLen)) {
    throw FormatError("not a checkpoint file (bad magic)", 0);
  }
  const std::size_t version_at = offset;
  const std::uint32_t version = read_u32(in, offset);
  if (version != kCheckpointVersion) {
    throw IncompatibleVersionError("checkpoint version " + std::to_string(version) +
                                   " is incompatible with supported version " +
                                   std::to_string(kCheckpointVersion) + " (offset " +
                                   std::to_string(version_at) + ")");
  }
  const std::size_t manifest_at = offset;
  const std::uint32_t manifest_len = read_u32(in, offset);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_bytes(in, manifest_len, offset));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what(), manifest_at);
  }

  Checkpoint ckpt;
  try {
    if (manifest.at("version").get<std::uint32_t>() != kCheckpointVersion) {
      throw IncompatibleVersionError("manifest version mismatch");
    }
    std::vector<Parameter> task, reference, decoder;
    for (const auto& entry : manifest.at("tensors")) {
      const std::size_t at = offset;
      Tensor t = read_tensor(in, offset);
      if (t.shape() != entry.at("shape").get<Shape>()) {
        throw FormatError("tensor shape disagrees with manifest", at);
      }
      const std::string group = entry.at("group").get<std::string>();
      const std::string name = entry.at("name").get<std::string>();
      if (group == "task_encoder") task.push_back({name, std::move(t)});
      else if (group == "reference_encoder") reference.push_back({name, std::move(t)});
      else if (group == "decoder") decoder.push_back({name, std::move(t)});
      else if (group == "adam_m") ckpt.first_moments.push_back(std::move(t));
      else if (group == "adam_v") ckpt.second_moments.push_back(std::move(t));
      else throw FormatError("unknown tensor group '" + group + "'", at);
    }
    const auto& arch = manifest.at("architecture");
    ckpt.task_encoder = Encoder(encoder_config_from_json(arch.at("task_encoder")), std::move(task), false);
    ckpt.reference_encoder =
        Encoder(encoder_config_from_json(arch.at("reference_encoder")), std::move(reference), true);
    ckpt.decoder = Decoder(decoder_config_from_json(arch.at("decoder")), std::move(decoder));
    ckpt.iteration = manifest.at("iteration").get<std::uint64_t>();
    ckpt.metadata = manifest.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest field: ") + e.what(), manifest_at);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after last tensor", offset);
  }
  return ckpt;
}

}  // namespace tldr
