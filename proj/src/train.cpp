#include "tldr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tldr/error.hpp"
#include "tldr/random.hpp"
#include "tldr/texture.hpp"

namespace tldr {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (t_total == 0) fail("t_total must be positive");
  if (t_warm >= t_total) fail("t_warm (" + std::to_string(t_warm) + ") must be below t_total (" +
                              std::to_string(t_total) + ")");
  if (batch_size == 0) fail("batch_size must be positive");
  if (alpha_orig < 0.0 || alpha_styl < 0.0) fail("alphas must be non-negative");
  if (!(tau >= 0.0)) fail("tau must be non-negative");
  if (lr_encoder < 0.0 || lr_decoder < 0.0 || weight_decay < 0.0) {
    fail("learning rates and weight decay must be non-negative");
  }
  if (!use_orig && !use_styl) fail("at least one task loss must be enabled");
  if (u.size() != kEncoderStages || v.size() != kEncoderStages) {
    fail("u and v need one weight per encoder stage (" + std::to_string(kEncoderStages) + ")");
  }
  if (crop_size == 0 || crop_size % 16 != 0 || crop_size > image_size) {
    fail("crop_size must be a positive multiple of 16 no larger than image_size");
  }
  if (image_size % 16 != 0) fail("image_size must be a multiple of 16");
  if (source_domains.empty()) fail("source_domains is empty");
  for (std::size_t d : source_domains) {
    if (d > num_targets) fail("source domain index " + std::to_string(d) + " out of range");
  }
  if (source_domains.size() > num_targets) fail("no held-out domain left for evaluation");
  if (style_pool_size < 2 && (use_styl || use_tg)) fail("style_pool_size must be at least 2");
  if (style_resample_interval == 0) fail("style_resample_interval must be positive");
  if (log_interval == 0) fail("log_interval must be positive");
  if (eval_samples == 0) fail("eval_samples must be positive");
  if (stop_at > t_total) fail("stop_at beyond t_total");
  if (color_jitter < 0.0) fail("color_jitter must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"t_total", c.t_total},
          {"t_warm", c.t_warm},
          {"batch_size", c.batch_size},
          {"lr_encoder", c.lr_encoder},
          {"lr_decoder", c.lr_decoder},
          {"weight_decay", c.weight_decay},
          {"alpha_orig", c.alpha_orig},
          {"alpha_styl", c.alpha_styl},
          {"u", c.u},
          {"v", c.v},
          {"tau", c.tau},
          {"image_size", c.image_size},
          {"crop_size", c.crop_size},
          {"seed", c.seed},
          {"data_seed", c.data_seed},
          {"use_orig", c.use_orig},
          {"use_styl", c.use_styl},
          {"use_tr", c.use_tr},
          {"use_tg", c.use_tg},
          {"use_rsm", c.use_rsm},
          {"use_ldf", c.use_ldf},
          {"use_teo", c.use_teo},
          {"source_domains", c.source_domains},
          {"num_targets", c.num_targets},
          {"texture_perturbation", c.texture_perturbation},
          {"style_pool_size", c.style_pool_size},
          {"style_resample_interval", c.style_resample_interval},
          {"flip", c.flip},
          {"color_jitter", c.color_jitter},
          {"eval_samples", c.eval_samples},
          {"eval_interval", c.eval_interval},
          {"log_interval", c.log_interval},
          {"stop_at", c.stop_at}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  TrainConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("train config: bad value for '") + key + "': " + e.what());
    }
  };
  get("t_total", c.t_total);
  get("t_warm", c.t_warm);
  get("batch_size", c.batch_size);
  get("lr_encoder", c.lr_encoder);
  get("lr_decoder", c.lr_decoder);
  get("weight_decay", c.weight_decay);
  get("alpha_orig", c.alpha_orig);
  get("alpha_styl", c.alpha_styl);
  get("u", c.u);
  get("v", c.v);
  get("tau", c.tau);
  get("image_size", c.image_size);
  get("crop_size", c.crop_size);
  get("seed", c.seed);
  get("data_seed", c.data_seed);
  get("use_orig", c.use_orig);
  get("use_styl", c.use_styl);
  get("use_tr", c.use_tr);
  get("use_tg", c.use_tg);
  get("use_rsm", c.use_rsm);
  get("use_ldf", c.use_ldf);
  get("use_teo", c.use_teo);
  get("source_domains", c.source_domains);
  get("num_targets", c.num_targets);
  get("texture_perturbation", c.texture_perturbation);
  get("style_pool_size", c.style_pool_size);
  get("style_resample_interval", c.style_resample_interval);
  get("flip", c.flip);
  get("color_jitter", c.color_jitter);
  get("eval_samples", c.eval_samples);
  get("eval_interval", c.eval_interval);
  get("log_interval", c.log_interval);
  get("stop_at", c.stop_at);
  c.validate();
  return c;
}

double ldf(std::size_t t, std::size_t t_total) {
  if (t_total == 0 || t > t_total) {
    throw ContractError("ldf: t=" + std::to_string(t) + " outside [0, " + std::to_string(t_total) + "]");
  }
  return 1.0 - static_cast<double>(t) / static_cast<double>(t_total);
}

double lr_schedule(std::size_t t, double base, std::size_t t_warm, std::size_t t_total) {
  if (t > t_total || t_warm >= t_total) {
    throw ContractError("lr_schedule: t=" + std::to_string(t) + ", t_warm=" +
                        std::to_string(t_warm) + ", t_total=" + std::to_string(t_total));
  }
  if (t < t_warm) return base * static_cast<double>(t + 1) / static_cast<double>(t_warm);
  return base * (1.0 - static_cast<double>(t - t_warm) / static_cast<double>(t_total - t_warm));
}

LossWeights loss_weights(const TrainConfig& config, std::size_t t) {
  LossWeights w;
  if (config.use_orig && config.use_styl) {
    w.orig = config.alpha_orig;
    w.styl = config.alpha_styl;
  } else if (config.use_orig) {
    w.orig = 1.0;
  } else if (config.use_styl) {
    w.styl = 1.0;
  }
  const double decay = config.use_ldf ? ldf(t, config.t_total) : 1.0;
  if (config.use_tr) w.tr = decay;
  if (config.use_tg) w.tg = decay;
  return w;
}

Var total_loss(const LossTerms& terms, std::size_t t, const TrainConfig& config,
               LossBreakdown* breakdown) {
  if (!config.use_orig && !config.use_styl && !config.use_tr && !config.use_tg) {
    throw ConfigError("total_loss: every loss component is disabled");
  }
  const LossWeights w = loss_weights(config, t);
  std::optional<Var> total;
  auto accumulate = [&](bool enabled, const std::optional<Var>& term, double weight,
                        const char* name, double* slot) {
    if (!enabled) return;
    if (!term) throw ContractError(std::string("total_loss: enabled term ") + name + " missing");
    if (term->value().size() != 1) throw ContractError(std::string("total_loss: ") + name + " not scalar");
    if (slot) *slot = term->value().item();
    const Var scaled = ops::scale(*term, weight);
    total = total ? ops::add(*total, scaled) : scaled;
  };
  LossBreakdown local;
  accumulate(config.use_orig, terms.orig, w.orig, "L_orig", &local.orig);
  accumulate(config.use_styl, terms.styl, w.styl, "L_styl", &local.styl);
  accumulate(config.use_tr, terms.tr, w.tr, "L_TR", &local.tr);
  accumulate(config.use_tg, terms.tg, w.tg, "L_TG", &local.tg);
  local.w = config.use_ldf ? ldf(t, config.t_total) : 1.0;
  local.total = total->value().item();
  if (breakdown) {
    breakdown->orig = local.orig;
    breakdown->styl = local.styl;
    breakdown->tr = local.tr;
    breakdown->tg = local.tg;
    breakdown->w = local.w;
    breakdown->total = local.total;
  }
  return *total;
}

void adamw_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::size_t step,
                  double lr, double weight_decay, const AdamWParams& hyper) {
  if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
    throw DimensionError("adamw_update: shape mismatch for parameter " + shape_str(param.shape()));
  }
  if (step == 0) throw ContractError("adamw_update: step is 1-based");
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const double step_size = lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
    const double denom = std::sqrt(v[i]) / bc2_sqrt + hyper.epsilon;
    param[i] = param[i] * decay - step_size * m[i] / denom;
  }
}

TrainState init_state(const TrainConfig& config, std::size_t num_classes) {
  TrainState state;
  EncoderConfig ec;
  ec.seed = mix_seed({config.seed, 0xe1c0u});
  state.reference_encoder = build_encoder(ec);
  state.reference_encoder.freeze();
  state.task_encoder = Encoder(ec, state.reference_encoder.parameters(), false);
  state.decoder = build_decoder(decoder_config_for(ec, num_classes, mix_seed({config.seed, 0xdec0u})));
  for (const auto* group : {&state.task_encoder.parameters(), &state.decoder.parameters()}) {
    for (const Parameter& p : *group) {
      state.first_moments.emplace_back(p.value.shape());
      state.second_moments.emplace_back(p.value.shape());
    }
  }
  return state;
}

void optimizer_step(TrainState& state, std::span<const Tensor> grads, double lr_encoder,
                    double lr_decoder, double weight_decay, const AdamWParams& hyper) {
  auto& enc = state.task_encoder.mutable_parameters();
  auto& dec = state.decoder.mutable_parameters();
  if (grads.size() != enc.size() + dec.size() || state.first_moments.size() != grads.size() ||
      state.second_moments.size() != grads.size()) {
    throw ContractError("optimizer_step: expected " + std::to_string(enc.size() + dec.size()) +
                        " gradients and moments, got " + std::to_string(grads.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      const std::string& name = i < enc.size() ? enc[i].name : dec[i - enc.size()].name;
      throw NumericError("optimizer_step: non-finite gradient for '" + name + "' at iteration " +
                         std::to_string(state.iteration));
    }
  }
  const std::size_t step = state.iteration + 1;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const bool is_enc = i < enc.size();
    Parameter& p = is_enc ? enc[i] : dec[i - enc.size()];
    adamw_update(p.value, grads[i], state.first_moments[i], state.second_moments[i], step,
                 is_enc ? lr_encoder : lr_decoder, weight_decay, hyper);
  }
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Crops (and optionally mirrors) a 3 x H x W image and its label map.
void crop_flip(const Tensor& image, const std::vector<int>& label, std::size_t y0, std::size_t x0,
               std::size_t size, bool flip, Tensor& out_image, std::vector<int>& out_label) {
  const std::size_t w = image.dim(2);
  const std::size_t h = image.dim(1);
  out_image = Tensor({3, size, size});
  out_label.assign(size * size, 0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = x0 + (flip ? size - 1 - x : x);
      const std::size_t sy = y0 + y;
      for (std::size_t c = 0; c < 3; ++c) out_image[(c * size + y) * size + x] = image[(c * h + sy) * w + sx];
      out_label[y * size + x] = label[sy * w + sx];
    }
  }
}

Tensor crop_image(const Tensor& image, std::size_t y0, std::size_t x0, std::size_t size) {
  Tensor out;
  std::vector<int> unused;
  crop_flip(image, std::vector<int>(image.dim(1) * image.dim(2), 0), y0, x0, size, false, out, unused);
  return out;
}


std::vector<Var> grams_of(const FeatureStack& features) {
  std::vector<Var> g;
  g.reserve(features.size());
  for (const Var& f : features) g.push_back(gram(f));
  return g;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(10);
  s << x;
  return s.str();
}

}  // namespace

TrainBatch make_batch(const TrainConfig& config, std::span<const DomainSpec> sources,
                      const StylePool& styles, std::size_t t) {
  if (sources.empty()) throw ContractError("make_batch: no source domain");
  Rng rng(mix_seed({config.seed, 0xba7c4u, t}));
  TrainBatch batch;
  const std::size_t size = config.crop_size;
  for (std::size_t i = 0; i < config.batch_size; ++i) {
    const std::size_t d = sources.size() == 1 ? 0 : rng() % sources.size();
    const DomainSpec& domain = sources[d];
    const std::size_t index = t * config.batch_size + i;
    const SegSample sample = generate_sample(domain, index);
    const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
    if (h < size || w < size) throw DimensionError("make_batch: crop larger than sample");
    const std::size_t y0 = h == size ? 0 : rng() % (h - size + 1);
    const std::size_t x0 = w == size ? 0 : rng() % (w - size + 1);
    const bool flip = config.flip && (rng() & 1u);
    Tensor image;
    std::vector<int> label;
    crop_flip(sample.image, sample.label, y0, x0, size, flip, image, label);
    if (config.color_jitter > 0.0) {
      const double b = uniform(rng, -config.color_jitter, config.color_jitter);
      const double c = 1.0 + uniform(rng, -config.color_jitter, config.color_jitter);
      for (double& p : image.data()) p = std::clamp((p - 0.5) * c + 0.5 + b, 0.0, 1.0);
    }
    batch.source.push_back(std::move(image));
    batch.labels.insert(batch.labels.end(), label.begin(), label.end());
  }
  if (config.use_styl || config.use_tg) {
    const StylizedBatch st = stylize_batch(batch.source, styles,
                                             mix_seed({config.seed, 0x57e1u, t / config.style_resample_interval}));
    batch.stylized = st.images;
    for (std::size_t idx : st.style_indices) {
      const Tensor& s = styles.image(idx);
      if (s.dim(1) == size && s.dim(2) == size) {
        batch.styles.push_back(s);
      } else {
        batch.styles.push_back(crop_image(s, (s.dim(1) - size) / 2, (s.dim(2) - size) / 2, size));
      }
    }
  }
  return batch;
}

std::vector<Tensor> objective_gradients(const TrainState& state, const TrainBatch& batch,
                                        const TrainConfig& config, LossBreakdown* breakdown) {
  const std::size_t t = state.iteration;
  const bool need_s = config.use_orig || config.use_tr || (config.use_tg && config.use_rsm && config.use_teo);
  const bool need_sr = config.use_styl || config.use_tg;
  if (need_sr && (batch.stylized.size() != batch.source.size() || batch.styles.size() != batch.source.size())) {
    throw ContractError("train_step: stylized batch missing or inconsistent");
  }

  Tape tape;
  const std::vector<Var> enc = state.task_encoder.bind(tape);
  const std::vector<Var> dec = state.decoder.bind(tape);

  FeatureStack f_s, f_sr, f_r, f_ref;
  if (need_s) f_s = state.task_encoder.encode(enc, tape.constant(network_input(batch.source)));
  if (need_sr) f_sr = state.task_encoder.encode(enc, tape.constant(network_input(batch.stylized)));
  if (config.use_tg) f_r = state.task_encoder.encode(enc, tape.constant(network_input(batch.styles)));
  if (config.use_tr) {
    const Encoder& ref = state.reference_encoder;
    f_ref = ref.encode(ref.bind(tape), tape.constant(network_input(batch.source)));
  }

  LossTerms terms;
  if (config.use_orig) terms.orig = cross_entropy(state.decoder.decode(dec, f_s), batch.labels);
  if (config.use_styl) terms.styl = cross_entropy(state.decoder.decode(dec, f_sr), batch.labels);

  if (config.use_teo) {
    std::vector<Var> g_s;
    if (need_s) g_s = grams_of(f_s);
    if (config.use_tr) terms.tr = texture_reg_loss(grams_of(f_ref), g_s, config.u);
    if (config.use_tg) {
      const std::vector<Var> g_r = grams_of(f_r), g_sr = grams_of(f_sr);
      std::vector<Mask> masks;
      for (std::size_t l = 0; l < g_sr.size(); ++l) {
        masks.push_back(config.use_rsm ? rsm_mask(g_sr[l].value(), g_s[l].value(), config.tau)
                                       : full_mask(g_sr[l].shape()));
      }
      terms.tg = texture_gen_loss(g_r, g_sr, masks, config.v);
    }
  } else {
    if (config.use_tr) terms.tr = raw_feature_consistency(f_ref, f_s, config.u);
    if (config.use_tg) terms.tg = raw_feature_consistency(f_r, f_sr, config.v);
  }

  LossBreakdown local;
  const Var loss = total_loss(terms, t, config, &local);
  local.lr_encoder = lr_schedule(t, config.lr_encoder, config.t_warm, config.t_total);
  local.lr_decoder = lr_schedule(t, config.lr_decoder, config.t_warm, config.t_total);
  if (breakdown) *breakdown = local;

  const Gradients grads = tape.backward(loss);
  std::vector<Tensor> out;
  out.reserve(enc.size() + dec.size());
  for (const Var& p : enc) out.push_back(grads.get_or_zero(p));
  for (const Var& p : dec) out.push_back(grads.get_or_zero(p));
  return out;
}

LossBreakdown train_step(TrainState& state, const TrainBatch& batch, const TrainConfig& config) {
  if (state.iteration >= config.t_total) {
    throw ContractError("train_step: iteration " + std::to_string(state.iteration) +
                        " already at t_total");
  }
  LossBreakdown b;
  const std::vector<Tensor> grads = objective_gradients(state, batch, config, &b);
  optimizer_step(state, grads, b.lr_encoder, b.lr_decoder, config.weight_decay);
  ++state.iteration;
  return b;
}

DomainFamily make_domain_family(const TrainConfig& config) {
  DomainPairOptions opts;
  opts.num_targets = config.num_targets;
  opts.texture_perturbation = config.texture_perturbation;
  opts.height = config.image_size;
  opts.width = config.image_size;
  auto [source, targets] = make_domain_pair(config.data_seed, opts);
  DomainFamily family;
  family.domains.push_back(std::move(source));
  for (auto& t : targets) family.domains.push_back(std::move(t));
  family.sources = config.source_domains;
  for (std::size_t d = 0; d < family.domains.size(); ++d) {
    if (std::find(family.sources.begin(), family.sources.end(), d) == family.sources.end()) {
      family.held_out.push_back(d);
    }
  }
  return family;
}

StylePool make_style_pool(const TrainConfig& config) {
  std::vector<Tensor> images;
  for (StyleImage& s : generate_style_pool(mix_seed({config.data_seed, 0x5751u}),
                                           config.style_pool_size, config.image_size,
                                           config.image_size)) {
    images.push_back(std::move(s.image));
  }
  return StylePool(std::move(images));
}

void write_losses_csv(std::ostream& out, std::span<const LossBreakdown> history,
                      std::size_t log_interval) {
  if (log_interval == 0) throw ContractError("write_losses_csv: log_interval must be positive");
  out << "t,L_orig,L_styl,L_TR,L_TG,w,lr\n";
  for (std::size_t start = 0; start < history.size(); start += log_interval) {
    const std::size_t end = std::min(history.size(), start + log_interval);
    double o = 0, s = 0, r = 0, g = 0;
    for (std::size_t i = start; i < end; ++i) {
      o += history[i].orig;
      s += history[i].styl;
      r += history[i].tr;
      g += history[i].tg;
    }
    const double n = static_cast<double>(end - start);
    const LossBreakdown& last = history[end - 1];
    out << end - 1 << ',' << fmt(o / n) << ',' << fmt(s / n) << ',' << fmt(r / n) << ','
        << fmt(g / n) << ',' << fmt(last.w) << ',' << fmt(last.lr_encoder) << '\n';
  }
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "t,domain,role,miou\n";
  for (const MetricRow& r : rows) out << r.t << ',' << r.domain << ',' << r.role << ',' << fmt(r.miou) << '\n';
}

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& config) {
  Checkpoint ck;
  ck.task_encoder = state.task_encoder;
  ck.reference_encoder = state.reference_encoder;
  ck.decoder = state.decoder;
  ck.first_moments = state.first_moments;
  ck.second_moments = state.second_moments;
  ck.iteration = state.iteration;
  ck.metadata = {{"train_config", to_json(config)}};
  return ck;
}

TrainState from_checkpoint(const Checkpoint& ck) {
  TrainState state;
  state.iteration = ck.iteration;
  state.task_encoder = Encoder(ck.task_encoder.config(), ck.task_encoder.parameters(), false);
  state.reference_encoder = ck.reference_encoder.frozen_copy();
  state.decoder = ck.decoder;
  state.first_moments = ck.first_moments;
  state.second_moments = ck.second_moments;
  const std::size_t n = state.task_encoder.parameters().size() + state.decoder.parameters().size();
  if (state.first_moments.empty() && state.second_moments.empty()) {
    for (const auto* group : {&state.task_encoder.parameters(), &state.decoder.parameters()}) {
      for (const Parameter& p : *group) {
        state.first_moments.emplace_back(p.value.shape());
        state.second_moments.emplace_back(p.value.shape());
      }
    }
  }
  if (state.first_moments.size() != n || state.second_moments.size() != n) {
    throw FormatError("checkpoint: optimizer moments do not match parameters", 0);
  }
  return state;
}

TrainResult run_training(const TrainConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const DomainFamily family = make_domain_family(config);
  std::vector<DomainSpec> sources;
  for (std::size_t d : family.sources) sources.push_back(family.domains[d]);
  const StylePool styles = (config.use_styl || config.use_tg) ? make_style_pool(config) : StylePool{};

  TrainResult result;
  result.state = init_state(config, family.domains.front().num_classes());
  const std::size_t end = config.stop_at ? config.stop_at : config.t_total;
  result.history.reserve(end);

  auto evaluate_all = [&](std::size_t t, bool final) {
    for (std::size_t d = 0; d < family.domains.size(); ++d) {
      const bool is_source =
          std::find(family.sources.begin(), family.sources.end(), d) != family.sources.end();
      Evaluation e = evaluate(result.state.task_encoder, result.state.decoder, family.domains[d],
                              config.eval_samples);
      result.metrics.push_back({t, e.domain, is_source ? "source" : "target", e.iou.mean});
      if (final && !is_source) result.final_evaluations.push_back(std::move(e));
    }
  };

  for (std::size_t t = 0; t < end; ++t) {
    const TrainBatch batch = make_batch(config, sources, styles, t);
    result.history.push_back(train_step(result.state, batch, config));
    if (config.eval_interval && (t + 1) % config.eval_interval == 0 && t + 1 < end) {
      evaluate_all(t + 1, false);
    }
  }
  evaluate_all(end, true);

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    auto open = [](const std::filesystem::path& p) {
      std::ofstream f(p, std::ios::binary);
      if (!f) throw IoError("cannot write " + p.string());
      return f;
    };
    {
      auto f = open(out_dir / "losses.csv");
      write_losses_csv(f, result.history, config.log_interval);
    }
    {
      auto f = open(out_dir / "metrics.csv");
      write_metrics_csv(f, result.metrics);
    }
    save_checkpoint(to_checkpoint(result.state, config), out_dir / "checkpoint.tldr");
  }
  return result;
}

}  // namespace tldr
