#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tldr/analyze.hpp"
#include "tldr/nets.hpp"
#include "tldr/stylize.hpp"
#include "tldr/synthdata.hpp"

namespace tldr {

struct TrainConfig {
  std::size_t t_total = 2000;
  std::size_t t_warm = 50;
  std::size_t batch_size = 4;
  double lr_encoder = 1e-3;
  double lr_decoder = 1e-2;
  double weight_decay = 0.01;
  double alpha_orig = 0.5;
  double alpha_styl = 0.5;
  std::vector<double> u{5e-3, 5e-4, 5e-5, 5e-6};
  std::vector<double> v{5e-3, 5e-4, 5e-5, 5e-6};
  double tau = 0.1;
  std::size_t image_size = 64;  // generated domain resolution
  std::size_t crop_size = 64;   // random crop fed to the network
  std::uint64_t seed = 0;       // model init, batch sampling, style draws
  std::uint64_t data_seed = 0;  // domain family and style pool

  bool use_orig = true;
  bool use_styl = true;
  bool use_tr = true;
  bool use_tg = true;
  bool use_rsm = true;
  bool use_ldf = true;
  bool use_teo = true;

  // Indices into the domain family: 0 is the source, 1..num_targets are the
  // shifted targets. Domains not listed here are held out for evaluation.
  std::vector<std::size_t> source_domains{0};
  std::size_t num_targets = 3;
  double texture_perturbation = 0.1;

  std::size_t style_pool_size = 256;
  // Style draws change every this many iterations; 1 redraws every batch.
  std::size_t style_resample_interval = 1;
  bool flip = true;
  double color_jitter = 0.0;  // max brightness offset applied to x^s; 0 disables

  std::size_t eval_samples = 32;
  std::size_t eval_interval = 0;  // 0: evaluate only at the end
  std::size_t log_interval = 10;
  std::size_t stop_at = 0;        // 0: run to t_total

  // Throws ConfigError on violated invariants.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

// w(t) = 1 - t / t_total.
double ldf(std::size_t t, std::size_t t_total);
// Linear warmup reaching base at t = t_warm, then linear decay to 0 at t_total.
double lr_schedule(std::size_t t, double base, std::size_t t_warm, std::size_t t_total);

// Coefficients of the four objective terms at iteration t; zero for disabled
// terms. A lone task loss gets weight 1.
struct LossWeights {
  double orig = 0.0;
  double styl = 0.0;
  double tr = 0.0;
  double tg = 0.0;
};
LossWeights loss_weights(const TrainConfig& config, std::size_t t);

// Terms that were not constructed are left empty.
struct LossTerms {
  std::optional<Var> orig;
  std::optional<Var> styl;
  std::optional<Var> tr;
  std::optional<Var> tg;
};

struct LossBreakdown {
  double orig = 0.0;
  double styl = 0.0;
  double tr = 0.0;   // raw, before w(t)
  double tg = 0.0;   // raw, before w(t)
  double w = 0.0;
  double lr_encoder = 0.0;
  double lr_decoder = 0.0;
  double total = 0.0;
};

// Weighted sum of the present terms. Throws ConfigError when every
// component is disabled and ContractError when an enabled term is missing.
Var total_loss(const LossTerms& terms, std::size_t t, const TrainConfig& config,
               LossBreakdown* breakdown = nullptr);

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One decoupled-decay Adam update of a single tensor; step is 1-based.
void adamw_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::size_t step,
                  double lr, double weight_decay, const AdamWParams& hyper = {});

struct TrainState {
  std::size_t iteration = 0;
  Encoder task_encoder;
  Encoder reference_encoder;  // frozen
  Decoder decoder;
  // One per trainable tensor: task encoder parameters then decoder parameters.
  std::vector<Tensor> first_moments;
  std::vector<Tensor> second_moments;
};

TrainState init_state(const TrainConfig& config, std::size_t num_classes);

// grads aligned with the trainable tensors (task encoder then decoder).
// Throws NumericError naming the parameter on a non-finite gradient.
void optimizer_step(TrainState& state, std::span<const Tensor> grads, double lr_encoder,
                    double lr_decoder, double weight_decay, const AdamWParams& hyper = {});

struct TrainBatch {
  std::vector<Tensor> source;             // x^s
  std::vector<int> labels;                // N*H*W
  std::vector<Tensor> styles;             // x^r
  std::vector<Tensor> stylized;           // x^sr
};

// Renders the batch for iteration t: samples, flips, crops, jitter, style
// draws and transfer. Deterministic in (config.seed, t).
TrainBatch make_batch(const TrainConfig& config, std::span<const DomainSpec> sources,
                      const StylePool& styles, std::size_t t);

// Forward, objective, backward and optimizer step for one iteration.
LossBreakdown train_step(TrainState& state, const TrainBatch& batch, const TrainConfig& config);

// Gradient of the objective for one batch without updating anything.
// Returned tensors are aligned with the trainable tensors.
std::vector<Tensor> objective_gradients(const TrainState& state, const TrainBatch& batch,
                                        const TrainConfig& config, LossBreakdown* breakdown);

struct DomainFamily {
  std::vector<DomainSpec> domains;  // [source, target_1, ..., target_n]
  std::vector<std::size_t> sources;
  std::vector<std::size_t> held_out;
};

DomainFamily make_domain_family(const TrainConfig& config);
StylePool make_style_pool(const TrainConfig& config);

struct MetricRow {
  std::size_t t = 0;
  std::string domain;
  std::string role;  // "source" or "target"
  double miou = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<LossBreakdown> history;  // one per completed iteration
  std::vector<MetricRow> metrics;
  std::vector<Evaluation> final_evaluations;  // held-out domains at the end
};

// Runs to t_total (or stop_at) and, when out_dir is non-empty, writes
// losses.csv, metrics.csv and checkpoint.tldr there.
TrainResult run_training(const TrainConfig& config, const std::filesystem::path& out_dir = {});

void write_losses_csv(std::ostream& out, std::span<const LossBreakdown> history,
                      std::size_t log_interval);
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& config);
TrainState from_checkpoint(const Checkpoint& checkpoint);

}  // namespace tldr
