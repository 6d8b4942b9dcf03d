#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <sstream>

#include "tldr/error.hpp"
#include "tldr/train.hpp"

using namespace tldr;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.t_total = 6;
  c.t_warm = 2;
  c.batch_size = 2;
  c.image_size = 32;
  c.crop_size = 32;
  c.style_pool_size = 4;
  c.eval_samples = 4;
  c.num_targets = 1;
  c.log_interval = 2;
  c.seed = 3;
  c.data_seed = 3;
  return c;
}

struct Fixture {
  TrainConfig config;
  DomainFamily family;
  StylePool pool;
  TrainState state;
  TrainBatch batch;

  explicit Fixture(const TrainConfig& c)
      : config(c), family(make_domain_family(c)), pool(make_style_pool(c)),
        state(init_state(c, family.domains[0].num_classes())) {
    const std::vector<DomainSpec> sources{family.domains[0]};
    batch = make_batch(c, sources, pool, 0);
  }
};

double max_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, max_abs_diff(a[i], b[i]));
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Ldf, LinearDecay) {
  EXPECT_EQ(ldf(0, 2000), 1.0);
  EXPECT_EQ(ldf(1000, 2000), 0.5);
  EXPECT_EQ(ldf(2000, 2000), 0.0);
  EXPECT_DOUBLE_EQ(ldf(500, 2000), 0.75);
  EXPECT_THROW(ldf(2001, 2000), ContractError);
  EXPECT_THROW(ldf(0, 0), ContractError);
}

TEST(LrSchedule, WarmupThenLinearDecay) {
  EXPECT_EQ(lr_schedule(0, 1.0, 50, 2000), 1.0 / 50.0);
  EXPECT_EQ(lr_schedule(49, 1.0, 50, 2000), 1.0);
  EXPECT_EQ(lr_schedule(50, 1.0, 50, 2000), 1.0);
  EXPECT_EQ(lr_schedule(2000, 1.0, 50, 2000), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(1025, 2.0, 50, 2000), 1.0);
  EXPECT_EQ(lr_schedule(0, 0.3, 0, 10), 0.3);
  EXPECT_THROW(lr_schedule(11, 1.0, 0, 10), ContractError);
  EXPECT_THROW(lr_schedule(0, 1.0, 10, 10), ContractError);
}

TEST(TotalLoss, UnitTermsAtStartAndEnd) {
  TrainConfig c;
  Tape tape;
  const Var one = tape.constant(Tensor::from({1.0}));
  const LossTerms terms{one, one, one, one};
  LossBreakdown b;
  EXPECT_DOUBLE_EQ(total_loss(terms, 0, c, &b).value().item(), 3.0);
  EXPECT_EQ(b.w, 1.0);
  EXPECT_DOUBLE_EQ(total_loss(terms, c.t_total, c, &b).value().item(), 1.0);
  EXPECT_EQ(b.w, 0.0);
  EXPECT_EQ(b.tr, 1.0);
  c.use_ldf = false;
  EXPECT_DOUBLE_EQ(total_loss(terms, c.t_total, c).value().item(), 3.0);
}

TEST(TotalLoss, LoneTaskLossHasUnitWeight) {
  TrainConfig c;
  c.use_orig = c.use_tr = c.use_tg = false;
  Tape tape;
  LossTerms terms;
  terms.styl = tape.constant(Tensor::from({2.5}));
  EXPECT_EQ(total_loss(terms, 7, c).value().item(), 2.5);
  const LossWeights w = loss_weights(c, 7);
  EXPECT_EQ(w.orig, 0.0);
  EXPECT_EQ(w.tr, 0.0);
}

TEST(TotalLoss, Errors) {
  TrainConfig c;
  Tape tape;
  LossTerms terms;
  EXPECT_THROW(total_loss(terms, 0, c), ContractError);
  c.use_orig = c.use_styl = c.use_tr = c.use_tg = false;
  EXPECT_THROW(total_loss(terms, 0, c), ConfigError);
}

TEST(AdamW, ScalarOracle) {
  // Two steps written out by hand.
  const double lr = 0.1, wd = 0.5, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double p = 1.0, m = 0.0, v = 0.0;
  const double grads[2] = {0.3, -0.7};
  Tensor tp = Tensor::from({1.0}), tm({1}), tv({1});
  for (std::size_t step = 1; step <= 2; ++step) {
    const double g = grads[step - 1];
    p *= 1.0 - lr * wd;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, step));
    const double vhat = v / (1 - std::pow(b2, step));
    p -= lr * mhat / (std::sqrt(vhat) + eps);
    adamw_update(tp, Tensor::from({g}), tm, tv, step, lr, wd);
    EXPECT_NEAR(tp[0], p, 1e-12);
  }
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  Tensor p = Tensor::from({2.0, -4.0}), m({2}), v({2});
  adamw_update(p, Tensor({2}), m, v, 1, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * 0.98);
  EXPECT_DOUBLE_EQ(p[1], -4.0 * 0.98);
  EXPECT_THROW(adamw_update(p, Tensor({3}), m, v, 1, 0.1, 0.2), DimensionError);
  EXPECT_THROW(adamw_update(p, Tensor({2}), m, v, 0, 0.1, 0.2), ContractError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = tiny_config();
  c.use_rsm = false;
  c.num_targets = 2;
  c.source_domains = {0, 1};
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  nlohmann::json j = to_json(c);
  j["bogus"] = 1;
  EXPECT_THROW(train_config_from_json(j), ConfigError);
  TrainConfig bad = tiny_config();
  bad.t_warm = bad.t_total;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.crop_size = 48;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.u = {1.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(InitState, TaskStartsAtReferenceAndReferenceIsFrozen) {
  const TrainState s = init_state(tiny_config(), 5);
  EXPECT_TRUE(s.reference_encoder.frozen());
  EXPECT_FALSE(s.task_encoder.frozen());
  for (std::size_t i = 0; i < s.task_encoder.parameters().size(); ++i) {
    EXPECT_EQ(s.task_encoder.parameters()[i].value, s.reference_encoder.parameters()[i].value);
  }
  EXPECT_EQ(s.first_moments.size(), s.task_encoder.parameters().size() + s.decoder.parameters().size());
}

TEST(MakeBatch, DeterministicWithConsistentShapes) {
  Fixture f(tiny_config());
  const std::vector<DomainSpec> sources{f.family.domains[0]};
  const TrainBatch again = make_batch(f.config, sources, f.pool, 0);
  ASSERT_EQ(f.batch.source.size(), 2u);
  EXPECT_EQ(f.batch.labels, again.labels);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(f.batch.source[i], again.source[i]);
    EXPECT_EQ(f.batch.stylized[i], again.stylized[i]);
    EXPECT_EQ(f.batch.stylized[i].shape(), f.batch.source[i].shape());
    EXPECT_EQ(f.batch.styles[i].shape(), f.batch.source[i].shape());
  }
  EXPECT_EQ(f.batch.labels.size(), 2u * 32 * 32);
}

TEST(MakeBatch, StyleDrawsHeldForResampleInterval) {
  TrainConfig c = tiny_config();
  c.style_pool_size = 16;
  c.batch_size = 4;
  c.style_resample_interval = 3;
  Fixture f(c);
  const std::vector<DomainSpec> sources{f.family.domains[0]};
  const TrainBatch t1 = make_batch(c, sources, f.pool, 1);
  const TrainBatch t2 = make_batch(c, sources, f.pool, 2);
  const TrainBatch t3 = make_batch(c, sources, f.pool, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(f.batch.styles[i], t2.styles[i]);
    EXPECT_EQ(t1.styles[i], t2.styles[i]);
  }
  bool changed = false;
  for (std::size_t i = 0; i < 4; ++i) changed = changed || t3.styles[i] != t2.styles[i];
  EXPECT_TRUE(changed);
  c.style_resample_interval = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainStep, ReferenceEncoderNeverMoves) {
  Fixture f(tiny_config());
  const Encoder before = f.state.reference_encoder;
  const LossBreakdown b = train_step(f.state, f.batch, f.config);
  EXPECT_EQ(f.state.iteration, 1u);
  EXPECT_GT(b.total, 0.0);
  for (std::size_t i = 0; i < before.parameters().size(); ++i) {
    EXPECT_EQ(f.state.reference_encoder.parameters()[i].value, before.parameters()[i].value);
  }
  EXPECT_NE(f.state.task_encoder.parameters()[0].value, before.parameters()[0].value);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  TrainConfig c = tiny_config();
  c.lr_encoder = c.lr_decoder = 0.0;
  Fixture f(c);
  const Encoder enc = f.state.task_encoder;
  const Decoder dec = f.state.decoder;
  train_step(f.state, f.batch, c);
  for (std::size_t i = 0; i < enc.parameters().size(); ++i) {
    EXPECT_EQ(f.state.task_encoder.parameters()[i].value, enc.parameters()[i].value);
  }
  for (std::size_t i = 0; i < dec.parameters().size(); ++i) {
    EXPECT_EQ(f.state.decoder.parameters()[i].value, dec.parameters()[i].value);
  }
}

TEST(TrainStep, StopsAtTotal) {
  Fixture f(tiny_config());
  f.state.iteration = f.config.t_total;
  EXPECT_THROW(train_step(f.state, f.batch, f.config), ContractError);
}

TEST(ObjectiveGradients, StylOnlyReportsNoOtherTerms) {
  TrainConfig c = tiny_config();
  c.use_orig = c.use_tr = c.use_tg = false;
  Fixture f(c);
  LossBreakdown b;
  objective_gradients(f.state, f.batch, c, &b);
  EXPECT_EQ(b.orig, 0.0);
  EXPECT_EQ(b.tr, 0.0);
  EXPECT_EQ(b.tg, 0.0);
  EXPECT_GT(b.styl, 0.0);
  EXPECT_DOUBLE_EQ(b.total, b.styl);
}

TEST(ObjectiveGradients, ZeroLayerWeightsMatchDisabledTerms) {
  const TrainConfig full = tiny_config();
  Fixture f(full);
  TrainConfig zero_u = full, no_tr = full;
  zero_u.u = {0, 0, 0, 0};
  no_tr.use_tr = false;
  EXPECT_LT(max_diff(objective_gradients(f.state, f.batch, zero_u, nullptr),
                     objective_gradients(f.state, f.batch, no_tr, nullptr)),
            1e-12);
  TrainConfig zero_v = full, no_tg = full;
  zero_v.v = {0, 0, 0, 0};
  no_tg.use_tg = false;
  EXPECT_LT(max_diff(objective_gradients(f.state, f.batch, zero_v, nullptr),
                     objective_gradients(f.state, f.batch, no_tg, nullptr)),
            1e-12);
}

TEST(ObjectiveGradients, TextureTermsVanishAtInitialisation) {
  // Task and reference encoders coincide at t = 0, so L_TR starts at zero.
  Fixture f(tiny_config());
  LossBreakdown b;
  objective_gradients(f.state, f.batch, f.config, &b);
  EXPECT_EQ(b.tr, 0.0);
  EXPECT_GT(b.tg, 0.0);
}

TEST(ObjectiveGradients, RawFeatureRoutingWithoutTeo) {
  TrainConfig c = tiny_config();
  Fixture f(c);
  c.use_teo = false;
  LossBreakdown with_teo, raw;
  objective_gradients(f.state, f.batch, f.config, &with_teo);
  objective_gradients(f.state, f.batch, c, &raw);
  EXPECT_EQ(raw.tr, 0.0);
  EXPECT_GT(raw.tg, 0.0);
  EXPECT_NE(raw.tg, with_teo.tg);
  EXPECT_EQ(raw.orig, with_teo.orig);
}

TEST(ObjectiveGradients, InfiniteTauMatchesNoGeneralizationLoss) {
  TrainConfig masked = tiny_config();
  masked.tau = std::numeric_limits<double>::infinity();
  Fixture f(masked);
  TrainConfig off = masked;
  off.use_tg = false;
  LossBreakdown b;
  const auto g = objective_gradients(f.state, f.batch, masked, &b);
  EXPECT_EQ(b.tg, 0.0);
  EXPECT_LT(max_diff(g, objective_gradients(f.state, f.batch, off, nullptr)), 1e-12);
}

TEST(OptimizerStep, NonFiniteGradientNamesParameter) {
  Fixture f(tiny_config());
  std::vector<Tensor> grads = objective_gradients(f.state, f.batch, f.config, nullptr);
  grads[1][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    optimizer_step(f.state, grads, 0.1, 0.1, 0.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find(f.state.task_encoder.parameters()[1].name), std::string::npos);
  }
}

TEST(DomainFamily, SourcesAndHeldOut) {
  TrainConfig c = tiny_config();
  c.num_targets = 3;
  c.source_domains = {0, 2};
  const DomainFamily fam = make_domain_family(c);
  EXPECT_EQ(fam.domains.size(), 4u);
  EXPECT_EQ(fam.sources, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(fam.held_out, (std::vector<std::size_t>{1, 3}));
}

TEST(RunTraining, StopAtAndOutputs) {
  TrainConfig c = tiny_config();
  c.stop_at = 3;
  const fs::path dir = fs::temp_directory_path() / ("tldr_train_" + std::to_string(::getpid()));
  const TrainResult r = run_training(c, dir);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.state.iteration, 3u);
  EXPECT_EQ(r.final_evaluations.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.tldr"));
  const std::string losses = slurp(dir / "losses.csv");
  EXPECT_EQ(losses.substr(0, losses.find('\n')), "t,L_orig,L_styl,L_TR,L_TG,w,lr");
  const TrainState back = from_checkpoint(load_checkpoint(dir / "checkpoint.tldr"));
  EXPECT_EQ(back.iteration, 3u);
  EXPECT_EQ(back.task_encoder.parameters()[0].value, r.state.task_encoder.parameters()[0].value);
  fs::remove_all(dir);
}

TEST(RunTraining, Deterministic) {
  TrainConfig c = tiny_config();
  const TrainResult a = run_training(c);
  const TrainResult b = run_training(c);
  std::ostringstream la, lb, ma, mb;
  write_losses_csv(la, a.history, c.log_interval);
  write_losses_csv(lb, b.history, c.log_interval);
  write_metrics_csv(ma, a.metrics);
  write_metrics_csv(mb, b.metrics);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(ma.str(), mb.str());
}

TEST(RunTraining, MultipleSourceDomains) {
  TrainConfig c = tiny_config();
  c.num_targets = 2;
  c.source_domains = {0, 1};
  c.stop_at = 2;
  const TrainResult r = run_training(c);
  ASSERT_EQ(r.final_evaluations.size(), 1u);
  EXPECT_EQ(r.final_evaluations[0].domain, "target2");
}

TEST(LossesCsv, AveragesPerInterval) {
  std::vector<LossBreakdown> h(3);
  h[0].orig = 1.0;
  h[1].orig = 3.0;
  h[2].orig = 5.0;
  std::ostringstream s;
  write_losses_csv(s, h, 2);
  std::istringstream in(s.str());
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(row1.substr(0, row1.find(',', 2)), "1,2");
  EXPECT_EQ(row2.substr(0, row2.find(',', 2)), "2,5");
}
