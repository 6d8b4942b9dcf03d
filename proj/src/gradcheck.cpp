#include "tldr/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "tldr/autodiff.hpp"
#include "tldr/random.hpp"
#include "tldr/texture.hpp"
#include "tldr/train.hpp"

namespace tldr {

namespace {

using Rng = std::mt19937_64;

// Values bounded away from zero so relu has no kink within epsilon.
Tensor random_tensor(const Shape& shape, Rng& rng, double lo = 0.1, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> mag(lo, hi);
  for (double& v : t.data()) v = (rng() & 1u) ? mag(rng) : -mag(rng);
  return t;
}

// Distinct values at least 0.01 apart so every max-pool window has a clear winner.
Tensor spread_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + 0.01 * static_cast<double>(order[i]);
  return t;
}

// Contracts a tensor-valued expression to a scalar with random weights.
Var project(Tape& tape, Var y, Rng& rng) {
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng, 0.2, 1.0))));
}

struct Case {
  std::string name;
  std::function<double(Rng&)> run;
};

double check(const ScalarFunction& f, const Tensor& x) { return finite_difference_check(f, x); }

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  auto add = [&](std::string name, std::function<double(Rng&)> run) {
    cases.push_back({std::move(name), std::move(run)});
  };

  add("conv2d", [](Rng& rng) {
    const Tensor x = random_tensor({2, 2, 5, 5}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const std::uint64_t ps = rng();
    double worst = 0.0;
    for (std::size_t stride : {1u, 2u}) {
      for (std::size_t pad : {0u, 1u}) {
        auto proj = [&](Tape& t, Var y) { Rng r(ps); return project(t, y, r); };
        worst = std::max(worst, check([&](Tape& t, Var v) {
          return proj(t, ops::conv2d(v, t.constant(w), t.constant(b), stride, pad)); }, x));
        worst = std::max(worst, check([&](Tape& t, Var v) {
          return proj(t, ops::conv2d(t.constant(x), v, t.constant(b), stride, pad)); }, w));
        worst = std::max(worst, check([&](Tape& t, Var v) {
          return proj(t, ops::conv2d(t.constant(x), t.constant(w), v, stride, pad)); }, b));
      }
    }
    return worst;
  });

  add("relu", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 4}, rng);
    const std::uint64_t ps = rng();
    return check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::relu(v), r); }, x);
  });

  add("max-pool2", [](Rng& rng) {
    const Tensor x = spread_tensor({2, 2, 4, 6}, rng);
    const std::uint64_t ps = rng();
    return check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::max_pool2(v), r); }, x);
  });

  add("avg-pool2", [](Rng& rng) {
    const Tensor x = random_tensor({2, 2, 4, 6}, rng);
    const std::uint64_t ps = rng();
    return check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::avg_pool2(v), r); }, x);
  });

  add("bilinear-upsample", [](Rng& rng) {
    const Tensor x = random_tensor({1, 2, 3, 4}, rng);
    const std::uint64_t ps = rng();
    double worst = 0.0;
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{6, 8}, {5, 7}, {2, 3}}) {
      worst = std::max(worst, check([&](Tape& t, Var v) {
        Rng r(ps);
        return project(t, ops::upsample_bilinear(v, h, w), r);
      }, x));
    }
    return worst;
  });

  add("matmul", [](Rng& rng) {
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const std::uint64_t ps = rng();
    return std::max(
        check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::matmul(v, t.constant(b)), r); }, a),
        check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::matmul(t.constant(a), v), r); }, b));
  });

  add("batched-matmul", [](Rng& rng) {
    const Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 3}, rng);
    const std::uint64_t ps = rng();
    return std::max(
        check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::batched_matmul(v, t.constant(b)), r); }, a),
        check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::batched_matmul(t.constant(a), v), r); }, b));
  });

  add("transpose", [](Rng& rng) {
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
    const std::uint64_t ps = rng();
    auto f = [&](Tape& t, Var v) { Rng r(ps); return project(t, ops::transpose(v), r); };
    return std::max(check(f, a), check(f, b));
  });

  auto binary = [&](std::string name, Var (*op)(Var, Var)) {
    add(std::move(name), [op](Rng& rng) {
      const Tensor a = random_tensor({2, 3, 2}, rng), b = random_tensor({2, 3, 2}, rng);
      const std::uint64_t ps = rng();
      return std::max(
          check([&](Tape& t, Var v) { Rng r(ps); return project(t, op(v, t.constant(b)), r); }, a),
          check([&](Tape& t, Var v) { Rng r(ps); return project(t, op(t.constant(a), v), r); }, b));
    });
  };
  binary("add", ops::add);
  binary("sub", ops::sub);
  binary("mul", ops::mul);

  add("scalar-mul", [](Rng& rng) {
    const Tensor x = random_tensor({3, 3}, rng);
    const double s = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    const std::uint64_t ps = rng();
    return check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::scale(v, s), r); }, x);
  });

  add("sum", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 4}, rng);
    return check([](Tape&, Var v) { return ops::sum(ops::mul(v, v)); }, x);
  });

  add("mean", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 4}, rng);
    return check([](Tape&, Var v) { return ops::mean(ops::mul(v, v)); }, x);
  });

  add("frobenius-norm", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 3}, rng);
    return check([](Tape&, Var v) { return ops::frobenius_norm(v); }, x);
  });

  add("reshape", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 4}, rng);
    const std::uint64_t ps = rng();
    return check([&](Tape& t, Var v) { Rng r(ps); return project(t, ops::reshape(v, {4, 6}), r); }, x);
  });

  add("cross_entropy", [](Rng& rng) {
    const Tensor logits = random_tensor({2, 4, 3, 3}, rng, 0.1, 2.0);
    std::vector<int> labels(2 * 3 * 3);
    for (int& l : labels) l = static_cast<int>(rng() % 4);
    labels[1] = 255;
    labels[7] = 255;
    return check([&](Tape&, Var v) { return cross_entropy(v, labels); }, logits);
  });

  add("gram", [](Rng& rng) {
    const Tensor x = random_tensor({2, 3, 4, 5}, rng);
    const Tensor single = random_tensor({3, 4, 4}, rng);
    const std::uint64_t ps = rng();
    auto f = [&](Tape& t, Var v) { Rng r(ps); return project(t, gram(v), r); };
    return std::max(check(f, x), check(f, single));
  });

  add("texture_reg_loss", [](Rng& rng) {
    const Tensor ref0 = random_tensor({2, 3, 4, 4}, rng), ref1 = random_tensor({2, 5, 2, 2}, rng);
    const Tensor x0 = random_tensor({2, 3, 4, 4}, rng);
    const Tensor x1 = random_tensor({2, 5, 2, 2}, rng);
    const std::vector<double> u{0.7, 1.3};
    return check([&](Tape& t, Var v) {
      const std::vector<Var> ref{gram(t.constant(ref0)), gram(t.constant(ref1))};
      const std::vector<Var> task{gram(v), gram(t.constant(x1))};
      return texture_reg_loss(ref, task, u);
    }, x0);
  });

  add("texture_gen_loss", [](Rng& rng) {
    const Tensor style = random_tensor({2, 3, 4, 4}, rng);
    const Tensor stylized = random_tensor({2, 3, 4, 4}, rng);
    Tensor mask_values({2, 3, 3});
    for (double& m : mask_values.data()) m = (rng() % 3 == 0) ? 0.0 : 1.0;
    const std::vector<Mask> masks{{mask_values, 0.1}};
    const std::vector<double> v{1.5};
    const double a = check([&](Tape& t, Var x) {
      const std::vector<Var> gs{gram(x)}, gsr{gram(t.constant(stylized))};
      return texture_gen_loss(gs, gsr, masks, v);
    }, style);
    const double b = check([&](Tape& t, Var x) {
      const std::vector<Var> gs{gram(t.constant(style))}, gsr{gram(x)};
      return texture_gen_loss(gs, gsr, masks, v);
    }, stylized);
    return std::max(a, b);
  });

  add("total_loss", [](Rng& rng) {
    const Tensor feats = random_tensor({1, 3, 4, 4}, rng);
    const Tensor ref = random_tensor({1, 3, 4, 4}, rng);
    const Tensor style = random_tensor({1, 3, 4, 4}, rng);
    std::vector<int> labels(16);
    for (int& l : labels) l = static_cast<int>(rng() % 3);
    TrainConfig config;
    config.t_total = 100;
    config.t_warm = 10;
    const std::size_t t = rng() % 100;
    Tensor mask_values = Tensor::full({1, 3, 3}, 1.0);
    mask_values[4] = 0.0;
    return check([&](Tape& tape, Var x) {
      const std::vector<double> w1{0.9};
      LossTerms terms;
      terms.orig = cross_entropy(x, labels);
      terms.styl = cross_entropy(ops::scale(x, -0.5), labels);
      const std::vector<Var> gr{gram(tape.constant(ref))}, gx{gram(x)}, gst{gram(tape.constant(style))};
      terms.tr = texture_reg_loss(gr, gx, w1);
      const std::vector<Mask> masks{{mask_values, 0.1}};
      terms.tg = texture_gen_loss(gst, gx, masks, w1);
      return total_loss(terms, t, config);
    }, feats);
  });

  return cases;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::size_t seeds, std::uint64_t first_seed) {
  const std::vector<Case> cases = build_cases();
  std::vector<GradCheckResult> results;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckResult r{cases[c].name, 0.0, 0};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(mix_seed({first_seed + s, c, 0x9c4du}));
      r.worst_relative_error = std::max(r.worst_relative_error, cases[c].run(rng));
      ++r.cases;
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace tldr
