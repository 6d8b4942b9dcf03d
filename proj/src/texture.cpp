#include "tldr/texture.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "tldr/error.hpp"

namespace tldr {

namespace {

Var zero_scalar(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

void require_layers(std::string_view op, std::size_t a, std::size_t b, std::size_t w) {
  if (a != b || a != w) {
    throw ContractError(std::string(op) + ": layer counts differ (" + std::to_string(a) + ", " +
                        std::to_string(b) + ", weights " + std::to_string(w) + ")");
  }
  if (a == 0) throw ContractError(std::string(op) + ": no layers");
}

}  // namespace

Var gram(Var features) {
  const Shape& s = features.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw DimensionError("gram: expected C x H x W or N x C x H x W, got " + shape_str(s));
  }
  const bool batched = s.size() == 4;
  const std::size_t n = batched ? s[0] : 1;
  const std::size_t c = s[s.size() - 3];
  const std::size_t hw = s[s.size() - 2] * s[s.size() - 1];
  if (c == 0 || hw == 0) throw DimensionError("gram: empty feature map " + shape_str(s));
  const Var flat = ops::reshape(features, {n, c, hw});
  Var g = ops::batched_matmul(flat, ops::transpose(flat));
  // Vectorised products are not bit-symmetric; averaging with the transpose is.
  g = ops::scale(ops::add(g, ops::transpose(g)), 0.5 / static_cast<double>(c * hw));
  return batched ? g : ops::reshape(g, {c, c});
}

Mask rsm_mask(const Tensor& gram_sr, const Tensor& gram_s, double tau) {
  if (gram_sr.shape() != gram_s.shape()) {
    throw DimensionError("rsm_mask: shape mismatch " + shape_str(gram_sr.shape()) + " vs " +
                         shape_str(gram_s.shape()));
  }
  Mask mask{Tensor(gram_sr.shape()), tau};
  for (std::size_t i = 0; i < gram_sr.size(); ++i) {
    mask.values[i] = (gram_sr[i] - gram_s[i]) > tau ? 1.0 : 0.0;
  }
  return mask;
}

Mask full_mask(const Shape& shape) {
  return Mask{Tensor::full(shape, 1.0), -std::numeric_limits<double>::infinity()};
}

std::vector<double> default_layer_weights(std::size_t layers) {
  std::vector<double> w(layers);
  for (std::size_t l = 1; l <= layers; ++l) w[l - 1] = 5.0 * std::pow(10.0, -static_cast<double>(l) - 2.0);
  return w;
}

Var texture_reg_loss(std::span<const Var> grams_ref, std::span<const Var> grams_task,
                     std::span<const double> u) {
  require_layers("texture_reg_loss", grams_ref.size(), grams_task.size(), u.size());
  Tape& tape = *grams_task[0].tape();
  Var total = zero_scalar(tape);
  for (std::size_t l = 0; l < grams_task.size(); ++l) {
    const Var ref = grams_ref[l].requires_grad() ? detach(grams_ref[l]) : grams_ref[l];
    const Var diff = ops::sub(ref, grams_task[l]);
    total = ops::add(total, ops::scale(ops::frobenius_norm(diff), u[l]));
  }
  return total;
}

Var texture_gen_loss(std::span<const Var> grams_style, std::span<const Var> grams_stylized,
                     std::span<const Mask> masks, std::span<const double> v) {
  require_layers("texture_gen_loss", grams_style.size(), grams_stylized.size(), v.size());
  if (masks.size() != v.size()) throw ContractError("texture_gen_loss: one mask per layer required");
  Tape& tape = *grams_stylized[0].tape();
  Var total = zero_scalar(tape);
  for (std::size_t l = 0; l < grams_style.size(); ++l) {
    if (masks[l].values.shape() != grams_style[l].shape()) {
      throw DimensionError("texture_gen_loss: mask " + shape_str(masks[l].values.shape()) +
                           " vs gram " + shape_str(grams_style[l].shape()));
    }
    const Var diff = ops::sub(grams_style[l], grams_stylized[l]);
    const Var masked = ops::mul(diff, tape.constant(masks[l].values));
    total = ops::add(total, ops::scale(ops::frobenius_norm(masked), v[l]));
  }
  return total;
}

Var raw_feature_consistency(std::span<const Var> features_a, std::span<const Var> features_b,
                            std::span<const double> weights) {
  require_layers("raw_feature_consistency", features_a.size(), features_b.size(), weights.size());
  Tape& tape = *features_a[0].tape();
  Var total = zero_scalar(tape);
  for (std::size_t l = 0; l < features_a.size(); ++l) {
    const Shape& s = features_a[l].shape();
    if (s.size() < 3) throw DimensionError("raw_feature_consistency: rank < 3: " + shape_str(s));
    const double chw = static_cast<double>(s[s.size() - 3] * s[s.size() - 2] * s[s.size() - 1]);
    const Var diff = ops::sub(features_a[l], features_b[l]);
    total = ops::add(total, ops::scale(ops::frobenius_norm(diff), weights[l] / chw));
  }
  return total;
}

void write_gram_csv(std::ostream& out, const Tensor& g, std::size_t layer, std::size_t batch_item) {
  const std::size_t c = g.dim(g.rank() - 1);
  if (g.dim(g.rank() - 2) != c) throw DimensionError("write_gram_csv: not square " + shape_str(g.shape()));
  const std::size_t offset = batch_item * c * c;
  if (offset + c * c > g.size()) throw DimensionError("write_gram_csv: batch item out of range");
  out << "# layer=" << layer << ",channels=" << c << ",normalization=CHW\n";
  out.precision(17);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (j) out << ',';
      out << g[offset + i * c + j];
    }
    out << '\n';
  }
}

}  // namespace tldr
