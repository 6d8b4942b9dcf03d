#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "tldr/autodiff.hpp"

namespace tldr {

// Boolean C x C selection (stored as 0/1 doubles so it can enter mul()).
struct Mask {
  Tensor values;
  double tau = 0.0;
};

// Texture extraction: features C x H x W -> C x C, or N x C x H x W ->
// N x C x C, with G[i][j] = sum_p F_i(p) F_j(p) / (C H W).
Var gram(Var features);

// M = 1 where (gram_sr - gram_s) > tau, strictly; no gradient pathway.
Mask rsm_mask(const Tensor& gram_sr, const Tensor& gram_s, double tau);

// Mask of all ones, used when random style masking is disabled.
Mask full_mask(const Shape& shape);

// Per-layer weights 5 x 10^(-l-2) for l = 1..layers.
std::vector<double> default_layer_weights(std::size_t layers);

// sum_l u_l * ||G_ref^l - G_task^l||_F. The reference grams are detached.
Var texture_reg_loss(std::span<const Var> grams_ref, std::span<const Var> grams_task,
                     std::span<const double> u);

// sum_l v_l * ||(G_style^l - G_stylized^l) (.) M^l||_F.
Var texture_gen_loss(std::span<const Var> grams_style, std::span<const Var> grams_stylized,
                     std::span<const Mask> masks, std::span<const double> v);

// sum_l w_l * ||F_a^l - F_b^l||_F / (C_l H_l W_l). Stand-in for the texture
// losses when texture extraction is switched off.
Var raw_feature_consistency(std::span<const Var> features_a, std::span<const Var> features_b,
                            std::span<const double> weights);

// Row-major CSV dump of one gram matrix (or one batch item of N x C x C),
// preceded by a "# layer=..,channels=.." metadata line.
void write_gram_csv(std::ostream& out, const Tensor& gram, std::size_t layer,
                    std::size_t batch_item = 0);

}  // namespace tldr
