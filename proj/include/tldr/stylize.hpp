#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "tldr/tensor.hpp"

namespace tldr {

inline constexpr double kDefaultWctEpsilon = 1e-5;

// Per-pixel colour statistics of a 3 x H x W image (population covariance).
struct StyleStats {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  double epsilon = kDefaultWctEpsilon;
};

StyleStats extract_stats(const Tensor& image);

// Global whitening-colouring of pixel colours: p -> A (p - mu_c) + mu_s with
// A = Sigma_s^{1/2} Sigma_c^{-1/2}, eigenvalues regularised by +epsilon.
// One affine map for the whole image, so equal colours stay equal and label
// boundaries keep their alignment.
Tensor wct_transfer(const Tensor& content, const StyleStats& style,
                    double epsilon = kDefaultWctEpsilon, bool clamp = true);

// Style images with their statistics precomputed.
class StylePool {
 public:
  StylePool() = default;
  explicit StylePool(std::vector<Tensor> images);

  std::size_t size() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  const StyleStats& stats(std::size_t i) const { return stats_.at(i); }

 private:
  std::vector<Tensor> images_;
  std::vector<StyleStats> stats_;
};

struct StylizedBatch {
  std::vector<Tensor> images;             // x^sr, one per content
  std::vector<std::size_t> style_indices; // pool index of the paired x^r
};

// Draws one style per content uniformly from the pool (deterministic in seed)
// and transfers it.
StylizedBatch stylize_batch(std::span<const Tensor> contents, const StylePool& pool,
                            std::uint64_t seed, double epsilon = kDefaultWctEpsilon);

}  // namespace tldr
