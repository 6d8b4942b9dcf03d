#include "tldr/stylize.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "tldr/error.hpp"

namespace tldr {

namespace {

void require_color_image(std::string_view op, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError(std::string(op) + ": expected 3 x H x W image, got " +
                         shape_str(image.shape()));
  }
}

// Symmetric matrix power via eigendecomposition with (max(lambda, 0) + eps).
Eigen::Matrix3d regularized_power(const Eigen::Matrix3d& sym, double eps, double power) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("wct: eigendecomposition failed");
  Eigen::Vector3d scaled;
  for (int i = 0; i < 3; ++i) {
    scaled[i] = std::pow(std::max(solver.eigenvalues()[i], 0.0) + eps, power);
  }
  return solver.eigenvectors() * scaled.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

StyleStats extract_stats(const Tensor& image) {
  require_color_image("extract_stats", image);
  const std::size_t n = image.dim(1) * image.dim(2);
  if (n < 2) throw DimensionError("extract_stats: need at least two pixels");
  StyleStats stats;
  const double* d = image.data().data();
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += d[c * n + p];
    stats.mean[c] = s / static_cast<double>(n);
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        s += (d[a * n + p] - stats.mean[a]) * (d[b * n + p] - stats.mean[b]);
      }
      stats.covariance(a, b) = stats.covariance(b, a) = s / static_cast<double>(n);
    }
  }
  return stats;
}

Tensor wct_transfer(const Tensor& content, const StyleStats& style, double epsilon, bool clamp) {
  require_color_image("wct_transfer", content);
  if (!(epsilon > 0.0)) throw ContractError("wct_transfer: epsilon must be positive");
  if (!style.mean.allFinite() || !style.covariance.allFinite()) {
    throw NumericError("wct_transfer: non-finite style statistics");
  }
  const StyleStats source = extract_stats(content);
  const Eigen::Matrix3d transform = regularized_power(style.covariance, epsilon, 0.5) *
                                    regularized_power(source.covariance, epsilon, -0.5);
  if (!transform.allFinite()) throw NumericError("wct_transfer: non-finite transform");

  const std::size_t n = content.dim(1) * content.dim(2);
  Tensor out(content.shape());
  const double* src = content.data().data();
  double* dst = out.data().data();
  for (std::size_t p = 0; p < n; ++p) {
    const Eigen::Vector3d centered(src[p] - source.mean[0], src[n + p] - source.mean[1],
                                   src[2 * n + p] - source.mean[2]);
    const Eigen::Vector3d mapped = transform * centered + style.mean;
    for (int c = 0; c < 3; ++c) {
      dst[c * n + p] = clamp ? std::clamp(mapped[c], 0.0, 1.0) : mapped[c];
    }
  }
  return out;
}

StylePool::StylePool(std::vector<Tensor> images) : images_(std::move(images)) {
  stats_.reserve(images_.size());
  for (const Tensor& img : images_) stats_.push_back(extract_stats(img));
}

StylizedBatch stylize_batch(std::span<const Tensor> contents, const StylePool& pool,
                            std::uint64_t seed, double epsilon) {
  if (pool.empty()) throw ConfigError("stylize_batch: style pool is empty");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  StylizedBatch batch;
  batch.images.reserve(contents.size());
  for (const Tensor& content : contents) {
    const std::size_t idx = pick(rng);
    batch.style_indices.push_back(idx);
    batch.images.push_back(wct_transfer(content, pool.stats(idx), epsilon));
  }
  return batch;
}

}  // namespace tldr
