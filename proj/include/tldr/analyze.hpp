#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tldr/nets.hpp"
#include "tldr/stylize.hpp"
#include "tldr/synthdata.hpp"

namespace tldr {

// K x K counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  std::size_t num_classes() const noexcept { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }
  std::uint64_t total() const noexcept { return total_; }

  void add(std::span<const int> truth, std::span<const int> prediction, int ignore_index = 255);
  void add(std::size_t truth, std::size_t prediction, std::uint64_t count = 1);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct IouReport {
  std::vector<double> per_class;  // NaN where the class has empty union
  double mean = 0.0;              // over classes with non-empty union
};

IouReport miou(const ConfusionMatrix& confusion);

// -1/2 log(1 - corr(a, b)), with 1 - corr clamped to at least 1e-8.
double mi_lower_bound(std::span<const double> a, std::span<const double> b);

// Triplets of STM-built images sharing the anchor x_a = STM(content_1, style_1):
// texture partner STM(content_2, style_1), shape partner STM(content_1,
// style_2), unrelated STM(content_2, style_2).
struct PairSet {
  struct Entry {
    Tensor anchor;
    Tensor texture_partner;
    Tensor shape_partner;
    Tensor unrelated;
  };
  std::vector<Entry> entries;

  std::size_t size() const noexcept { return entries.size(); }
};

PairSet build_pair_set(const DomainSpec& domain, const StylePool& styles, std::size_t count,
                       std::uint64_t seed);

struct LayerDimensionality {
  double texture_score = 0.0;
  double shape_score = 0.0;
  double baseline_score = 0.0;
  double texture_percent = 0.0;
  double shape_percent = 0.0;
  double residual_percent = 0.0;
};

// Per encoder stage: mean MI score over texture pairs, shape pairs and
// unrelated pairs, then softmax over the three scores (in percent).
std::vector<LayerDimensionality> dimensionality(const Encoder& encoder, const PairSet& pairs,
                                                std::size_t max_coordinates = 4096,
                                                std::uint64_t subsample_seed = 0);

// Argmax labels for a batch of 3 x H x W images in [0, 1].
std::vector<std::vector<int>> predict_labels(const Encoder& encoder, const Decoder& decoder,
                                             std::span<const Tensor> images);

struct Evaluation {
  std::string domain;
  ConfusionMatrix confusion;
  IouReport iou;
  std::vector<std::string> class_names;
};

inline constexpr std::size_t kEvalIndexOffset = 1'000'000;

// Scores samples kEvalIndexOffset + [0, n) of the domain, in batches.
Evaluation evaluate(const Encoder& encoder, const Decoder& decoder, const DomainSpec& domain,
                    std::size_t n_samples);

void write_confusion_csv(std::ostream& out, const Evaluation& eval);
void write_class_report(std::ostream& out, const Evaluation& eval);

}  // namespace tldr
