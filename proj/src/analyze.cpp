#include "tldr/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "tldr/error.hpp"
#include "tldr/random.hpp"

namespace tldr {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t prediction, std::uint64_t count) {
  if (truth >= k_ || prediction >= k_) {
    throw LabelError("confusion matrix: class index out of range (" + std::to_string(truth) +
                     ", " + std::to_string(prediction) + ") for K=" + std::to_string(k_));
  }
  counts_[truth * k_ + prediction] += count;
  total_ += count;
}

void ConfusionMatrix::add(std::span<const int> truth, std::span<const int> prediction,
                          int ignore_index) {
  if (truth.size() != prediction.size()) {
    throw DimensionError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(prediction.size()) + " predictions");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_index) continue;
    if (truth[i] < 0 || prediction[i] < 0) throw LabelError("confusion matrix: negative label");
    add(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(prediction[i]));
  }
}

IouReport miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DegenerateInputError("miou: confusion matrix has no scored pixels");
  const std::size_t k = cm.num_classes();
  IouReport report;
  report.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;
    report.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += report.per_class[c];
    ++counted;
  }
  report.mean = sum / static_cast<double>(counted);
  return report;
}

double mi_lower_bound(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("mi_lower_bound: lengths differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw DegenerateInputError("mi_lower_bound: need at least two coordinates");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw DegenerateInputError("mi_lower_bound: zero variance input");
  const double corr = sab / std::sqrt(saa * sbb);
  return -0.5 * std::log(std::max(1.0 - corr, 1e-8));
}

PairSet build_pair_set(const DomainSpec& domain, const StylePool& styles, std::size_t count,
                       std::uint64_t seed) {
  if (count == 0) throw DegenerateInputError("build_pair_set: empty pair set requested");
  if (styles.size() < 2) throw ConfigError("build_pair_set: need at least two style images");
  std::mt19937_64 rng(mix_seed({seed, 0xd1a5u}));
  std::uniform_int_distribution<std::size_t> pick_style(0, styles.size() - 1);
  PairSet set;
  set.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t base = kEvalIndexOffset * 2 + 2 * i;
    const Tensor content1 = generate_sample(domain, base).image;
    const Tensor content2 = generate_sample(domain, base + 1).image;
    const std::size_t s1 = pick_style(rng);
    std::size_t s2 = pick_style(rng);
    while (s2 == s1) s2 = pick_style(rng);
    set.entries.push_back({wct_transfer(content1, styles.stats(s1)),
                           wct_transfer(content2, styles.stats(s1)),
                           wct_transfer(content1, styles.stats(s2)),
                           wct_transfer(content2, styles.stats(s2))});
  }
  return set;
}

namespace {

std::vector<FeatureStack> encode_batches(Tape& tape, const Encoder& encoder,
                                         std::span<const Tensor> images, std::size_t batch) {
  std::vector<FeatureStack> stacks;
  const auto bound = encoder.frozen() ? encoder.bind(tape) : encoder.frozen_copy().bind(tape);
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const std::size_t end = std::min(images.size(), start + batch);
    const Var x = tape.constant(network_input(images.subspan(start, end - start)));
    stacks.push_back(encoder.encode(bound, x));
  }
  return stacks;
}

double pair_score(std::span<const double> a, std::span<const double> b) {
  try {
    return mi_lower_bound(a, b);
  } catch (const DegenerateInputError&) {
    return 0.0;  // a dead (constant) activation carries no shared information
  }
}

}  // namespace

std::vector<LayerDimensionality> dimensionality(const Encoder& encoder, const PairSet& pairs,
                                                std::size_t max_coordinates,
                                                std::uint64_t subsample_seed) {
  if (pairs.size() == 0) throw DegenerateInputError("dimensionality: empty pair set");
  std::vector<LayerDimensionality> layers(kEncoderStages);

  // Coordinates subsampled once per layer, shared by every image.
  std::vector<std::vector<std::size_t>> coords(kEncoderStages);
  std::vector<double> texture(kEncoderStages, 0.0), shape(kEncoderStages, 0.0),
      baseline(kEncoderStages, 0.0);

  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const std::size_t end = std::min(pairs.size(), start + kChunk);
    std::vector<Tensor> images;
    for (std::size_t i = start; i < end; ++i) {
      const auto& e = pairs.entries[i];
      images.insert(images.end(), {e.anchor, e.texture_partner, e.shape_partner, e.unrelated});
    }
    Tape tape;
    const auto stacks = encode_batches(tape, encoder, images, images.size());
    const FeatureStack& stack = stacks.front();
    for (std::size_t l = 0; l < kEncoderStages; ++l) {
      const Tensor& f = stack[l].value();
      const std::size_t per = f.size() / f.dim(0);
      if (coords[l].empty()) {
        std::vector<std::size_t> all(per);
        std::iota(all.begin(), all.end(), 0);
        if (per > max_coordinates) {
          std::mt19937_64 rng(mix_seed({subsample_seed, l}));
          std::shuffle(all.begin(), all.end(), rng);
          all.resize(max_coordinates);
          std::sort(all.begin(), all.end());
        }
        coords[l] = std::move(all);
      }
      auto gather = [&](std::size_t item) {
        std::vector<double> v(coords[l].size());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = f[item * per + coords[l][k]];
        return v;
      };
      for (std::size_t i = 0; i < end - start; ++i) {
        const auto anchor = gather(4 * i);
        texture[l] += pair_score(anchor, gather(4 * i + 1));
        shape[l] += pair_score(anchor, gather(4 * i + 2));
        baseline[l] += pair_score(anchor, gather(4 * i + 3));
      }
    }
  }

  const double n = static_cast<double>(pairs.size());
  for (std::size_t l = 0; l < kEncoderStages; ++l) {
    LayerDimensionality& d = layers[l];
    d.texture_score = texture[l] / n;
    d.shape_score = shape[l] / n;
    d.baseline_score = baseline[l] / n;
    const double top = std::max({d.texture_score, d.shape_score, d.baseline_score});
    const double et = std::exp(d.texture_score - top);
    const double es = std::exp(d.shape_score - top);
    const double eb = std::exp(d.baseline_score - top);
    const double z = et + es + eb;
    d.texture_percent = 100.0 * et / z;
    d.shape_percent = 100.0 * es / z;
    d.residual_percent = 100.0 * eb / z;
  }
  return layers;
}

std::vector<std::vector<int>> predict_labels(const Encoder& encoder, const Decoder& decoder,
                                             std::span<const Tensor> images) {
  std::vector<std::vector<int>> out;
  if (images.empty()) return out;
  Tape tape;
  const Encoder frozen = encoder.frozen_copy();
  const auto enc_bound = frozen.bind(tape);
  std::vector<Var> dec_bound;
  for (const Parameter& p : decoder.parameters()) dec_bound.push_back(tape.constant(p.value));
  const Var x = tape.constant(network_input(images));
  const Tensor& logits = decoder.decode(dec_bound, frozen.encode(enc_bound, x)).value();
  const std::size_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<int> labels(hw);
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits[b * k * hw + c * hw + p] > logits[b * k * hw + best * hw + p]) best = c;
      }
      labels[p] = static_cast<int>(best);
    }
    out.push_back(std::move(labels));
  }
  return out;
}

Evaluation evaluate(const Encoder& encoder, const Decoder& decoder, const DomainSpec& domain,
                    std::size_t n_samples) {
  if (decoder.config().num_classes != domain.num_classes()) {
    throw ConfigError("evaluate: model predicts " + std::to_string(decoder.config().num_classes) +
                      " classes but domain '" + domain.name + "' has " +
                      std::to_string(domain.num_classes()));
  }
  if (n_samples == 0) throw DegenerateInputError("evaluate: no samples requested");
  Evaluation eval{domain.name, ConfusionMatrix(domain.num_classes()), {}, {}};
  for (const ClassSpec& c : domain.classes) eval.class_names.push_back(c.name);
  constexpr std::size_t kBatch = 8;
  for (std::size_t start = 0; start < n_samples; start += kBatch) {
    const std::size_t end = std::min(n_samples, start + kBatch);
    std::vector<Tensor> images;
    std::vector<std::vector<int>> labels;
    for (std::size_t i = start; i < end; ++i) {
      SegSample s = generate_sample(domain, kEvalIndexOffset + i);
      images.push_back(std::move(s.image));
      labels.push_back(std::move(s.label));
    }
    const auto pred = predict_labels(encoder, decoder, images);
    for (std::size_t i = 0; i < pred.size(); ++i) eval.confusion.add(labels[i], pred[i]);
  }
  eval.iou = miou(eval.confusion);
  return eval;
}

void write_confusion_csv(std::ostream& out, const Evaluation& eval) {
  out << "truth\\pred";
  for (const auto& name : eval.class_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < eval.confusion.num_classes(); ++r) {
    out << eval.class_names[r];
    for (std::size_t c = 0; c < eval.confusion.num_classes(); ++c) out << ',' << eval.confusion.at(r, c);
    out << '\n';
  }
}

void write_class_report(std::ostream& out, const Evaluation& eval) {
  out << "domain,class,iou\n";
  for (std::size_t c = 0; c < eval.class_names.size(); ++c) {
    out << eval.domain << ',' << eval.class_names[c] << ',';
    if (std::isnan(eval.iou.per_class[c])) out << "nan";
    else out << eval.iou.per_class[c];
    out << '\n';
  }
  out << eval.domain << ",mean," << eval.iou.mean << '\n';
}

}  // namespace tldr
