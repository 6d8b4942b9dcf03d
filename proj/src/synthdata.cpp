#include "tldr/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tldr/error.hpp"
#include "tldr/random.hpp"

namespace tldr {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

// Multi-octave value noise in [0, 1].
std::vector<double> value_noise(std::size_t h, std::size_t w, double exponent, Rng& rng) {
  std::vector<double> field(h * w, 0.0);
  double total_amp = 0.0;
  for (int octave = 0; octave < 4; ++octave) {
    const double cell = 16.0 / std::pow(2.0, octave);
    const auto gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / cell)) + 2;
    const auto gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / cell)) + 2;
    std::vector<double> grid(gh * gw);
    for (double& g : grid) g = uniform(rng, 0.0, 1.0);
    const double amp = std::pow(2.0, -exponent * octave);
    total_amp += amp;
    for (std::size_t y = 0; y < h; ++y) {
      const double gy = static_cast<double>(y) / cell;
      const auto y0 = static_cast<std::size_t>(gy);
      const double fy = gy - static_cast<double>(y0);
      for (std::size_t x = 0; x < w; ++x) {
        const double gx = static_cast<double>(x) / cell;
        const auto x0 = static_cast<std::size_t>(gx);
        const double fx = gx - static_cast<double>(x0);
        const double top = grid[y0 * gw + x0] * (1 - fx) + grid[y0 * gw + x0 + 1] * fx;
        const double bot = grid[(y0 + 1) * gw + x0] * (1 - fx) + grid[(y0 + 1) * gw + x0 + 1] * fx;
        field[y * w + x] += amp * (top * (1 - fy) + bot * fy);
      }
    }
  }
  for (double& v : field) v /= total_amp;
  return field;
}

// Per-sample realisation of a texture program (random phases and noise).
struct TextureInstance {
  const TextureProgram* program;
  double phase;
  double checker_dx, checker_dy;
  std::vector<double> noise;
};

TextureInstance instantiate(const TextureProgram& p, std::size_t h, std::size_t w, Rng& rng) {
  TextureInstance inst{&p, uniform(rng, 0.0, 2.0 * std::numbers::pi),
                       uniform(rng, 0.0, std::max(p.checker_period, 1.0)),
                       uniform(rng, 0.0, std::max(p.checker_period, 1.0)), {}};
  if (p.noise_weight > 0.0) inst.noise = value_noise(h, w, p.noise_exponent, rng);
  return inst;
}

double texture_value(const TextureInstance& inst, std::size_t x, std::size_t y, std::size_t w) {
  const TextureProgram& p = *inst.program;
  const double total = p.stripe_weight + p.checker_weight + p.noise_weight;
  if (total <= 0.0) return 0.5;
  double t = 0.0;
  if (p.stripe_weight > 0.0) {
    const double u = static_cast<double>(x) * std::cos(p.stripe_orientation) +
                     static_cast<double>(y) * std::sin(p.stripe_orientation);
    t += p.stripe_weight *
         (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * p.stripe_frequency * u + inst.phase));
  }
  if (p.checker_weight > 0.0 && p.checker_period > 0.0) {
    const auto cx = static_cast<long>(std::floor((static_cast<double>(x) + inst.checker_dx) / p.checker_period));
    const auto cy = static_cast<long>(std::floor((static_cast<double>(y) + inst.checker_dy) / p.checker_period));
    t += p.checker_weight * static_cast<double>((cx + cy) & 1L);
  }
  if (p.noise_weight > 0.0) t += p.noise_weight * inst.noise[y * w + x];
  return t / total;
}

void paint(Tensor& image, std::size_t x, std::size_t y, const ClassSpec& cls, double t) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  for (std::size_t c = 0; c < 3; ++c) {
    image[c * h * w + y * w + x] = cls.color_a[c] * (1.0 - t) + cls.color_b[c] * t;
  }
}

std::array<double, 9> hue_matrix(double angle) {
  // Rodrigues rotation about the unit grey axis (1,1,1)/sqrt(3).
  const double c = std::cos(angle), s = std::sin(angle);
  const double k = 1.0 / std::sqrt(3.0);
  const double oc = 1.0 - c;
  const double a = c + oc / 3.0;
  const double b = oc / 3.0 - s * k;
  const double d = oc / 3.0 + s * k;
  return {a, b, d, d, a, b, b, d, a};
}

void apply_shift(Tensor& image, const StyleShift& shift, Rng& rng) {
  const std::size_t n = image.dim(1) * image.dim(2);
  const auto m = hue_matrix(shift.hue_rotation);
  std::normal_distribution<double> noise(0.0, 1.0);
  double* d = image.data().data();
  for (std::size_t p = 0; p < n; ++p) {
    const double r = d[p] - 0.5, g = d[n + p] - 0.5, b = d[2 * n + p] - 0.5;
    const double rgb[3] = {m[0] * r + m[1] * g + m[2] * b, m[3] * r + m[4] * g + m[5] * b,
                           m[6] * r + m[7] * g + m[8] * b};
    for (std::size_t c = 0; c < 3; ++c) {
      double v = rgb[c] * shift.contrast + 0.5 + shift.brightness;
      if (shift.noise_level > 0.0) v += shift.noise_level * noise(rng);
      d[c * n + p] = std::clamp(v, 0.0, 1.0);
    }
  }
}

struct Layout {
  std::vector<int> label;
};

Layout draw_layout(const DomainSpec& spec, Rng& rng) {
  const std::size_t h = spec.height, w = spec.width;
  Layout layout{std::vector<int>(h * w, 0)};
  std::vector<std::size_t> bands, ellipses, rects;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    switch (spec.classes[k].shape) {
      case ShapeFamily::horizontal_band: bands.push_back(k); break;
      case ShapeFamily::ellipse: ellipses.push_back(k); break;
      case ShapeFamily::rectangle: rects.push_back(k); break;
      case ShapeFamily::background: break;
    }
  }
  std::size_t background = 0;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    if (spec.classes[k].shape == ShapeFamily::background) {
      background = k;
      break;
    }
  }
  std::fill(layout.label.begin(), layout.label.end(), static_cast<int>(background));

  if (!bands.empty()) {
    // Bands stack downward from a sloped horizon in random order; each band
    // gets at least min_band rows so both remain visible.
    std::shuffle(bands.begin(), bands.end(), rng);
    const double hh = static_cast<double>(h);
    const double horizon = uniform(rng, 0.3 * hh, 0.45 * hh);
    const double slope = uniform(rng, -0.15, 0.15);
    const double span = hh - horizon;
    std::vector<double> cuts{0.0};
    const double min_band = std::min(span / static_cast<double>(bands.size()), std::max(4.0, hh / 4.0));
    double used = 0.0;
    for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
      const double remaining = span - used;
      const double hi = remaining - min_band * static_cast<double>(bands.size() - i - 1);
      const double cut = used + uniform(rng, min_band, std::max(min_band, hi));
      cuts.push_back(cut);
      used = cut;
    }
    cuts.push_back(span + hh);  // last band runs off the bottom edge
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double local = static_cast<double>(y) -
                             (horizon + slope * (static_cast<double>(x) - 0.5 * static_cast<double>(w)));
        if (local < 0.0) continue;
        for (std::size_t b = 0; b < bands.size(); ++b) {
          if (local >= cuts[b] && local < cuts[b + 1]) {
            layout.label[y * w + x] = static_cast<int>(bands[b]);
            break;
          }
        }
      }
    }
  }

  for (std::size_t k : rects) {
    if (uniform(rng, 0.0, 1.0) > 0.85) continue;
    const long rw = uniform_int(rng, static_cast<long>(w) / 8, static_cast<long>(w) / 3);
    const long rh = uniform_int(rng, static_cast<long>(h) / 8, static_cast<long>(h) / 3);
    const long x0 = uniform_int(rng, 0, static_cast<long>(w) - rw);
    const long y0 = uniform_int(rng, 0, static_cast<long>(h) - rh);
    for (long y = y0; y < y0 + rh; ++y) {
      for (long x = x0; x < x0 + rw; ++x) layout.label[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = static_cast<int>(k);
    }
  }
  for (std::size_t k : ellipses) {
    if (uniform(rng, 0.0, 1.0) > 0.85) continue;
    const double cx = uniform(rng, 0.0, static_cast<double>(w));
    const double cy = uniform(rng, 0.0, static_cast<double>(h));
    const double rx = uniform(rng, static_cast<double>(w) / 12.0, static_cast<double>(w) / 5.0);
    const double ry = uniform(rng, static_cast<double>(h) / 12.0, static_cast<double>(h) / 5.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) layout.label[y * w + x] = static_cast<int>(k);
      }
    }
  }
  return layout;
}

bool same_texture(const TextureProgram& a, const TextureProgram& b) {
  return a.stripe_frequency == b.stripe_frequency && a.stripe_orientation == b.stripe_orientation &&
         a.stripe_weight == b.stripe_weight && a.checker_period == b.checker_period &&
         a.checker_weight == b.checker_weight && a.noise_exponent == b.noise_exponent &&
         a.noise_weight == b.noise_weight;
}

Rgb jitter(const Rgb& c, double amount, Rng& rng) {
  Rgb out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + uniform(rng, -amount, amount), 0.0, 1.0);
  return out;
}

double perturb(double value, double bound, Rng& rng) {
  return value * (1.0 + uniform(rng, -bound, bound));
}

const char* shape_name(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::background: return "background";
    case ShapeFamily::horizontal_band: return "horizontal_band";
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::rectangle: return "rectangle";
  }
  return "background";
}

ShapeFamily shape_from_name(const std::string& s) {
  if (s == "background") return ShapeFamily::background;
  if (s == "horizontal_band") return ShapeFamily::horizontal_band;
  if (s == "ellipse") return ShapeFamily::ellipse;
  if (s == "rectangle") return ShapeFamily::rectangle;
  throw ConfigError("unknown shape family '" + s + "'");
}

}  // namespace

DomainSpec default_source_spec(std::uint64_t seed, std::size_t height, std::size_t width) {
  DomainSpec spec;
  spec.name = "source";
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  spec.shift = {0.0, 1.0, 0.0, 0.02};

  const double pi = std::numbers::pi;
  ClassSpec background{"background", ShapeFamily::background, {}, {0.55, 0.70, 0.90}, {0.85, 0.92, 1.00}};
  background.texture.noise_exponent = 2.0;
  background.texture.noise_weight = 1.0;

  // band-A / band-B: the shape-similar pair, told apart by texture alone.
  ClassSpec band_a{"band-A", ShapeFamily::horizontal_band, {}, {0.30, 0.30, 0.33}, {0.62, 0.62, 0.64}};
  band_a.texture.stripe_frequency = 0.25;
  band_a.texture.stripe_orientation = 0.0;
  band_a.texture.stripe_weight = 1.0;
  band_a.texture.noise_exponent = 0.5;
  band_a.texture.noise_weight = 0.3;

  ClassSpec band_b{"band-B", ShapeFamily::horizontal_band, {}, {0.52, 0.40, 0.36}, {0.80, 0.66, 0.58}};
  band_b.texture.checker_period = 3.0;
  band_b.texture.checker_weight = 1.0;
  band_b.texture.noise_exponent = 0.5;
  band_b.texture.noise_weight = 0.3;

  ClassSpec blob{"blob", ShapeFamily::ellipse, {}, {0.15, 0.40, 0.15}, {0.45, 0.75, 0.30}};
  blob.texture.stripe_frequency = 0.18;
  blob.texture.stripe_orientation = pi / 4.0;
  blob.texture.stripe_weight = 1.0;
  blob.texture.noise_exponent = 1.0;
  blob.texture.noise_weight = 0.5;

  ClassSpec box{"box", ShapeFamily::rectangle, {}, {0.70, 0.55, 0.10}, {0.90, 0.25, 0.10}};
  box.texture.checker_period = 6.0;
  box.texture.checker_weight = 1.0;
  box.texture.noise_exponent = 1.5;
  box.texture.noise_weight = 0.4;

  spec.classes = {background, band_a, band_b, blob, box};
  return spec;
}

void validate(const DomainSpec& spec) {
  if (spec.classes.size() < 3) throw ConfigError("domain spec needs at least 3 classes");
  if (spec.height < 2 || spec.width < 2) throw ConfigError("domain spec image size too small");
  bool has_pair = false;
  for (std::size_t i = 0; i < spec.classes.size() && !has_pair; ++i) {
    for (std::size_t j = i + 1; j < spec.classes.size(); ++j) {
      if (spec.classes[i].shape == spec.classes[j].shape &&
          !same_texture(spec.classes[i].texture, spec.classes[j].texture)) {
        has_pair = true;
        break;
      }
    }
  }
  if (!has_pair) {
    throw ConfigError("domain spec needs two classes sharing a shape family with different textures");
  }
}

SegSample render_unshifted(const DomainSpec& spec, std::size_t index) {
  validate(spec);
  Rng rng(mix_seed({spec.seed, index, 0x1a7u}));
  const Layout layout = draw_layout(spec, rng);
  std::vector<TextureInstance> textures;
  textures.reserve(spec.classes.size());
  for (const ClassSpec& cls : spec.classes) {
    textures.push_back(instantiate(cls.texture, spec.height, spec.width, rng));
  }
  Tensor image({3, spec.height, spec.width});
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const auto k = static_cast<std::size_t>(layout.label[y * spec.width + x]);
      paint(image, x, y, spec.classes[k], texture_value(textures[k], x, y, spec.width));
    }
  }
  return {std::move(image), layout.label};
}

SegSample generate_sample(const DomainSpec& spec, std::size_t index) {
  SegSample sample = render_unshifted(spec, index);
  Rng rng(mix_seed({spec.seed, index, 0x5b1f7u}));
  const StyleShift& s = spec.shift;
  if (s.hue_rotation != 0.0 || s.contrast != 1.0 || s.brightness != 0.0 || s.noise_level != 0.0) {
    apply_shift(sample.image, s, rng);
  }
  return sample;
}

Tensor render_class_patch(const DomainSpec& spec, std::size_t class_index, std::size_t size,
                          std::uint64_t seed) {
  const ClassSpec& cls = spec.classes.at(class_index);
  Rng rng(mix_seed({spec.seed, class_index, seed, 0x9a7c4u}));
  const TextureInstance inst = instantiate(cls.texture, size, size, rng);
  Tensor image({3, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) paint(image, x, y, cls, texture_value(inst, x, y, size));
  }
  apply_shift(image, spec.shift, rng);
  return image;
}

StyleImage generate_style_image(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(mix_seed({seed, 0x57f1eu}));
  Tensor image({3, height, width});
  const std::size_t n = height * width;
  // Smooth colour field: two random colours blended by a low-frequency noise.
  const Rgb c0{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
  const Rgb c1{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
  const auto field = value_noise(height, width, uniform(rng, 1.0, 3.0), rng);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) image[c * n + p] = c0[c] * (1 - field[p]) + c1[c] * field[p];
  }
  // Random texture patches composited on top.
  const long patches = uniform_int(rng, 1, 4);
  for (long i = 0; i < patches; ++i) {
    TextureProgram prog;
    if (uniform(rng, 0, 1) < 0.5) {
      prog.stripe_frequency = uniform(rng, 0.05, 0.45);
      prog.stripe_orientation = uniform(rng, 0.0, std::numbers::pi);
      prog.stripe_weight = 1.0;
    } else {
      prog.checker_period = uniform(rng, 2.0, 10.0);
      prog.checker_weight = 1.0;
    }
    prog.noise_exponent = uniform(rng, 0.3, 2.0);
    prog.noise_weight = uniform(rng, 0.0, 0.6);
    const ClassSpec cls{"style", ShapeFamily::rectangle, prog,
                        {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)},
                        {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}};
    const TextureInstance inst = instantiate(cls.texture, height, width, rng);
    const long pw = uniform_int(rng, static_cast<long>(width) / 4, static_cast<long>(width));
    const long ph = uniform_int(rng, static_cast<long>(height) / 4, static_cast<long>(height));
    const long x0 = uniform_int(rng, 0, static_cast<long>(width) - pw);
    const long y0 = uniform_int(rng, 0, static_cast<long>(height) - ph);
    for (long y = y0; y < y0 + ph; ++y) {
      for (long x = x0; x < x0 + pw; ++x) {
        const auto ux = static_cast<std::size_t>(x), uy = static_cast<std::size_t>(y);
        paint(image, ux, uy, cls, texture_value(inst, ux, uy, width));
      }
    }
  }
  return {std::move(image), seed};
}

std::vector<StyleImage> generate_style_pool(std::uint64_t seed, std::size_t count,
                                            std::size_t height, std::size_t width) {
  std::vector<StyleImage> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    pool.push_back(generate_style_image(mix_seed({seed, i}), height, width));
  }
  return pool;
}

std::pair<DomainSpec, std::vector<DomainSpec>> make_domain_pair(std::uint64_t base_seed,
                                                                const DomainPairOptions& options) {
  DomainSpec source = default_source_spec(mix_seed({base_seed, 0}), options.height, options.width);
  std::vector<DomainSpec> targets;
  const double b = options.texture_perturbation;
  for (std::size_t t = 0; t < options.num_targets; ++t) {
    Rng rng(mix_seed({base_seed, t + 1, 0x7a6e7u}));
    DomainSpec target = source;
    target.name = "target" + std::to_string(t + 1);
    target.seed = mix_seed({base_seed, t + 1});
    const double sign = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
    target.shift.hue_rotation = sign * uniform(rng, 0.5, 1.5);
    target.shift.contrast = uniform(rng, 0.7, 1.3);
    target.shift.brightness = uniform(rng, -0.08, 0.08);
    target.shift.noise_level = uniform(rng, 0.03, 0.06);
    for (ClassSpec& cls : target.classes) {
      TextureProgram& p = cls.texture;
      p.stripe_frequency = perturb(p.stripe_frequency, b, rng);
      p.stripe_orientation = perturb(p.stripe_orientation, b, rng);
      p.checker_period = perturb(p.checker_period, b, rng);
      p.noise_exponent = perturb(p.noise_exponent, b, rng);
      cls.color_a = jitter(cls.color_a, 0.08, rng);
      cls.color_b = jitter(cls.color_b, 0.08, rng);
    }
    targets.push_back(std::move(target));
  }
  return {std::move(source), std::move(targets)};
}

nlohmann::json to_json(const DomainSpec& spec) {
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassSpec& c : spec.classes) {
    const TextureProgram& t = c.texture;
    classes.push_back({{"name", c.name},
                       {"shape", shape_name(c.shape)},
                       {"texture",
                        {{"stripe_frequency", t.stripe_frequency},
                         {"stripe_orientation", t.stripe_orientation},
                         {"stripe_weight", t.stripe_weight},
                         {"checker_period", t.checker_period},
                         {"checker_weight", t.checker_weight},
                         {"noise_exponent", t.noise_exponent},
                         {"noise_weight", t.noise_weight}}},
                       {"color_a", c.color_a},
                       {"color_b", c.color_b}});
  }
  return {{"name", spec.name},
          {"height", spec.height},
          {"width", spec.width},
          {"seed", spec.seed},
          {"shift",
           {{"hue_rotation", spec.shift.hue_rotation},
            {"contrast", spec.shift.contrast},
            {"brightness", spec.shift.brightness},
            {"noise_level", spec.shift.noise_level}}},
          {"classes", classes}};
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
  DomainSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.height = j.at("height").get<std::size_t>();
    spec.width = j.at("width").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("shift");
    spec.shift = {s.at("hue_rotation").get<double>(), s.at("contrast").get<double>(),
                  s.at("brightness").get<double>(), s.at("noise_level").get<double>()};
    for (const auto& c : j.at("classes")) {
      ClassSpec cls;
      cls.name = c.at("name").get<std::string>();
      cls.shape = shape_from_name(c.at("shape").get<std::string>());
      const auto& t = c.at("texture");
      cls.texture = {t.at("stripe_frequency").get<double>(), t.at("stripe_orientation").get<double>(),
                     t.at("stripe_weight").get<double>(),    t.at("checker_period").get<double>(),
                     t.at("checker_weight").get<double>(),   t.at("noise_exponent").get<double>(),
                     t.at("noise_weight").get<double>()};
      cls.color_a = c.at("color_a").get<Rgb>();
      cls.color_b = c.at("color_b").get<Rgb>();
      spec.classes.push_back(std::move(cls));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad domain spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

}  // namespace tldr
