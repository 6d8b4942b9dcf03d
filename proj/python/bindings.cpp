#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "tldr/analyze.hpp"
#include "tldr/error.hpp"
#include "tldr/stylize.hpp"
#include "tldr/synthdata.hpp"
#include "tldr/texture.hpp"
#include "tldr/train.hpp"

namespace py = pybind11;
using namespace tldr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::array_t<int> label_array(const std::vector<int>& labels, std::size_t h, std::size_t w) {
  py::array_t<int> out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
  std::copy(labels.begin(), labels.end(), out.mutable_data());
  return out;
}

DomainSpec domain_for(std::uint64_t seed, std::size_t domain, std::size_t size, std::size_t num_targets) {
  DomainPairOptions opts;
  opts.num_targets = num_targets;
  opts.height = opts.width = size;
  auto [source, targets] = make_domain_pair(seed, opts);
  if (domain == 0) return source;
  if (domain > targets.size()) throw py::index_error("domain index out of range");
  return targets[domain - 1];
}

}  // namespace

PYBIND11_MODULE(_tldr, m) {
  m.doc() = "Texture-learning domain randomization core";

  static py::exception<Error> base(m, "TldrError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("gram", [](const Array& f) {
    Tape tape;
    return to_array(gram(tape.constant(to_tensor(f))).value());
  }, py::arg("features"), "Channel gram matrix normalised by C*H*W; input C x H x W or N x C x H x W.");

  m.def("rsm_mask", [](const Array& gram_sr, const Array& gram_s, double tau) {
    return to_array(rsm_mask(to_tensor(gram_sr), to_tensor(gram_s), tau).values);
  }, py::arg("gram_sr"), py::arg("gram_s"), py::arg("tau") = 0.1);

  m.def("ldf", &ldf, py::arg("t"), py::arg("t_total"));
  m.def("lr_schedule", &lr_schedule, py::arg("t"), py::arg("base"), py::arg("t_warm"), py::arg("t_total"));

  m.def("wct", [](const Array& content, const Array& style, double epsilon, bool clamp) {
    return to_array(wct_transfer(to_tensor(content), extract_stats(to_tensor(style)), epsilon, clamp));
  }, py::arg("content"), py::arg("style"), py::arg("epsilon") = kDefaultWctEpsilon, py::arg("clamp") = true);

  m.def("miou", [](py::array_t<int, py::array::c_style | py::array::forcecast> truth,
                   py::array_t<int, py::array::c_style | py::array::forcecast> pred, std::size_t k) {
    ConfusionMatrix cm(k);
    cm.add(to_labels(truth), to_labels(pred));
    const IouReport r = miou(cm);
    return py::make_tuple(r.mean, r.per_class);
  }, py::arg("truth"), py::arg("prediction"), py::arg("num_classes"));

  m.def("mi_lower_bound", [](const std::vector<double>& a, const std::vector<double>& b) {
    return mi_lower_bound(a, b);
  }, py::arg("a"), py::arg("b"));

  m.def("generate_sample", [](std::uint64_t seed, std::size_t index, std::size_t domain, std::size_t size,
                              std::size_t num_targets) {
    const DomainSpec spec = domain_for(seed, domain, size, num_targets);
    const SegSample s = generate_sample(spec, index);
    return py::make_tuple(to_array(s.image), label_array(s.label, spec.height, spec.width));
  }, py::arg("seed"), py::arg("index"), py::arg("domain") = 0, py::arg("size") = 64, py::arg("num_targets") = 3,
     "Image (3 x H x W) and label map (H x W) of one sample; domain 0 is the source.");

  m.def("train", [](const std::string& config_json, const std::string& out_dir) {
    const TrainConfig config = train_config_from_json(nlohmann::json::parse(config_json));
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = run_training(config, out_dir);
    }
    py::dict evals;
    for (const Evaluation& e : r.final_evaluations) evals[py::str(e.domain)] = e.iou.mean;
    py::list history;
    for (const LossBreakdown& b : r.history) {
      py::dict row;
      row["orig"] = b.orig;
      row["styl"] = b.styl;
      row["tr"] = b.tr;
      row["tg"] = b.tg;
      row["w"] = b.w;
      row["total"] = b.total;
      history.append(row);
    }
    py::dict out;
    out["iterations"] = r.state.iteration;
    out["held_out_miou"] = evals;
    out["history"] = history;
    return out;
  }, py::arg("config_json"), py::arg("out_dir") = "");

  m.def("default_config_json", [] { return to_json(TrainConfig{}).dump(); });
}
