#include "tldr/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tldr/error.hpp"

namespace tldr {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

[[noreturn]] void dim_error(std::string_view op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    dim_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t patch() const { return ci * k * k; }
  std::size_t positions() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    dim_error("conv2d", "input " + shape_str(x.shape()) + " incompatible with kernel " +
                            shape_str(w.shape()));
  }
  if (stride == 0) dim_error("conv2d", "stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) {
    dim_error("conv2d", "kernel " + shape_str(w.shape()) + " larger than padded input " +
                            shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  return g;
}

// cols: (ci*k*k) x (ho*wo), row-major.
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.ci; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * positions;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* out = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.ci; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * positions;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const double* in = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

struct Interp {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Interp> interp_axis(std::size_t in, std::size_t out) {
  std::vector<Interp> table(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    table[o] = {i0, i1, 1.0 - frac, frac};
  }
  return table;
}

Shape swap_last_two(const Shape& s) {
  Shape out = s;
  std::swap(out[out.size() - 1], out[out.size() - 2]);
  return out;
}

void transpose_into(const Tensor& x, Tensor& out) {
  const std::size_t rows = x.dim(x.rank() - 2);
  const std::size_t cols = x.dim(x.rank() - 1);
  const std::size_t batch = x.size() / (rows * cols);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapRM src(x.data().data() + b * rows * cols, rows, cols);
    MapRM dst(out.data().data() + b * rows * cols, cols, rows);
    dst = src.transpose();
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::max_pool2: return "max-pool2";
    case OpKind::avg_pool2: return "avg-pool2";
    case OpKind::bilinear_upsample: return "bilinear-upsample";
    case OpKind::matmul: return "matmul";
    case OpKind::batched_matmul: return "batched-matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul-elementwise";
    case OpKind::scalar_mul: return "scalar-mul";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::frobenius_norm: return "frobenius-norm";
    case OpKind::reshape: return "reshape";
    case OpKind::cross_entropy: return "cross-entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->requires_grad(id_);
}

const Tensor& Gradients::at(Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) {
    throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
  }
  return it->second;
}

Tensor Gradients::get_or_zero(Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) return Tensor(v.shape());
  return it->second;
}

Var Tape::push(Node node) {
  if (!node.value.all_finite()) {
    throw NumericError(std::string(op_name(node.kind)) + " produced a non-finite value");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError("Var belongs to a different tape");
  }
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id()].value; };
  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (inputs.size() < lo || inputs.size() > hi) {
      throw ContractError(std::string(op_name(kind)) + ": wrong number of inputs (" +
                          std::to_string(inputs.size()) + ")");
    }
  };

  Node node;
  node.kind = kind;
  node.attrs = attrs;
  for (const Var& v : inputs) {
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }

  switch (kind) {
    case OpKind::leaf:
      throw ContractError("apply(leaf): use constant() or variable()");

    case OpKind::conv2d: {
      arity(2, 3);
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const ConvGeometry g = conv_geometry(x, w, attrs.stride, attrs.pad);
      const double* bias = nullptr;
      if (inputs.size() == 3) {
        const Tensor& b = in(2);
        if (b.rank() != 1 || b.dim(0) != g.co) {
          dim_error("conv2d", "bias " + shape_str(b.shape()) + " for kernel " + shape_str(w.shape()));
        }
        bias = b.data().data();
      }
      node.value = Tensor({g.n, g.co, g.ho, g.wo});
      std::vector<double> cols(g.patch() * g.positions());
      ConstMapRM wm(w.data().data(), g.co, g.patch());
      ConstMapRM cm(cols.data(), g.patch(), g.positions());
      for (std::size_t n = 0; n < g.n; ++n) {
        im2col(x.data().data() + n * g.ci * g.h * g.w, g, cols.data());
        MapRM out(node.value.data().data() + n * g.co * g.positions(), g.co, g.positions());
        out.noalias() = wm * cm;
        if (bias) {
          for (std::size_t c = 0; c < g.co; ++c) out.row(c).array() += bias[c];
        }
      }
      break;
    }

    case OpKind::relu: {
      arity(1, 1);
      node.value = in(0);
      for (double& v : node.value.data()) v = v > 0.0 ? v : 0.0;
      break;
    }

    case OpKind::max_pool2:
    case OpKind::avg_pool2: {
      arity(1, 1);
      const Tensor& x = in(0);
      require_rank(op_name(kind), x, 4);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
      if (h % 2 || w % 2) dim_error(op_name(kind), "odd spatial size " + shape_str(x.shape()));
      const std::size_t ho = h / 2, wo = w / 2;
      node.value = Tensor({n, c, ho, wo});
      if (kind == OpKind::max_pool2) node.index.resize(node.value.size());
      const double* src = x.data().data();
      double* dst = node.value.data().data();
      for (std::size_t p = 0; p < n * c; ++p) {
        const std::size_t base = p * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::size_t i00 = base + 2 * oy * w + 2 * ox;
            const std::size_t cand[4] = {i00, i00 + 1, i00 + w, i00 + w + 1};
            const std::size_t o = p * ho * wo + oy * wo + ox;
            if (kind == OpKind::max_pool2) {
              std::size_t best = cand[0];
              for (std::size_t q = 1; q < 4; ++q) {
                if (src[cand[q]] > src[best]) best = cand[q];
              }
              dst[o] = src[best];
              node.index[o] = best;
            } else {
              dst[o] = 0.25 * (src[cand[0]] + src[cand[1]] + src[cand[2]] + src[cand[3]]);
            }
          }
        }
      }
      break;
    }

    case OpKind::bilinear_upsample: {
      arity(1, 1);
      const Tensor& x = in(0);
      if (x.rank() < 2) dim_error("bilinear-upsample", "rank < 2: " + shape_str(x.shape()));
      if (attrs.out_h == 0 || attrs.out_w == 0) dim_error("bilinear-upsample", "zero output size");
      const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
      const std::size_t planes = x.size() / (h * w);
      Shape out_shape = x.shape();
      out_shape[out_shape.size() - 2] = attrs.out_h;
      out_shape[out_shape.size() - 1] = attrs.out_w;
      node.value = Tensor(out_shape);
      const auto ty = interp_axis(h, attrs.out_h);
      const auto tx = interp_axis(w, attrs.out_w);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* src = x.data().data() + p * h * w;
        double* dst = node.value.data().data() + p * attrs.out_h * attrs.out_w;
        for (std::size_t oy = 0; oy < attrs.out_h; ++oy) {
          const Interp& iy = ty[oy];
          const double* r0 = src + iy.i0 * w;
          const double* r1 = src + iy.i1 * w;
          for (std::size_t ox = 0; ox < attrs.out_w; ++ox) {
            const Interp& ix = tx[ox];
            dst[oy * attrs.out_w + ox] =
                iy.w0 * (ix.w0 * r0[ix.i0] + ix.w1 * r0[ix.i1]) +
                iy.w1 * (ix.w0 * r1[ix.i0] + ix.w1 * r1[ix.i1]);
          }
        }
      }
      break;
    }

    case OpKind::matmul: {
      arity(2, 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank("matmul", a, 2);
      require_rank("matmul", b, 2);
      if (a.dim(1) != b.dim(0)) {
        dim_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
      }
      node.value = Tensor({a.dim(0), b.dim(1)});
      MapRM(node.value.data().data(), a.dim(0), b.dim(1)).noalias() =
          ConstMapRM(a.data().data(), a.dim(0), a.dim(1)) *
          ConstMapRM(b.data().data(), b.dim(0), b.dim(1));
      break;
    }

    case OpKind::batched_matmul: {
      arity(2, 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank("batched-matmul", a, 3);
      require_rank("batched-matmul", b, 3);
      if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        dim_error("batched-matmul", "incompatible " + shape_str(a.shape()) + " x " +
                                        shape_str(b.shape()));
      }
      const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), nn = b.dim(2);
      node.value = Tensor({nb, m, nn});
      for (std::size_t i = 0; i < nb; ++i) {
        MapRM(node.value.data().data() + i * m * nn, m, nn).noalias() =
            ConstMapRM(a.data().data() + i * m * k, m, k) *
            ConstMapRM(b.data().data() + i * k * nn, k, nn);
      }
      break;
    }

    case OpKind::transpose: {
      arity(1, 1);
      const Tensor& x = in(0);
      if (x.rank() != 2 && x.rank() != 3) {
        dim_error("transpose", "expected rank 2 or 3, got " + shape_str(x.shape()));
      }
      node.value = Tensor(swap_last_two(x.shape()));
      transpose_into(x, node.value);
      break;
    }

    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      arity(2, 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_same_shape(op_name(kind), a, b);
      node.value = a;
      auto out = node.value.data();
      auto rhs = b.data();
      if (kind == OpKind::add) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += rhs[i];
      } else if (kind == OpKind::sub) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= rhs[i];
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= rhs[i];
      }
      break;
    }

    case OpKind::scalar_mul: {
      arity(1, 1);
      if (!std::isfinite(attrs.scalar)) throw NumericError("scalar-mul: non-finite scalar");
      node.value = in(0);
      for (double& v : node.value.data()) v *= attrs.scalar;
      break;
    }

    case OpKind::sum:
    case OpKind::mean: {
      arity(1, 1);
      double total = 0.0;
      for (double v : in(0).data()) total += v;
      if (kind == OpKind::mean) total /= static_cast<double>(in(0).size());
      node.value = Tensor::scalar(total);
      break;
    }

    case OpKind::frobenius_norm: {
      arity(1, 1);
      double sq = 0.0;
      for (double v : in(0).data()) sq += v * v;
      node.value = Tensor::scalar(std::sqrt(sq));
      break;
    }

    case OpKind::reshape: {
      arity(1, 1);
      node.value = in(0).reshaped(attrs.shape);
      break;
    }

    case OpKind::cross_entropy: {
      arity(1, 1);
      const Tensor& logits = in(0);
      require_rank("cross-entropy", logits, 4);
      const std::size_t n = logits.dim(0), c = logits.dim(1);
      const std::size_t hw = logits.dim(2) * logits.dim(3);
      if (attrs.labels.size() != n * hw) {
        dim_error("cross-entropy", "expected " + std::to_string(n * hw) + " labels for logits " +
                                       shape_str(logits.shape()) + ", got " +
                                       std::to_string(attrs.labels.size()));
      }
      std::size_t valid = 0;
      for (int label : attrs.labels) {
        if (label == attrs.ignore_index) continue;
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
          throw LabelError("cross-entropy: label " + std::to_string(label) +
                           " outside [0, " + std::to_string(c) + ")");
        }
        ++valid;
      }
      if (valid == 0) throw DegenerateInputError("cross-entropy: every pixel is ignored");
      node.saved.assign(logits.size(), 0.0);
      const double* z = logits.data().data();
      double total = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
          const int label = attrs.labels[b * hw + p];
          if (label == attrs.ignore_index) continue;
          const double* zp = z + b * c * hw + p;
          double zmax = zp[0];
          for (std::size_t k = 1; k < c; ++k) zmax = std::max(zmax, zp[k * hw]);
          double denom = 0.0;
          for (std::size_t k = 0; k < c; ++k) denom += std::exp(zp[k * hw] - zmax);
          const double log_denom = std::log(denom);
          double* prob = node.saved.data() + b * c * hw + p;
          for (std::size_t k = 0; k < c; ++k) prob[k * hw] = std::exp(zp[k * hw] - zmax) / denom;
          total += -(zp[static_cast<std::size_t>(label) * hw] - zmax - log_denom);
        }
      }
      node.saved.push_back(static_cast<double>(valid));
      node.value = Tensor::scalar(total / static_cast<double>(valid));
      break;
    }
  }

  return push(std::move(node));
}

void Tape::backprop_node(const Node& node, const Tensor& g,
                         std::vector<Tensor*>& dx) const {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  const double* gd = g.data().data();

  switch (node.kind) {
    case OpKind::leaf:
      break;

    case OpKind::conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const ConvGeometry geom = conv_geometry(x, w, node.attrs.stride, node.attrs.pad);
      const std::size_t per_out = geom.co * geom.positions();
      std::vector<double> cols(geom.patch() * geom.positions());
      std::vector<double> dcols(dx[0] ? cols.size() : 0);
      ConstMapRM wm(w.data().data(), geom.co, geom.patch());
      for (std::size_t n = 0; n < geom.n; ++n) {
        ConstMapRM gout(gd + n * per_out, geom.co, geom.positions());
        if (dx[1]) {
          im2col(x.data().data() + n * geom.ci * geom.h * geom.w, geom, cols.data());
          MapRM(dx[1]->data().data(), geom.co, geom.patch()).noalias() +=
              gout * ConstMapRM(cols.data(), geom.patch(), geom.positions()).transpose();
        }
        if (dx.size() > 2 && dx[2]) {
          double* db = dx[2]->data().data();
          for (std::size_t c = 0; c < geom.co; ++c) db[c] += gout.row(c).sum();
        }
        if (dx[0]) {
          MapRM(dcols.data(), geom.patch(), geom.positions()).noalias() = wm.transpose() * gout;
          col2im_add(dcols.data(), geom, dx[0]->data().data() + n * geom.ci * geom.h * geom.w);
        }
      }
      break;
    }

    case OpKind::relu: {
      if (!dx[0]) break;
      const auto out = node.value.data();
      auto d = dx[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (out[i] > 0.0) d[i] += gd[i];
      }
      break;
    }

    case OpKind::max_pool2: {
      if (!dx[0]) break;
      auto d = dx[0]->data();
      for (std::size_t o = 0; o < node.index.size(); ++o) d[node.index[o]] += gd[o];
      break;
    }

    case OpKind::avg_pool2: {
      if (!dx[0]) break;
      const Tensor& x = in(0);
      const std::size_t h = x.dim(2), w = x.dim(3), ho = h / 2, wo = w / 2;
      auto d = dx[0]->data();
      for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double share = 0.25 * gd[p * ho * wo + oy * wo + ox];
            const std::size_t i00 = p * h * w + 2 * oy * w + 2 * ox;
            d[i00] += share;
            d[i00 + 1] += share;
            d[i00 + w] += share;
            d[i00 + w + 1] += share;
          }
        }
      }
      break;
    }

    case OpKind::bilinear_upsample: {
      if (!dx[0]) break;
      const Tensor& x = in(0);
      const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
      const std::size_t oh = node.attrs.out_h, ow = node.attrs.out_w;
      const auto ty = interp_axis(h, oh);
      const auto tx = interp_axis(w, ow);
      const std::size_t planes = x.size() / (h * w);
      for (std::size_t p = 0; p < planes; ++p) {
        double* d = dx[0]->data().data() + p * h * w;
        const double* gp = gd + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Interp& iy = ty[oy];
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const Interp& ix = tx[ox];
            const double v = gp[oy * ow + ox];
            d[iy.i0 * w + ix.i0] += iy.w0 * ix.w0 * v;
            d[iy.i0 * w + ix.i1] += iy.w0 * ix.w1 * v;
            d[iy.i1 * w + ix.i0] += iy.w1 * ix.w0 * v;
            d[iy.i1 * w + ix.i1] += iy.w1 * ix.w1 * v;
          }
        }
      }
      break;
    }

    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      ConstMapRM gm(gd, m, n);
      if (dx[0]) {
        MapRM(dx[0]->data().data(), m, k).noalias() +=
            gm * ConstMapRM(b.data().data(), k, n).transpose();
      }
      if (dx[1]) {
        MapRM(dx[1]->data().data(), k, n).noalias() +=
            ConstMapRM(a.data().data(), m, k).transpose() * gm;
      }
      break;
    }

    case OpKind::batched_matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
      for (std::size_t i = 0; i < nb; ++i) {
        ConstMapRM gm(gd + i * m * n, m, n);
        if (dx[0]) {
          MapRM(dx[0]->data().data() + i * m * k, m, k).noalias() +=
              gm * ConstMapRM(b.data().data() + i * k * n, k, n).transpose();
        }
        if (dx[1]) {
          MapRM(dx[1]->data().data() + i * k * n, k, n).noalias() +=
              ConstMapRM(a.data().data() + i * m * k, m, k).transpose() * gm;
        }
      }
      break;
    }

    case OpKind::transpose: {
      if (!dx[0]) break;
      Tensor back(in(0).shape());
      transpose_into(g, back);
      auto d = dx[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += back[i];
      break;
    }

    case OpKind::add:
    case OpKind::sub: {
      const double sign = node.kind == OpKind::add ? 1.0 : -1.0;
      if (dx[0]) {
        auto d = dx[0]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
      }
      if (dx[1]) {
        auto d = dx[1]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += sign * gd[i];
      }
      break;
    }

    case OpKind::mul: {
      const auto a = in(0).data();
      const auto b = in(1).data();
      if (dx[0]) {
        auto d = dx[0]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * b[i];
      }
      if (dx[1]) {
        auto d = dx[1]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * a[i];
      }
      break;
    }

    case OpKind::scalar_mul: {
      if (!dx[0]) break;
      auto d = dx[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.attrs.scalar * gd[i];
      break;
    }

    case OpKind::sum:
    case OpKind::mean: {
      if (!dx[0]) break;
      auto d = dx[0]->data();
      double share = gd[0];
      if (node.kind == OpKind::mean) share /= static_cast<double>(d.size());
      for (double& v : d) v += share;
      break;
    }

    case OpKind::frobenius_norm: {
      if (!dx[0]) break;
      const double norm = node.value[0];
      if (norm == 0.0) break;  // subgradient 0 at the origin
      const auto x = in(0).data();
      auto d = dx[0]->data();
      const double factor = gd[0] / norm;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * x[i];
      break;
    }

    case OpKind::reshape: {
      if (!dx[0]) break;
      auto d = dx[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
      break;
    }

    case OpKind::cross_entropy: {
      if (!dx[0]) break;
      const Tensor& logits = in(0);
      const std::size_t n = logits.dim(0), c = logits.dim(1);
      const std::size_t hw = logits.dim(2) * logits.dim(3);
      const double valid = node.saved.back();
      const double factor = gd[0] / valid;
      auto d = dx[0]->data();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
          const int label = node.attrs.labels[b * hw + p];
          if (label == node.attrs.ignore_index) continue;
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t i = b * c * hw + k * hw + p;
            const double onehot = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
            d[i] += factor * (node.saved[i] - onehot);
          }
        }
      }
      break;
    }
  }
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_str(root.value.shape()));
  }

  std::vector<Tensor> grads(loss.id() + 1);
  std::vector<char> has(loss.id() + 1, 0);
  grads[loss.id()] = Tensor::full(root.value.shape(), 1.0);
  has[loss.id()] = 1;

  std::vector<Tensor*> input_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!has[id] || !node.requires_grad || node.kind == OpKind::leaf) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const std::size_t src = node.inputs[i];
      if (!nodes_[src].requires_grad) continue;
      if (!has[src]) {
        grads[src] = Tensor(nodes_[src].value.shape());
        has[src] = 1;
      }
      input_grads[i] = &grads[src];
    }
    backprop_node(node, grads[id], input_grads);
  }

  Gradients out;
  for (std::size_t id = 0; id <= loss.id(); ++id) {
    if (has[id] && nodes_[id].requires_grad) out.grads_.emplace(id, std::move(grads[id]));
  }
  return out;
}

Var detach(Var v) { return v.tape()->constant(v.value()); }

namespace ops {

namespace {
Var unary(OpKind kind, Var x, const OpAttrs& attrs = {}) {
  const Var in[] = {x};
  return x.tape()->apply(kind, in, attrs);
}
Var binary(OpKind kind, Var a, Var b) {
  const Var in[] = {a, b};
  return a.tape()->apply(kind, in);
}
}  // namespace

Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  const Var in[] = {x, w, b};
  return x.tape()->apply(OpKind::conv2d, in, attrs);
}

Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  const Var in[] = {x, w};
  return x.tape()->apply(OpKind::conv2d, in, attrs);
}

Var relu(Var x) { return unary(OpKind::relu, x); }
Var max_pool2(Var x) { return unary(OpKind::max_pool2, x); }
Var avg_pool2(Var x) { return unary(OpKind::avg_pool2, x); }

Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w) {
  OpAttrs attrs;
  attrs.out_h = out_h;
  attrs.out_w = out_w;
  return unary(OpKind::bilinear_upsample, x, attrs);
}

Var matmul(Var a, Var b) { return binary(OpKind::matmul, a, b); }
Var batched_matmul(Var a, Var b) { return binary(OpKind::batched_matmul, a, b); }
Var transpose(Var x) { return unary(OpKind::transpose, x); }
Var add(Var a, Var b) { return binary(OpKind::add, a, b); }
Var sub(Var a, Var b) { return binary(OpKind::sub, a, b); }
Var mul(Var a, Var b) { return binary(OpKind::mul, a, b); }

Var scale(Var x, double s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return unary(OpKind::scalar_mul, x, attrs);
}

Var sum(Var x) { return unary(OpKind::sum, x); }
Var mean(Var x) { return unary(OpKind::mean, x); }
Var frobenius_norm(Var x) { return unary(OpKind::frobenius_norm, x); }

Var reshape(Var x, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return unary(OpKind::reshape, x, attrs);
}

}  // namespace ops

Var cross_entropy(Var logits, std::span<const int> labels, int ignore_index) {
  OpAttrs attrs;
  attrs.labels.assign(labels.begin(), labels.end());
  attrs.ignore_index = ignore_index;
  const Var in[] = {logits};
  return logits.tape()->apply(OpKind::cross_entropy, in, attrs);
}

double finite_difference_check(const ScalarFunction& f, const Tensor& input, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw ContractError("finite_difference_check: epsilon must lie in (0, 1e-2]");
  }
  Tape tape;
  const Var x = tape.variable(input);
  const Var y = f(tape, x);
  const Tensor analytic = tape.backward(y).get_or_zero(x);

  auto eval_at = [&](const Tensor& point) {
    Tape probe;
    return f(probe, probe.constant(point)).value().item();
  };

  double worst = 0.0;
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + epsilon;
    const double up = eval_at(probe);
    probe[i] = saved - epsilon;
    const double down = eval_at(probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tldr
