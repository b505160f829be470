#include "advspk/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace advspk::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_same(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "expected equal shapes, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
}

void require_rank(std::string_view op, const Var& a, std::size_t rank, const char* what) {
  if (a.shape().size() != rank) {
    shape_fail(op, std::string("expected ") + what + " of rank " + std::to_string(rank) + ", got " +
                       to_string(a.shape()));
  }
}

void require_graph(std::string_view op, const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) shape_fail(op, "operands belong to different graphs");
}

template <typename F>
Var unary(std::string_view op, Var a, F&& f, Graph::BackwardFn backward) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(op, std::move(y), {a}, std::move(backward));
}

}  // namespace

Var add(Var a, Var b) {
  require_graph("add", a, b);
  require_same("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.graph().record("add", std::move(y), {a, b}, [](const Tensor& g, std::span<Tensor* const> pg) {
    for (Tensor* p : pg) {
      if (!p) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*p)[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_graph("sub", a, b);
  require_same("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.graph().record("sub", std::move(y), {a, b}, [](const Tensor& g, std::span<Tensor* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_graph("mul", a, b);
  require_same("mul", a, b);
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  Tensor y(av->shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*av)[i] * (*bv)[i];
  return a.graph().record("mul", std::move(y), {a, b}, [av, bv](const Tensor& g, std::span<Tensor* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * (*bv)[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * (*av)[i];
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double v) { return v * s; }, [s](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * s;
  });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double v) { return v + s; }, [](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
    const double gv = g[0];
    for (auto& v : pg[0]->storage()) v += gv;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var a) {
  require_rank("row_sum", a, 2, "input");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const Tensor& x = a.value();
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
    y[r] = s;
  }
  return a.graph().record("row_sum", std::move(y), {a}, [rows, cols](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*pg[0])[r * cols + c] += g[r];
  });
}

Var relu(Var a) {
  const Tensor* x = &a.value();
  return unary("relu", a, [](double v) { return v > 0.0 ? v : 0.0; }, [x](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*x)[i] > 0.0) (*pg[0])[i] += g[i];
  });
}

Var abs(Var a) {
  const Tensor* x = &a.value();
  return unary("abs", a, [](double v) { return std::fabs(v); }, [x](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = (*x)[i];
      if (v > 0.0)
        (*pg[0])[i] += g[i];
      else if (v < 0.0)
        (*pg[0])[i] -= g[i];
    }
  });
}

Var square(Var a) {
  const Tensor* x = &a.value();
  return unary("square", a, [](double v) { return v * v; }, [x](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += 2.0 * (*x)[i] * g[i];
  });
}

Var log_offset(Var a, double offset) {
  if (!(offset > 0.0)) throw std::invalid_argument("log_offset: offset must be positive");
  const Tensor* x = &a.value();
  return unary("log_offset", a, [offset](double v) { return std::log(v + offset); },
               [x, offset](const Tensor& g, std::span<Tensor* const> pg) {
                 for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] / ((*x)[i] + offset);
               });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  const Tensor* x = &a.value();
  return unary("clamp", a, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
               [x, lo, hi](const Tensor& g, std::span<Tensor* const> pg) {
                 for (std::size_t i = 0; i < g.size(); ++i) {
                   const double v = (*x)[i];
                   if (v >= lo && v <= hi) (*pg[0])[i] += g[i];
                 }
               });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(y), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  });
}

Var select(Var a, std::size_t index) {
  if (index >= a.value().size()) {
    shape_fail("select", "index " + std::to_string(index) + " out of range for shape " + to_string(a.shape()));
  }
  return a.graph().record("select", Tensor::scalar(a.value()[index]), {a},
                          [index](const Tensor& g, std::span<Tensor* const> pg) { (*pg[0])[index] += g[0]; });
}

Var matmul(Var a, Var b) {
  require_graph("matmul", a, b);
  require_rank("matmul", a, 2, "left operand");
  require_rank("matmul", b, 2, "right operand");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    shape_fail("matmul", "inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  Tensor y({m, n});
  MapMat(y.raw(), m, n).noalias() = CMapMat(av->raw(), m, k) * CMapMat(bv->raw(), k, n);
  return a.graph().record("matmul", std::move(y), {a, b}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    CMapMat G(g.raw(), m, n);
    if (pg[0]) MapMat(pg[0]->raw(), m, k).noalias() += G * CMapMat(bv->raw(), k, n).transpose();
    if (pg[1]) MapMat(pg[1]->raw(), k, n).noalias() += CMapMat(av->raw(), m, k).transpose() * G;
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_graph("linear", x, weight);
  require_graph("linear", x, bias);
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  require_rank("linear", bias, 1, "bias");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out = weight.shape()[0];
  if (weight.shape()[1] != in || bias.shape()[0] != out) {
    shape_fail("linear", "input " + to_string(x.shape()) + " incompatible with weight " +
                             to_string(weight.shape()) + " and bias " + to_string(bias.shape()));
  }
  const Tensor* xv = &x.value();
  const Tensor* wv = &weight.value();
  Tensor y({batch, out});
  MapMat Y(y.raw(), batch, out);
  Y.noalias() = CMapMat(xv->raw(), batch, in) * CMapMat(wv->raw(), out, in).transpose();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < out; ++c) Y(r, c) += bv[c];
  return x.graph().record("linear", std::move(y), {x, weight, bias}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    CMapMat G(g.raw(), batch, out);
    if (pg[0]) MapMat(pg[0]->raw(), batch, in).noalias() += G * CMapMat(wv->raw(), out, in);
    if (pg[1]) MapMat(pg[1]->raw(), out, in).noalias() += G.transpose() * CMapMat(xv->raw(), batch, in);
    if (pg[2]) {
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out; ++c) (*pg[2])[c] += G(r, c);
    }
  });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t dilation, std::size_t padding) {
  require_graph("conv1d", x, weight);
  require_graph("conv1d", x, bias);
  require_rank("conv1d", x, 3, "input");
  require_rank("conv1d", weight, 3, "weight");
  require_rank("conv1d", bias, 1, "bias");
  if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be >= 1");
  const std::size_t batch = x.shape()[0], cin = x.shape()[1], len = x.shape()[2];
  const std::size_t cout = weight.shape()[0], ksize = weight.shape()[2];
  if (weight.shape()[1] != cin || bias.shape()[0] != cout) {
    shape_fail("conv1d", "input " + to_string(x.shape()) + " incompatible with weight " +
                             to_string(weight.shape()) + " and bias " + to_string(bias.shape()));
  }
  const std::size_t span = dilation * (ksize - 1) + 1;
  if (len + 2 * padding < span) {
    shape_fail("conv1d", "input length " + std::to_string(len) + " shorter than receptive field " +
                             std::to_string(span) + " for input " + to_string(x.shape()));
  }
  const std::size_t tout = len + 2 * padding - span + 1;
  const std::size_t rows = cin * ksize;

  // im2col per batch element, kept for the weight gradient.
  auto cols = std::make_shared<AlignedVector>(batch * rows * tout, 0.0);
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b) {
    double* cb = cols->data() + b * rows * tout;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xr = xv.raw() + (b * cin + ci) * len;
      for (std::size_t k = 0; k < ksize; ++k) {
        double* row = cb + (ci * ksize + k) * tout;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(padding);
        for (std::size_t t = 0; t < tout; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + shift;
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) row[t] = xr[src];
        }
      }
    }
  }
  const Tensor* wv = &weight.value();
  const Tensor& bv = bias.value();
  Tensor y({batch, cout, tout});
  CMapMat W(wv->raw(), cout, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat Y(y.raw() + b * cout * tout, cout, tout);
    Y.noalias() = W * CMapMat(cols->data() + b * rows * tout, rows, tout);
    for (std::size_t c = 0; c < cout; ++c) Y.row(c).array() += bv[c];
  }
  return x.graph().record("conv1d", std::move(y), {x, weight, bias}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    CMapMat Wm(wv->raw(), cout, rows);
    AlignedVector dcols(pg[0] ? rows * tout : 0);
    for (std::size_t b = 0; b < batch; ++b) {
      CMapMat G(g.raw() + b * cout * tout, cout, tout);
      CMapMat C(cols->data() + b * rows * tout, rows, tout);
      if (pg[1]) MapMat(pg[1]->raw(), cout, rows).noalias() += G * C.transpose();
      if (pg[2]) {
        for (std::size_t c = 0; c < cout; ++c) (*pg[2])[c] += G.row(c).sum();
      }
      if (pg[0]) {
        MapMat D(dcols.data(), rows, tout);
        D.noalias() = Wm.transpose() * G;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          double* dxr = pg[0]->raw() + (b * cin + ci) * len;
          for (std::size_t k = 0; k < ksize; ++k) {
            const double* row = dcols.data() + (ci * ksize + k) * tout;
            const std::ptrdiff_t shift =
                static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(padding);
            for (std::size_t t = 0; t < tout; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + shift;
              if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dxr[src] += row[t];
            }
          }
        }
      }
    }
  });
}

Var max_pool1d(Var x, std::size_t size) {
  require_rank("max_pool1d", x, 3, "input");
  if (size == 0) throw std::invalid_argument("max_pool1d: size must be >= 1");
  const std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  const std::size_t tout = len / size;
  if (tout == 0) {
    shape_fail("max_pool1d", "input length " + std::to_string(len) + " shorter than window " + std::to_string(size) +
                                 " for input " + to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor y({batch, ch, tout});
  auto arg = std::make_shared<std::vector<std::size_t>>(batch * ch * tout);
  for (std::size_t r = 0; r < batch * ch; ++r) {
    for (std::size_t t = 0; t < tout; ++t) {
      std::size_t best = r * len + t * size;
      for (std::size_t k = 1; k < size; ++k) {
        const std::size_t idx = r * len + t * size + k;
        if (xv[idx] > xv[best]) best = idx;
      }
      y[r * tout + t] = xv[best];
      (*arg)[r * tout + t] = best;
    }
  }
  return x.graph().record("max_pool1d", std::move(y), {x}, [arg](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[(*arg)[i]] += g[i];
  });
}

Var mean_over_time(Var x) {
  require_rank("mean_over_time", x, 3, "input");
  const std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  const Tensor& xv = x.value();
  Tensor y({batch, ch});
  for (std::size_t r = 0; r < batch * ch; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += xv[r * len + t];
    y[r] = s / static_cast<double>(len);
  }
  return x.graph().record("mean_over_time", std::move(y), {x}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t r = 0; r < batch * ch; ++r)
      for (std::size_t t = 0; t < len; ++t) (*pg[0])[r * len + t] += g[r] * inv;
  });
}

Var stats_pool(Var x, double eps) {
  require_rank("stats_pool", x, 3, "input");
  const std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  const Tensor* xv = &x.value();
  Tensor y({batch, 2 * ch});
  auto means = std::make_shared<std::vector<double>>(batch * ch);
  auto roots = std::make_shared<std::vector<double>>(batch * ch);
  const double root_eps = std::sqrt(eps);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* row = xv->raw() + (b * ch + c) * len;
      double s = 0.0;
      for (std::size_t t = 0; t < len; ++t) s += row[t];
      const double m = s / static_cast<double>(len);
      double v = 0.0;
      for (std::size_t t = 0; t < len; ++t) v += (row[t] - m) * (row[t] - m);
      v /= static_cast<double>(len);
      const double r = std::sqrt(v + eps);
      (*means)[b * ch + c] = m;
      (*roots)[b * ch + c] = r;
      y[b * 2 * ch + c] = m;
      y[b * 2 * ch + ch + c] = r - root_eps;
    }
  }
  return x.graph().record("stats_pool", std::move(y), {x}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double gm = g[b * 2 * ch + c];
        const double gs = g[b * 2 * ch + ch + c];
        const double m = (*means)[b * ch + c];
        const double coef = gs / (*roots)[b * ch + c] * inv;  // d std / d x_t = (x_t - m) / (T * r)
        const double* row = xv->raw() + (b * ch + c) * len;
        double* drow = pg[0]->raw() + (b * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) drow[t] += gm * inv + coef * (row[t] - m);
      }
    }
  });
}

namespace {

struct BnLayout {
  std::size_t batch, ch, len;
};

BnLayout bn_layout(std::string_view op, const Var& x, const Var& gamma, const Var& beta) {
  require_graph(op, x, gamma);
  require_graph(op, x, beta);
  const auto& s = x.shape();
  if (s.size() != 2 && s.size() != 3) shape_fail(op, "expected input of rank 2 or 3, got " + to_string(s));
  BnLayout l{s[0], s[1], s.size() == 3 ? s[2] : 1};
  if (gamma.shape() != Shape{l.ch} || beta.shape() != Shape{l.ch}) {
    shape_fail(op, "scale/shift shapes " + to_string(gamma.shape()) + ", " + to_string(beta.shape()) +
                       " do not match channels of input " + to_string(s));
  }
  return l;
}

}  // namespace

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchStats* stats) {
  const BnLayout l = bn_layout("batch_norm", x, gamma, beta);
  const Tensor& xv = x.value();
  const Tensor* gv = &gamma.value();
  const std::size_t n = l.batch * l.len;
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(l.ch);
  Tensor y(xv.shape());
  if (stats) {
    stats->mean = Tensor({l.ch});
    stats->var = Tensor({l.ch});
  }
  for (std::size_t c = 0; c < l.ch; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t t = 0; t < l.len; ++t) s += xv[(b * l.ch + c) * l.len + t];
    const double m = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t t = 0; t < l.len; ++t) {
        const double d = xv[(b * l.ch + c) * l.len + t] - m;
        v += d * d;
      }
    const double var = v / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    if (stats) {
      stats->mean[c] = m;
      stats->var[c] = n > 1 ? v / static_cast<double>(n - 1) : var;
    }
    const double gm = (*gv)[c], bt = beta.value()[c];
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t t = 0; t < l.len; ++t) {
        const std::size_t idx = (b * l.ch + c) * l.len + t;
        const double h = (xv[idx] - m) * is;
        (*xhat)[idx] = h;
        y[idx] = gm * h + bt;
      }
  }
  return x.graph().record("batch_norm", std::move(y), {x, gamma, beta}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    const double nn = static_cast<double>(n);
    for (std::size_t c = 0; c < l.ch; ++c) {
      double sum_g = 0.0, sum_gh = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t t = 0; t < l.len; ++t) {
          const std::size_t idx = (b * l.ch + c) * l.len + t;
          sum_g += g[idx];
          sum_gh += g[idx] * (*xhat)[idx];
        }
      if (pg[1]) (*pg[1])[c] += sum_gh;
      if (pg[2]) (*pg[2])[c] += sum_g;
      if (pg[0]) {
        const double k = (*gv)[c] * (*inv_std)[c] / nn;
        for (std::size_t b = 0; b < l.batch; ++b)
          for (std::size_t t = 0; t < l.len; ++t) {
            const std::size_t idx = (b * l.ch + c) * l.len + t;
            (*pg[0])[idx] += k * (nn * g[idx] - sum_g - (*xhat)[idx] * sum_gh);
          }
      }
    }
  });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var, double eps) {
  const BnLayout l = bn_layout("batch_norm_eval", x, gamma, beta);
  if (running_mean.shape() != Shape{l.ch} || running_var.shape() != Shape{l.ch}) {
    shape_fail("batch_norm_eval", "running statistics do not match channels of input " + to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  const Tensor* gv = &gamma.value();
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(l.ch);
  Tensor y(xv.shape());
  for (std::size_t c = 0; c < l.ch; ++c) {
    const double is = 1.0 / std::sqrt(running_var[c] + eps);
    (*inv_std)[c] = is;
    const double m = running_mean[c], gm = (*gv)[c], bt = beta.value()[c];
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t t = 0; t < l.len; ++t) {
        const std::size_t idx = (b * l.ch + c) * l.len + t;
        const double h = (xv[idx] - m) * is;
        (*xhat)[idx] = h;
        y[idx] = gm * h + bt;
      }
  }
  return x.graph().record("batch_norm_eval", std::move(y), {x, gamma, beta}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t c = 0; c < l.ch; ++c) {
      const double k = (*gv)[c] * (*inv_std)[c];
      double sum_g = 0.0, sum_gh = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t t = 0; t < l.len; ++t) {
          const std::size_t idx = (b * l.ch + c) * l.len + t;
          sum_g += g[idx];
          sum_gh += g[idx] * (*xhat)[idx];
          if (pg[0]) (*pg[0])[idx] += k * g[idx];
        }
      if (pg[1]) (*pg[1])[c] += sum_gh;
      if (pg[2]) (*pg[2])[c] += sum_g;
    }
  });
}

Var log_softmax(Var logits) {
  require_rank("log_softmax", logits, 2, "logits");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  const Tensor& z = logits.value();
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.raw() + r * cols;
    const double m = *std::max_element(zr, zr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(zr[c] - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = zr[c] - lse;
  }
  auto out = std::make_shared<Tensor>(y);
  return logits.graph().record("log_softmax", std::move(y), {logits}, [=](const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        (*pg[0])[i] += g[i] - std::exp((*out)[i]) * gs;
      }
    }
  });
}

Var nll_loss(Var log_probs, std::span<const int> labels) {
  require_rank("nll_loss", log_probs, 2, "log-probabilities");
  const std::size_t rows = log_probs.shape()[0], cols = log_probs.shape()[1];
  if (labels.size() != rows) {
    shape_fail("nll_loss", std::to_string(labels.size()) + " labels for input " + to_string(log_probs.shape()));
  }
  std::vector<std::size_t> idx(rows);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw std::out_of_range("nll_loss: label " + std::to_string(labels[r]) + " outside [0, " +
                              std::to_string(cols) + ")");
    }
    idx[r] = r * cols + static_cast<std::size_t>(labels[r]);
    s -= log_probs.value()[idx[r]];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return log_probs.graph().record("nll_loss", Tensor::scalar(s * inv), {log_probs},
                                  [idx = std::move(idx), inv](const Tensor& g, std::span<Tensor* const> pg) {
                                    for (auto i : idx) (*pg[0])[i] -= g[0] * inv;
                                  });
}

}  // namespace advspk::ops
