#include "imanip/grad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "imanip/errors.hpp"

namespace imanip::grad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tensor finish(Tensor out, const std::vector<Tensor>& inputs, BackwardFn fn, const char* op) {
  if (!out.all_finite()) {
    throw ContractError(std::string("non-finite value produced by ") + op);
  }
  if (Tape* tape = Tape::active()) return tape->record(std::move(out), inputs, std::move(fn));
  return out;
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_string(t.shape()));
  }
}

enum class Bcast { same, a_scalar, b_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (b.numel() == 1) return Bcast::b_scalar;
  if (a.numel() == 1) return Bcast::a_scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

Shape unary_map_shape(const Tensor& a, const Tensor& b, Bcast k) {
  return k == Bcast::a_scalar ? b.shape() : a.shape();
}

// Generic binary elementwise with scalar/equal broadcasting. `f` computes the
// value; `dfa`/`dfb` give the local partials at (x, y).
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA dfa, DB dfb) {
  const Bcast k = broadcast_kind(a, b, op);
  const Shape shape = unary_map_shape(a, b, k);
  const std::size_t n = shape_numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  auto ai = [k](std::size_t i) { return k == Bcast::a_scalar ? 0 : i; };
  auto bi = [k](std::size_t i) { return k == Bcast::b_scalar ? 0 : i; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ai(i)], bv[bi(i)]);
  Tensor ta = a, tb = b;
  return finish(Tensor(shape, std::move(out)), {a, b},
                [ta, tb, k, n, dfa, dfb](const std::vector<double>& g, GradSlots& gin) {
                  const auto av = ta.data();
                  const auto bv = tb.data();
                  for (std::size_t i = 0; i < n; ++i) {
                    const double x = av[k == Bcast::a_scalar ? 0 : i];
                    const double y = bv[k == Bcast::b_scalar ? 0 : i];
                    if (gin[0]) (*gin[0])[k == Bcast::a_scalar ? 0 : i] += g[i] * dfa(x, y);
                    if (gin[1]) (*gin[1])[k == Bcast::b_scalar ? 0 : i] += g[i] * dfb(x, y);
                  }
                },
                op);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return finish(Tensor({m, n}, std::move(out)), {a, b},
                [a, b, m, k, n](const std::vector<double>& g, GradSlots& gin) {
                  ConstMap G(g.data(), m, n);
                  if (gin[0]) MutMap(gin[0]->data(), m, k).noalias() += G * ConstMap(b.data().data(), k, n).transpose();
                  if (gin[1]) MutMap(gin[1]->data(), k, n).noalias() += ConstMap(a.data().data(), m, k).transpose() * G;
                },
                "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt inner dimensions differ: " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), n, k).transpose();
  return finish(Tensor({m, n}, std::move(out)), {a, b},
                [a, b, m, k, n](const std::vector<double>& g, GradSlots& gin) {
                  ConstMap G(g.data(), m, n);
                  if (gin[0]) MutMap(gin[0]->data(), m, k).noalias() += G * ConstMap(b.data().data(), n, k);
                  if (gin[1]) MutMap(gin[1]->data(), n, k).noalias() += G.transpose() * ConstMap(a.data().data(), m, k);
                },
                "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
  return finish(Tensor({n, m}, std::move(out)), {a},
                [m, n](const std::vector<double>& g, GradSlots& gin) {
                  if (gin[0]) MutMap(gin[0]->data(), m, n) += ConstMap(g.data(), n, m).transpose();
                },
                "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= factor;
  return finish(Tensor(a.shape(), std::move(out)), {a},
                [factor](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += factor * g[i];
                },
                "scale");
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = std::abs(v);
  return finish(Tensor(a.shape(), std::move(out)), {a},
                [a](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto x = a.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
                    (*gin[0])[i] += s * g[i];
                  }
                },
                "abs");
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = v * norm_cdf(v);
  return finish(Tensor(a.shape(), std::move(out)), {a},
                [a](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto x = a.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    (*gin[0])[i] += g[i] * (norm_cdf(x[i]) + x[i] * norm_pdf(x[i]));
                  }
                },
                "gelu");
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = v * v;
  return finish(Tensor(a.shape(), std::move(out)), {a},
                [a](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto x = a.data();
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 2.0 * x[i] * g[i];
                },
                "square");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, xv[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const double e = std::exp(xv[base + i * s.inner] - mx);
        out[base + i * s.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] /= z;
    }
  }
  Tensor y(x.shape(), std::move(out));
  Tensor yc = y;
  return finish(std::move(y), {x},
                [yc, s](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto yv = yc.data();
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t in = 0; in < s.inner; ++in) {
                      const std::size_t base = o * s.n * s.inner + in;
                      double dot = 0.0;
                      for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * yv[base + i * s.inner];
                      for (std::size_t i = 0; i < s.n; ++i) {
                        const std::size_t j = base + i * s.inner;
                        (*gin[0])[j] += yv[j] * (g[j] - dot);
                      }
                    }
                  }
                },
                "softmax");
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, xv[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) z += std::exp(xv[base + i * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] = xv[base + i * s.inner] - lse;
    }
  }
  Tensor y(x.shape(), std::move(out));
  Tensor yc = y;
  return finish(std::move(y), {x},
                [yc, s](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto yv = yc.data();
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t in = 0; in < s.inner; ++in) {
                      const std::size_t base = o * s.n * s.inner + in;
                      double gs = 0.0;
                      for (std::size_t i = 0; i < s.n; ++i) gs += g[base + i * s.inner];
                      for (std::size_t i = 0; i < s.n; ++i) {
                        const std::size_t j = base + i * s.inner;
                        (*gin[0])[j] += g[j] - std::exp(yv[j]) * gs;
                      }
                    }
                  }
                },
                "log_softmax");
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw DimensionError("cross_entropy expects 1-D logits, got " + shape_string(logits.shape()));
  }
  const std::size_t n = logits.numel();
  if (target >= n) {
    throw IndexError("cross_entropy target " + std::to_string(target) + " outside [0," + std::to_string(n) + ")");
  }
  const auto x = logits.data();
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor lc = logits;
  return finish(Tensor::scalar(lse - x[target]), {logits},
                [lc, lse, target](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const auto x = lc.data();
                  for (std::size_t i = 0; i < x.size(); ++i) {
                    const double p = std::exp(x[i] - lse);
                    (*gin[0])[i] += g[0] * (p - (i == target ? 1.0 : 0.0));
                  }
                },
                "cross_entropy");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: feature size " + std::to_string(d) + " vs gain " +
                         shape_string(gain.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * inv_std[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  Tensor gc = gain;
  return finish(Tensor(x.shape(), std::move(out)), {x, gain, bias},
                [gc, xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows](const std::vector<double>& g,
                                                                                       GradSlots& gin) {
                  const auto gv = gc.data();
                  std::vector<double> dh(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * d;
                    const double* hr = xhat.data() + r * d;
                    if (gin[1]) for (std::size_t i = 0; i < d; ++i) (*gin[1])[i] += gr[i] * hr[i];
                    if (gin[2]) for (std::size_t i = 0; i < d; ++i) (*gin[2])[i] += gr[i];
                    if (!gin[0]) continue;
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                      dh[i] = gr[i] * gv[i];
                      mean_dh += dh[i];
                      mean_dh_h += dh[i] * hr[i];
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dh_h /= static_cast<double>(d);
                    for (std::size_t i = 0; i < d; ++i) {
                      (*gin[0])[r * d + i] += inv_std[r] * (dh[i] - mean_dh - hr[i] * mean_dh_h);
                    }
                  }
                },
                "layer_norm");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_string(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && p.shape()[i] != ref[i]) {
        throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " + shape_string(ref));
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t pn = p.shape()[axis];
    const auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * pn * s.inner, pn * s.inner, out.data() + (o * s.n + off) * s.inner);
    }
    off += pn;
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis]);
  return finish(Tensor(out_shape, std::move(out)), parts,
                [s, offsets, widths](const std::vector<double>& g, GradSlots& gin) {
                  for (std::size_t k = 0; k < gin.size(); ++k) {
                    if (!gin[k]) continue;
                    const std::size_t pn = widths[k];
                    for (std::size_t o = 0; o < s.outer; ++o) {
                      const double* src = g.data() + (o * s.n + offsets[k]) * s.inner;
                      double* dst = gin[k]->data() + o * pn * s.inner;
                      for (std::size_t i = 0; i < pn * s.inner; ++i) dst[i] += src[i];
                    }
                  }
                },
                "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (begin >= end || end > s.n) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis size " +
                         std::to_string(s.n));
  }
  const std::size_t w = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = w;
  std::vector<double> out(s.outer * w * s.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.n + begin) * s.inner, w * s.inner, out.data() + o * w * s.inner);
  }
  return finish(Tensor(out_shape, std::move(out)), {x},
                [s, begin, w](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    const double* src = g.data() + o * w * s.inner;
                    double* dst = gin[0]->data() + (o * s.n + begin) * s.inner;
                    for (std::size_t i = 0; i < w * s.inner; ++i) dst[i] += src[i];
                  }
                },
                "slice");
}

Tensor gather(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (indices.empty()) throw DimensionError("gather with no indices");
  for (auto i : indices) {
    if (i >= s.n) throw DimensionError("gather index " + std::to_string(i) + " out of range " + std::to_string(s.n));
  }
  const std::size_t w = indices.size();
  Shape out_shape = x.shape();
  out_shape[axis] = w;
  std::vector<double> out(s.outer * w * s.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < w; ++k) {
      std::copy_n(xv.data() + (o * s.n + indices[k]) * s.inner, s.inner, out.data() + (o * w + k) * s.inner);
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish(Tensor(out_shape, std::move(out)), {x},
                [s, idx = std::move(idx)](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const std::size_t w = idx.size();
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t k = 0; k < w; ++k) {
                      const double* src = g.data() + (o * w + k) * s.inner;
                      double* dst = gin[0]->data() + (o * s.n + idx[k]) * s.inner;
                      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                    }
                  }
                },
                "gather");
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor out = x.reshaped(std::move(shape));
  return finish(std::move(out), {x},
                [](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                },
                "reshape");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish(Tensor::scalar(total), {x},
                [](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (auto& v : *gin[0]) v += g[0];
                },
                "sum");
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.n; ++i) {
      const double* row = xv.data() + (o * s.n + i) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += row[in];
    }
  }
  return finish(Tensor(out_shape, std::move(out)), {x},
                [s](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t i = 0; i < s.n; ++i) {
                      double* dst = gin[0]->data() + (o * s.n + i) * s.inner;
                      const double* src = g.data() + o * s.inner;
                      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
                    }
                  }
                },
                "sum_axis");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor max(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.n; ++i) {
        if (xv[base + i * s.inner] > xv[base + best * s.inner]) best = i;
      }
      out[o * s.inner + in] = xv[base + best * s.inner];
      arg[o * s.inner + in] = best;
    }
  }
  return finish(Tensor(out_shape, std::move(out)), {x},
                [s, arg = std::move(arg)](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t in = 0; in < s.inner; ++in) {
                      const std::size_t k = o * s.inner + in;
                      (*gin[0])[o * s.n * s.inner + arg[k] * s.inner + in] += g[k];
                    }
                  }
                },
                "max_axis");
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  return mean(square(sub(a, b)));
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " vs row width " + std::to_string(n));
  }
  std::vector<double> out(x.values());
  const auto bv = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  return finish(Tensor(x.shape(), std::move(out)), {x, bias},
                [m, n](const std::vector<double>& g, GradSlots& gin) {
                  if (gin[0]) for (std::size_t i = 0; i < m * n; ++i) (*gin[0])[i] += g[i];
                  if (gin[1]) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t c = 0; c < n; ++c) (*gin[1])[c] += g[r * n + c];
                    }
                  }
                },
                "add_row");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

SparseRows SparseRows::from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense) {
  if (dense.size() != rows * cols) throw DimensionError("SparseRows::from_dense size mismatch");
  SparseRows f;
  f.rows = rows;
  f.cols = cols;
  f.row_begin.reserve(rows + 1);
  f.row_begin.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense[r * cols + c];
      if (v != 0.0) {
        f.col.push_back(c);
        f.value.push_back(v);
      }
    }
    f.row_begin.push_back(f.col.size());
  }
  return f;
}

std::vector<double> SparseRows::to_dense() const {
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = row_begin[r]; k < row_begin[r + 1]; ++k) out[r * cols + col[k]] = value[k];
  }
  return out;
}

Tensor sparse_matmul(const SparseRows& f, const Tensor& w) {
  require_matrix(w, "sparse_matmul");
  if (w.dim(0) != f.cols || f.row_begin.size() != f.rows + 1) {
    throw DimensionError("sparse_matmul: [" + std::to_string(f.rows) + "," + std::to_string(f.cols) + "] · " +
                         shape_string(w.shape()));
  }
  const std::size_t n = w.dim(1);
  std::vector<double> out(f.rows * n, 0.0);
  const auto wv = w.data();
  for (std::size_t r = 0; r < f.rows; ++r) {
    double* dst = out.data() + r * n;
    for (std::size_t k = f.row_begin[r]; k < f.row_begin[r + 1]; ++k) {
      const double a = f.value[k];
      const double* src = wv.data() + f.col[k] * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += a * src[j];
    }
  }
  auto fc = std::make_shared<const SparseRows>(f);
  return finish(Tensor({f.rows, n}, std::move(out)), {w},
                [fc, n](const std::vector<double>& g, GradSlots& gin) {
                  if (!gin[0]) return;
                  const SparseRows& f = *fc;
                  for (std::size_t r = 0; r < f.rows; ++r) {
                    const double* src = g.data() + r * n;
                    for (std::size_t k = f.row_begin[r]; k < f.row_begin[r + 1]; ++k) {
                      double* dst = gin[0]->data() + f.col[k] * n;
                      const double a = f.value[k];
                      for (std::size_t j = 0; j < n; ++j) dst[j] += a * src[j];
                    }
                  }
                },
                "sparse_matmul");
}

Tensor custom_op(Tensor value, const std::vector<Tensor>& inputs, BackwardFn backward) {
  return finish(std::move(value), inputs, std::move(backward), "custom_op");
}

}  // namespace imanip::grad
