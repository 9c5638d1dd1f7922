// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "echomoe/errors.hpp"

namespace echomoe::ops {
namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         to_string(a.shape()));
  }
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  Tensor out = echomoe::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b},
                  [&t, ia, ib](const Tensor& g, std::span<Tensor* const> in) {
                    if (in[0]) add_into(*in[0], matmul_nt(g, t.value(ib)));
                    if (in[1]) add_into(*in[1], matmul_tn(t.value(ia), g));
                  });
}

Var linear(Var x, Var w) {
  Tape& t = x.tape();
  Tensor out = matmul_nt(x.value(), w.value());
  const std::size_t ix = x.id(), iw = w.id();
  return t.record(std::move(out), {x, w},
                  [&t, ix, iw](const Tensor& g, std::span<Tensor* const> in) {
                    if (in[0]) add_into(*in[0], echomoe::matmul(g, t.value(iw)));
                    if (in[1]) add_into(*in[1], matmul_tn(g, t.value(ix)));
                  });
}

Var transpose(Var a) {
  return a.tape().record(echomoe::transpose(a.value()), {a},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (in[0]) add_into(*in[0], echomoe::transpose(g));
                         });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  return a.tape().record(echomoe::add(a.value(), b.value()), {a, b},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (in[0]) add_into(*in[0], g);
                           if (in[1]) add_into(*in[1], g);
                         });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  return a.tape().record(echomoe::sub(a.value(), b.value()), {a, b},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (in[0]) add_into(*in[0], g);
                           if (in[1]) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tape& t = a.tape();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b},
                  [&t, ia, ib](const Tensor& g, std::span<Tensor* const> in) {
                    const Tensor& av = t.value(ia);
                    const Tensor& bv = t.value(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (in[0]) (*in[0])[i] += g[i] * bv[i];
                      if (in[1]) (*in[1])[i] += g[i] * av[i];
                    }
                  });
}

Var mul_const(Var a, const Tensor& c) {
  if (a.shape() != c.shape()) {
    throw DimensionError("mul_const: shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(c.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape().record(std::move(out), {a},
                         [c](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * c[i];
                         });
}

Var add_rowvec(Var x, Var b) {
  require_matrix(x, "add_rowvec");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (b.value().size() != d) {
    throw DimensionError("add_rowvec: vector " + to_string(b.shape()) +
                         " does not match trailing dimension of " +
                         to_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out.at(r, j) += b.value()[j];
  return x.tape().record(std::move(out), {x, b},
                         [n, d](const Tensor& g, std::span<Tensor* const> in) {
                           if (in[0]) add_into(*in[0], g);
                           if (in[1]) {
                             for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t j = 0; j < d; ++j) (*in[1])[j] += g.at(r, j);
                           }
                         });
}

Var scale(Var a, double s) {
  return a.tape().record(echomoe::scale(a.value(), s), {a},
                         [s](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * s;
                         });
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) {
    throw DimensionError("scale_by: scale must hold one value, got " +
                         to_string(s.shape()));
  }
  Tape& t = a.tape();
  Tensor out = echomoe::scale(a.value(), s.value()[0]);
  const std::size_t ia = a.id(), is = s.id();
  return t.record(std::move(out), {a, s},
                  [&t, ia, is](const Tensor& g, std::span<Tensor* const> in) {
                    const double sv = t.value(is)[0];
                    const Tensor& av = t.value(ia);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (in[0]) (*in[0])[i] += g[i] * sv;
                      acc += g[i] * av[i];
                    }
                    if (in[1]) (*in[1])[0] += acc;
                  });
}

Var rsub(double c, Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = c - v;
  return a.tape().record(std::move(out), {a},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] -= g[i];
                         });
}

Var row_scale(Var x, Var s) {
  require_matrix(x, "row_scale");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (s.value().size() != n) {
    throw DimensionError("row_scale: scales " + to_string(s.shape()) +
                         " do not match rows of " + to_string(x.shape()));
  }
  Tape& t = x.tape();
  Tensor out = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out.at(r, j) *= s.value()[r];
  const std::size_t ix = x.id(), is = s.id();
  return t.record(std::move(out), {x, s},
                  [&t, ix, is, n, d](const Tensor& g, std::span<Tensor* const> in) {
                    const Tensor& xv = t.value(ix);
                    const Tensor& sv = t.value(is);
                    for (std::size_t r = 0; r < n; ++r) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        if (in[0]) in[0]->at(r, j) += g.at(r, j) * sv[r];
                        acc += g.at(r, j) * xv.at(r, j);
                      }
                      if (in[1]) (*in[1])[r] += acc;
                    }
                  });
}

Var sigmoid(Var x) {
  Tape& t = x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = sigmoid_value(v);
  const std::size_t self = t.size();
  return t.record(std::move(out), {x},
                  [&t, self](const Tensor& g, std::span<Tensor* const> in) {
                    if (!in[0]) return;
                    const Tensor& y = t.value(self);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      (*in[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                  });
}

Var silu(Var x) {
  Tape& t = x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = v * sigmoid_value(v);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x},
                  [&t, ix](const Tensor& g, std::span<Tensor* const> in) {
                    if (!in[0]) return;
                    const Tensor& xv = t.value(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const double s = sigmoid_value(xv[i]);
                      (*in[0])[i] += g[i] * s * (1.0 + xv[i] * (1.0 - s));
                    }
                  });
}

Var softmax(Var x, std::size_t axis) {
  Tape& t = x.tape();
  Tensor out = echomoe::softmax(x.value(), axis);
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  const std::size_t self = t.size();
  return t.record(std::move(out), {x},
                  [&t, self, outer, inner, n](const Tensor& g, std::span<Tensor* const> in) {
                    if (!in[0]) return;
                    const Tensor& y = t.value(self);
                    for (std::size_t o = 0; o < outer; ++o) {
                      for (std::size_t k = 0; k < inner; ++k) {
                        const std::size_t base = o * n * inner + k;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                          dot += g[base + j * inner] * y[base + j * inner];
                        for (std::size_t j = 0; j < n; ++j) {
                          const std::size_t idx = base + j * inner;
                          (*in[0])[idx] += y[idx] * (g[idx] - dot);
                        }
                      }
                    }
                  });
}

Var causal_softmax(Var scores) {
  require_matrix(scores, "causal_softmax");
  const std::size_t n = scores.value().rows();
  if (scores.value().cols() != n) {
    throw DimensionError("causal_softmax: expected a square matrix, got " +
                         to_string(scores.shape()));
  }
  Tape& t = scores.tape();
  const Tensor& x = scores.value();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j <= i; ++j) out.at(i, j) /= z;
  }
  const std::size_t self = t.size();
  return t.record(std::move(out), {scores},
                  [&t, self, n](const Tensor& g, std::span<Tensor* const> in) {
                    if (!in[0]) return;
                    const Tensor& y = t.value(self);
                    for (std::size_t i = 0; i < n; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j <= i; ++j) dot += g.at(i, j) * y.at(i, j);
                      for (std::size_t j = 0; j <= i; ++j)
                        in[0]->at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                    }
                  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = x.tape();
  Tensor out = echomoe::layer_norm(x.value(), gamma.value(), beta.value(), eps);
  const std::size_t ix = x.id(), ig = gamma.id();
  const std::size_t d = x.shape().back();
  return t.record(
      std::move(out), {x, gamma, beta},
      [&t, ix, ig, d, eps](const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& xv = t.value(ix);
        const Tensor& gv = t.value(ig);
        const std::size_t rows = d ? xv.size() / d : 0;
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = &xv.data()[r * d];
          const double* gr = &g.data()[r * d];
          double mean = 0.0;
          for (std::size_t j = 0; j < d; ++j) mean += xr[j];
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (xr[j] - mean) * inv;
            dxhat[j] = gr[j] * gv[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
            if (in[1]) (*in[1])[j] += gr[j] * xhat[j];
            if (in[2]) (*in[2])[j] += gr[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          if (in[0]) {
            for (std::size_t j = 0; j < d; ++j) {
              (*in[0])[r * d + j] +=
                  inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) +
                           " out of range for " + to_string(xv.shape()));
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = xv.at(rows[i], j);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), {x},
                         [idx = std::move(idx), d](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < d; ++j) in[0]->at(idx[i], j) += g.at(i, j);
                         });
}

Var scatter_rows(Var x, std::span<const std::size_t> rows, std::size_t n_out) {
  require_matrix(x, "scatter_rows");
  const Tensor& xv = x.value();
  if (rows.size() != xv.rows()) {
    throw DimensionError("scatter_rows: " + std::to_string(rows.size()) +
                         " targets for " + to_string(xv.shape()));
  }
  const std::size_t d = xv.cols();
  Tensor out({n_out, d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_out) throw DimensionError("scatter_rows: target row out of range");
    for (std::size_t j = 0; j < d; ++j) out.at(rows[i], j) += xv.at(i, j);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), {x},
                         [idx = std::move(idx), d](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < d; ++j) in[0]->at(i, j) += g.at(idx[i], j);
                         });
}

Var gather_elements(Var x, std::span<const std::size_t> cols, std::size_t k) {
  require_matrix(x, "gather_elements");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows();
  if (cols.size() != n * k) {
    throw DimensionError("gather_elements: index table of " +
                         std::to_string(cols.size()) + " entries for " +
                         std::to_string(n) + " rows of width " + std::to_string(k));
  }
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t c = cols[i * k + j];
      if (c >= xv.cols()) throw DimensionError("gather_elements: column out of range");
      out.at(i, j) = xv.at(i, c);
    }
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return x.tape().record(std::move(out), {x},
                         [idx = std::move(idx), n, k](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < k; ++j) in[0]->at(i, idx[i * k + j]) += g.at(i, j);
                         });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const Tensor& xv = x.value();
  if (start + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         to_string(xv.shape()));
  }
  const std::size_t n = xv.rows();
  Tensor out({n, count});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < count; ++j) out.at(r, j) = xv.at(r, start + j);
  return x.tape().record(std::move(out), {x},
                         [n, start, count](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t j = 0; j < count; ++j) in[0]->at(r, start + j) += g.at(r, j);
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.value().rows() != n) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(r, off + j) = v.at(r, j);
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      std::move(out), std::move(inputs),
      [widths = std::move(widths), n](const Tensor& g, std::span<Tensor* const> in) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (in[k]) {
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j) in[k]->at(r, j) += g.at(r, off + j);
          }
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts[0].value().cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.value().cols() != d) {
      throw DimensionError("concat_rows: column mismatch " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    heights.push_back(p.value().rows());
    total += heights.back();
  }
  std::vector<double> data;
  data.reserve(total * d);
  for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      Tensor({total, d}, std::move(data)), std::move(inputs),
      [heights = std::move(heights), d](const Tensor& g, std::span<Tensor* const> in) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < heights.size(); ++k) {
          const std::size_t len = heights[k] * d;
          if (in[k]) {
            for (std::size_t i = 0; i < len; ++i) (*in[k])[i] += g[off + i];
          }
          off += len;
        }
      });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                         });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x},
                         [](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (double& v : in[0]->data()) v += g[0];
                         });
}

Var mean_rows(Var x) {
  require_matrix(x, "mean_rows");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (n == 0) throw DimensionError("mean_rows: no rows");
  Tensor out({d});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.value().at(r, j);
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out.data()) v *= inv;
  return x.tape().record(std::move(out), {x},
                         [n, d, inv](const Tensor& g, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t j = 0; j < d; ++j) in[0]->at(r, j) += g[j] * inv;
                         });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), v = z.cols();
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + to_string(z.shape()));
  }
  if (n == 0) throw ContractError("cross_entropy: no positions");
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= v) {
      throw DataError("cross_entropy: target " + std::to_string(targets[i]) +
                      " at position " + std::to_string(i) +
                      " outside vocabulary of " + std::to_string(v));
    }
  }
  Tensor probs = echomoe::softmax(z, 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = z.row(i);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : row) s += std::exp(x - mx);
    loss += (mx + std::log(s)) - row[targets[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), tg = std::move(tg), n](const Tensor& g,
                                                          std::span<Tensor* const> in) {
        if (!in[0]) return;
        const double w = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          auto gr = in[0]->row(i);
          const auto pr = probs.row(i);
          for (std::size_t j = 0; j < gr.size(); ++j) gr[j] += w * pr[j];
          gr[tg[i]] -= w;
        }
      });
}

}  // namespace echomoe::ops
