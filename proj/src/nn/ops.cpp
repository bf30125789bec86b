// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sdet/nn/ops.hpp"

#include <cmath>
#include <string>

#include "sdet/common/error.hpp"
#include "sdet/sparse/kernels.hpp"

namespace sdet::nn {
namespace {

template <class T>
Matrix<T>* grad_of(Node<T>& n, std::size_t i) {
  auto& p = n.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

// c = a * b for row-major matrices.
template <class T>
void gemm(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  c = Matrix<T>(n, m);
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const T* ar = a.row(i);
    T* cr = c.row(i);
    for (std::size_t q = 0; q < k; ++q) {
      const T v = ar[q];
      const T* br = b.row(q);
      for (std::size_t j = 0; j < m; ++j) cr[j] += v * br[j];
    }
  }
}

// ga += g * b^T
template <class T>
void gemm_grad_a(const Matrix<T>& g, const Matrix<T>& b, Matrix<T>& ga) {
  const std::size_t n = g.rows(), m = g.cols(), k = b.rows();
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const T* gr = g.row(i);
    T* out = ga.row(i);
    for (std::size_t q = 0; q < k; ++q) {
      const T* br = b.row(q);
      T acc = T(0);
      for (std::size_t j = 0; j < m; ++j) acc += gr[j] * br[j];
      out[q] += acc;
    }
  }
}

// gb += a^T * g
template <class T>
void gemm_grad_b(const Matrix<T>& a, const Matrix<T>& g, Matrix<T>& gb) {
  const std::size_t n = a.rows(), k = a.cols(), m = g.cols();
#pragma omp parallel for schedule(static) if (k > 8 && n > 256)
  for (std::int64_t q = 0; q < static_cast<std::int64_t>(k); ++q) {
    T* out = gb.row(q);
    for (std::size_t i = 0; i < n; ++i) {
      const T v = a(i, q);
      const T* gr = g.row(i);
      for (std::size_t j = 0; j < m; ++j) out[j] += v * gr[j];
    }
  }
}

template <class T>
void add_colsum(const Matrix<T>& g, Matrix<T>& gb) {
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const T* gr = g.row(i);
    for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += gr[j];
  }
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "add");
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = grad_of(n, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
      }
    }
  }, "add");
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "sub");
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
    }
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= n.grad[i];
    }
  }, "sub");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mul");
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    }
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * av[i];
    }
  }, "mul");
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return Var<T>::make(std::move(out), {a}, [s](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * s;
    }
  }, "scale");
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
  return Var<T>::make(std::move(out), {a}, [](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) {
      const auto& x = n.parents[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (x[i] > T(0)) (*g)[i] += n.grad[i];
      }
    }
  }, "relu");
}

template <class T>
Var<T> sum(const Var<T>& a) {
  Matrix<T> out(1, 1);
  T acc = T(0);
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
  out(0, 0) = acc;
  return Var<T>::make(std::move(out), {a}, [](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) {
      const T v = n.grad(0, 0);
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += v;
    }
  }, "sum");
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimension mismatch");
  Matrix<T> out;
  gemm(a.value(), b.value(), out);
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) gemm_grad_a(n.grad, n.parents[1]->value, *g);
    if (auto* g = grad_of(n, 1)) gemm_grad_b(n.parents[0]->value, n.grad, *g);
  }, "matmul");
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* b) {
  if (x.cols() != w.rows()) {
    throw ConfigError("linear: " + std::to_string(x.cols()) + " input channels, weight expects " +
                      std::to_string(w.rows()));
  }
  if (b && (b->rows() != 1 || b->cols() != w.cols())) throw ConfigError("linear: bias shape mismatch");
  Matrix<T> out;
  gemm(x.value(), w.value(), out);
  if (b) {
    for (std::size_t i = 0; i < out.rows(); ++i) {
      T* r = out.row(i);
      for (std::size_t j = 0; j < out.cols(); ++j) r[j] += b->value()[j];
    }
  }
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(*b);
  return Var<T>::make(std::move(out), std::move(parents), [](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) gemm_grad_a(n.grad, n.parents[1]->value, *g);
    if (auto* g = grad_of(n, 1)) gemm_grad_b(n.parents[0]->value, n.grad, *g);
    if (n.parents.size() > 2) {
      if (auto* g = grad_of(n, 2)) add_colsum(n.grad, *g);
    }
  }, "linear");
}

template <class T>
SparseVar<T> conv(const SparseVar<T>& x, const Var<T>& w, const Var<T>* b, int kernel_size,
                  sparse::ConvMode mode) {
  sparse::check_weights(w.rows(), w.cols(), kernel_size, x.channels(), 0);
  if (b && (b->rows() != 1 || b->cols() != w.cols())) throw ConfigError("conv: bias shape mismatch");
  auto plan = sparse::plan_conv(x.geom, kernel_size, mode);
  Matrix<T> out;
  std::span<const T> bias;
  if (b) bias = b->value().flat();
  sparse::conv_forward(x.feats.value(), sparse::Route{*plan.map, false}, w.value(), bias, out);
  std::vector<Var<T>> parents{x.feats, w};
  if (b) parents.push_back(*b);
  auto map = plan.map;
  auto v = Var<T>::make(std::move(out), std::move(parents), [map](Node<T>& n) {
    const sparse::Route route{*map, false};
    if (auto* g = grad_of(n, 0)) sparse::conv_backward_src(n.grad, route, n.parents[1]->value, *g);
    if (auto* g = grad_of(n, 1)) sparse::conv_backward_weight(n.parents[0]->value, n.grad, route, *g);
    if (n.parents.size() > 2) {
      if (auto* g = grad_of(n, 2)) add_colsum(n.grad, *g);
    }
  }, mode.kind == sparse::ConvMode::Submanifold ? "subm_conv" : "strided_conv");
  return {plan.out, std::move(v)};
}

namespace {

template <class T>
SparseVar<T> transposed_with_plan(const SparseVar<T>& x, const Var<T>& w, const Var<T>* b, int kernel_size,
                                  const sparse::ConvPlan& plan, const char* op) {
  sparse::check_weights(w.rows(), w.cols(), kernel_size, x.channels(), 0);
  if (b && (b->rows() != 1 || b->cols() != w.cols())) throw ConfigError("transposed_conv: bias shape mismatch");
  Matrix<T> out;
  std::span<const T> bias;
  if (b) bias = b->value().flat();
  sparse::conv_forward(x.feats.value(), sparse::Route{*plan.map, true}, w.value(), bias, out);
  std::vector<Var<T>> parents{x.feats, w};
  if (b) parents.push_back(*b);
  auto map = plan.map;
  auto v = Var<T>::make(std::move(out), std::move(parents), [map](Node<T>& n) {
    const sparse::Route route{*map, true};
    if (auto* g = grad_of(n, 0)) sparse::conv_backward_src(n.grad, route, n.parents[1]->value, *g);
    if (auto* g = grad_of(n, 1)) sparse::conv_backward_weight(n.parents[0]->value, n.grad, route, *g);
    if (n.parents.size() > 2) {
      if (auto* g = grad_of(n, 2)) add_colsum(n.grad, *g);
    }
  }, op);
  return {plan.out, std::move(v)};
}

}  // namespace

template <class T>
SparseVar<T> transposed_conv(const SparseVar<T>& x, const Var<T>& w, const Var<T>* b, int kernel_size,
                             int upsample) {
  sparse::check_weights(w.rows(), w.cols(), kernel_size, x.channels(), 0);
  return transposed_with_plan(x, w, b, kernel_size, sparse::plan_generative_transposed(x.geom, kernel_size, upsample),
                              "gen_transposed_conv");
}

template <class T>
SparseVar<T> transposed_conv_onto(const SparseVar<T>& x, const sparse::CoordSetPtr& target, const Var<T>& w,
                                  const Var<T>* b, int kernel_size) {
  sparse::check_weights(w.rows(), w.cols(), kernel_size, x.channels(), 0);
  return transposed_with_plan(x, w, b, kernel_size, sparse::plan_transposed_onto(x.geom, target, kernel_size),
                              "transposed_conv");
}

template <class T>
SparseVar<T> batch_norm(const SparseVar<T>& x, const Var<T>& gamma, const Var<T>& beta,
                        Matrix<T>& running_mean, Matrix<T>& running_var, const BatchNormOptions& opt) {
  const std::size_t n = x.size();
  const std::size_t c = x.channels();
  if (gamma.cols() != c || beta.cols() != c || running_mean.cols() != c || running_var.cols() != c) {
    throw ConfigError("batch_norm: channel mismatch");
  }
  const Matrix<T>& xv = x.feats.value();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();

  if (opt.affine_only) {
    Matrix<T> out(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) out(i, j) = gm[j] * xv(i, j) + bt[j];
    }
    auto v = Var<T>::make(std::move(out), {x.feats, gamma, beta}, [](Node<T>& nd) {
      const auto& xin = nd.parents[0]->value;
      const auto& g = nd.parents[1]->value;
      const std::size_t cc = xin.cols();
      if (auto* gx = grad_of(nd, 0)) {
        for (std::size_t i = 0; i < xin.rows(); ++i) {
          for (std::size_t j = 0; j < cc; ++j) (*gx)(i, j) += nd.grad(i, j) * g[j];
        }
      }
      if (auto* gg = grad_of(nd, 1)) {
        for (std::size_t i = 0; i < xin.rows(); ++i) {
          for (std::size_t j = 0; j < cc; ++j) (*gg)[j] += nd.grad(i, j) * xin(i, j);
        }
      }
      if (auto* gb = grad_of(nd, 2)) add_colsum(nd.grad, *gb);
    }, "affine");
    return {x.geom, std::move(v)};
  }

  std::vector<T> mean(c), invstd(c);
  if (opt.training) {
    if (n == 0) {
      return {x.geom, Var<T>::make(Matrix<T>(0, c), {x.feats, gamma, beta}, [](Node<T>&) {}, "batch_norm")};
    }
    // Per-channel sequential reductions keep the result independent of the
    // thread count.
#pragma omp parallel for schedule(static) if (c >= 8 && n > 1024)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(c); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += xv(i, j);
      const double m = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = xv(i, j) - m;
        ss += d * d;
      }
      const double var = ss / static_cast<double>(n);
      mean[j] = static_cast<T>(m);
      invstd[j] = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      running_mean[j] = static_cast<T>((1.0 - opt.momentum) * running_mean[j] + opt.momentum * m);
      running_var[j] = static_cast<T>((1.0 - opt.momentum) * running_var[j] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = running_mean[j];
      invstd[j] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[j]) + opt.eps));
    }
  }

  Matrix<T> xhat(n, c);
  Matrix<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xv(i, j) - mean[j]) * invstd[j];
      xhat(i, j) = h;
      out(i, j) = gm[j] * h + bt[j];
    }
  }
  const bool training = opt.training;
  auto v = Var<T>::make(std::move(out), {x.feats, gamma, beta},
                        [xhat = std::move(xhat), invstd = std::move(invstd), training](Node<T>& nd) {
    const std::size_t rows = xhat.rows();
    const std::size_t cc = xhat.cols();
    const auto& g = nd.parents[1]->value;
    std::vector<T> sum_dy(cc, T(0)), sum_dy_xhat(cc, T(0));
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cc; ++j) {
        sum_dy[j] += nd.grad(i, j);
        sum_dy_xhat[j] += nd.grad(i, j) * xhat(i, j);
      }
    }
    if (auto* gg = grad_of(nd, 1)) {
      for (std::size_t j = 0; j < cc; ++j) (*gg)[j] += sum_dy_xhat[j];
    }
    if (auto* gb = grad_of(nd, 2)) {
      for (std::size_t j = 0; j < cc; ++j) (*gb)[j] += sum_dy[j];
    }
    if (auto* gx = grad_of(nd, 0)) {
      const T inv_n = T(1) / static_cast<T>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cc; ++j) {
          const T dy = nd.grad(i, j) * g[j];
          if (training) {
            const T mdy = g[j] * sum_dy[j] * inv_n;
            const T mdyx = g[j] * sum_dy_xhat[j] * inv_n;
            (*gx)(i, j) += invstd[j] * (dy - mdy - xhat(i, j) * mdyx);
          } else {
            (*gx)(i, j) += invstd[j] * dy;
          }
        }
      }
    }
  }, "batch_norm");
  return {x.geom, std::move(v)};
}

template <class T>
SparseVar<T> relu(const SparseVar<T>& x) {
  return {x.geom, relu(x.feats)};
}

template <class T>
SparseVar<T> add(const SparseVar<T>& a, const SparseVar<T>& b) {
  if (a.channels() != b.channels()) throw ConfigError("sparse add: channel mismatch");
  if (a.geom == b.geom) return {a.geom, add(a.feats, b.feats)};
  auto u = sparse::union_coords(*a.geom, *b.geom);
  const std::size_t c = a.channels();
  Matrix<T> out(u.geom->size(), c);
  for (std::size_t r = 0; r < u.rows_a.size(); ++r) {
    T* o = out.row(u.rows_a[r]);
    const T* s = a.feats.value().row(r);
    for (std::size_t j = 0; j < c; ++j) o[j] += s[j];
  }
  for (std::size_t r = 0; r < u.rows_b.size(); ++r) {
    T* o = out.row(u.rows_b[r]);
    const T* s = b.feats.value().row(r);
    for (std::size_t j = 0; j < c; ++j) o[j] += s[j];
  }
  auto v = Var<T>::make(std::move(out), {a.feats, b.feats},
                        [ra = std::move(u.rows_a), rb = std::move(u.rows_b)](Node<T>& n) {
    const std::size_t cc = n.grad.cols();
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t r = 0; r < ra.size(); ++r) {
        for (std::size_t j = 0; j < cc; ++j) (*g)(r, j) += n.grad(ra[r], j);
      }
    }
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t r = 0; r < rb.size(); ++r) {
        for (std::size_t j = 0; j < cc; ++j) (*g)(r, j) += n.grad(rb[r], j);
      }
    }
  }, "union_add");
  return {u.geom, std::move(v)};
}

template <class T>
SparseVar<T> add_features(const SparseVar<T>& x, const Var<T>& delta) {
  return {x.geom, add(x.feats, delta)};
}

template <class T>
SparseVar<T> gather_rows(const SparseVar<T>& x, std::span<const std::int32_t> rows) {
  std::vector<sparse::Coord4> coords;
  coords.reserve(rows.size());
  const std::size_t c = x.channels();
  Matrix<T> out(rows.size(), c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    coords.push_back(x.geom->coords()[rows[r]]);
    std::copy_n(x.feats.value().row(rows[r]), c, out.row(r));
  }
  auto geom = std::make_shared<const sparse::CoordSet>(std::move(coords), x.geom->stride(), x.geom->voxel_size());
  std::vector<std::int32_t> idx(rows.begin(), rows.end());
  auto v = Var<T>::make(std::move(out), {x.feats}, [idx = std::move(idx)](Node<T>& n) {
    if (auto* g = grad_of(n, 0)) {
      const std::size_t cc = n.grad.cols();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < cc; ++j) (*g)(idx[r], j) += n.grad(r, j);
      }
    }
  }, "gather_rows");
  return {std::move(geom), std::move(v)};
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ConfigError("concat_rows: column mismatch");
    total += p.rows();
  }
  Matrix<T> out(total, c);
  std::size_t r0 = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.row(r0));
    r0 += p.rows();
  }
  return Var<T>::make(std::move(out), parts, [](Node<T>& n) {
    std::size_t base = 0;
    for (std::size_t p = 0; p < n.parents.size(); ++p) {
      const std::size_t len = n.parents[p]->value.size();
      if (auto* g = grad_of(n, p)) {
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += n.grad[base + i];
      }
      base += len;
    }
  }, "concat_rows");
}

#define SDET_INSTANTIATE(T)                                                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> scale(const Var<T>&, T);                                                             \
  template Var<T> neg(const Var<T>&);                                                                  \
  template Var<T> relu(const Var<T>&);                                                                 \
  template Var<T> sum(const Var<T>&);                                                                  \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>*);                                 \
  template SparseVar<T> conv(const SparseVar<T>&, const Var<T>&, const Var<T>*, int, sparse::ConvMode); \
  template SparseVar<T> transposed_conv(const SparseVar<T>&, const Var<T>&, const Var<T>*, int, int);   \
  template SparseVar<T> transposed_conv_onto(const SparseVar<T>&, const sparse::CoordSetPtr&,           \
                                             const Var<T>&, const Var<T>*, int);                        \
  template SparseVar<T> batch_norm(const SparseVar<T>&, const Var<T>&, const Var<T>&, Matrix<T>&,      \
                                   Matrix<T>&, const BatchNormOptions&);                               \
  template SparseVar<T> relu(const SparseVar<T>&);                                                     \
  template SparseVar<T> add(const SparseVar<T>&, const SparseVar<T>&);                                 \
  template SparseVar<T> add_features(const SparseVar<T>&, const Var<T>&);                              \
  template SparseVar<T> gather_rows(const SparseVar<T>&, std::span<const std::int32_t>);               \
  template Var<T> concat_rows(const std::vector<Var<T>>&);

SDET_INSTANTIATE(float)
SDET_INSTANTIATE(double)
#undef SDET_INSTANTIATE

}  // namespace sdet::nn
