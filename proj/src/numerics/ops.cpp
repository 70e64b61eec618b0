#include "sfat/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sfat/errors.hpp"

namespace sfat {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
bool tracked(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Wraps freshly computed values into a result tensor, attaching the backward
// closure only when some input is tracked.
template <typename T, typename Fn>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs, Fn&& fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (tracked<T>(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (auto* t : inputs) node.parents.push_back(t->node());
    node.backward = std::forward<Fn>(fn);
  }
  return out;
}

template <typename T>
std::vector<T>* grad_of(const NodePtr<T>& n) {
  return n->requires_grad ? &n->ensure_grad() : nullptr;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_2d(const Tensor<T>& t, const char* op) {
  require(t.ndim() == 2, std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](detail::Node<T>& o) {
    if (auto* ga = grad_of(an)) gemm_nt(o.grad.data(), bn->data.data(), ga->data(), m, n, k);
    if (auto* gb = grad_of(bn)) gemm_tn(an->data.data(), o.grad.data(), gb->data(), m, k, n);
  });
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d(a, "matmul_bt");
  require_2d(b, "matmul_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_bt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<T> out(m * n, T(0));
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](detail::Node<T>& o) {
    // out = a b^T: da = dout b, db = dout^T a
    if (auto* ga = grad_of(an)) gemm_nn(o.grad.data(), bn->data.data(), ga->data(), m, n, k);
    if (auto* gb = grad_of(bn)) gemm_tn(o.grad.data(), an->data.data(), gb->data(), m, n, k);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  auto src = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  auto an = a.node();
  return make_result<T>({c, r}, std::move(out), {&a}, [an, r, c](detail::Node<T>& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "add: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](detail::Node<T>& o) {
    for (auto* g : {grad_of(an), grad_of(bn)})
      if (g)
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias) {
  const std::size_t r = a.rows(), c = a.cols();
  require(bias.numel() == c, "add_row: bias of shape " + shape_str(bias.shape()) +
                                 " does not match rows of " + shape_str(a.shape()));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bd[j];
  auto an = a.node(), bn = bias.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &bias}, [an, bn, r, c](detail::Node<T>& o) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
    if (auto* gb = grad_of(bn))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += o.grad[i * c + j];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "mul: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](detail::Node<T>& o) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i] * bn->data[i];
    if (auto* gb = grad_of(bn))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += o.grad[i] * an->data[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {&a}, [an, factor](detail::Node<T>& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  // tanh approximation
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const T x = ad[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(kC * (x + kA * x * x * x)));
  }
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {&a}, [an](detail::Node<T>& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const T x = an->data[i];
      const T u = kC * (x + kA * x * x * x);
      const T th = std::tanh(u);
      const T du = kC * (T(1) + T(3) * kA * x * x);
      const T d = T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
      g[i] += o.grad[i] * d;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  auto an = a.node();
  return make_result<T>({}, {s}, {&a}, [an](detail::Node<T>& o) {
    auto& g = an->ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  require(a.numel() > 0, "mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return make_result<T>(std::move(shape), std::move(out), {&a}, [an](detail::Node<T>& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t n = x.rows(), d = x.cols();
  require(d >= 1, "layer_norm: zero-width rows");
  require(gain.numel() == d && bias.numel() == d,
          "layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
              " do not match width " + std::to_string(d));
  auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<T> out(n * d), xhat(n * d), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xd.data() + i * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gd[j] + bd[j];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &bias},
                        [xn, gn, bn, n, d, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](detail::Node<T>& o) {
                          auto* gx = grad_of(xn);
                          auto* gg = grad_of(gn);
                          auto* gb = grad_of(bn);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T* dy = o.grad.data() + i * d;
                            const T* xh = xhat.data() + i * d;
                            if (gg)
                              for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[j] * xh[j];
                            if (gb)
                              for (std::size_t j = 0; j < d; ++j) (*gb)[j] += dy[j];
                            if (!gx) continue;
                            T s1 = T(0), s2 = T(0);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T g = dy[j] * gn->data[j];
                              s1 += g;
                              s2 += g * xh[j];
                            }
                            const T inv_d = T(1) / static_cast<T>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T g = dy[j] * gn->data[j];
                              (*gx)[i * d + j] += inv_std[i] * (g - inv_d * s1 - xh[j] * inv_d * s2);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, std::span<const std::uint8_t> keep, T factor) {
  const std::size_t r = x.rows(), c = x.cols();
  require(c >= 1, "softmax: empty input");
  require(keep.empty() || keep.size() == r * c, "softmax: mask size does not match input");
  auto xd = x.data();
  std::vector<T> out(r * c, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (keep.empty() || keep[i * c + j]) mx = std::max(mx, factor * xd[i * c + j]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // nothing admissible
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      if (!keep.empty() && !keep[i * c + j]) continue;
      out[i * c + j] = std::exp(factor * xd[i * c + j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, r, c, factor](detail::Node<T>& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const T* y = o.data.data() + i * c;
      const T* dy = o.grad.data() + i * c;
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += factor * y[j] * (dy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> softmax_with_temperature(const Tensor<T>& scores, T epsilon) {
  if (!(epsilon > T(0))) {
    throw ParameterError("softmax_with_temperature: epsilon must be positive, got " +
                         std::to_string(epsilon));
  }
  if (scores.numel() == 0) throw DimensionError("softmax_with_temperature: empty input");
  require(scores.ndim() == 1, "softmax_with_temperature: expected a 1-D score vector, got " +
                                  shape_str(scores.shape()));
  return softmax_rows(scores, {}, T(1) / epsilon);
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  const std::size_t r = x.rows(), c = x.cols();
  require(c >= 1, "log_softmax: empty input");
  auto xd = x.data();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = xd.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lz;
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, r, c](detail::Node<T>& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      T s = T(0);
      for (std::size_t j = 0; j < c; ++j) s += o.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += o.grad[i * c + j] - std::exp(o.data[i * c + j]) * s;
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets,
                        TokenId ignore_id) {
  require_2d(logits, "cross_entropy");
  const std::size_t n = logits.rows(), v = logits.cols();
  require(targets.size() == n, "cross_entropy: " + std::to_string(targets.size()) +
                                   " targets for " + std::to_string(n) + " rows");
  std::size_t kept = 0;
  for (auto t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(v));
    }
    ++kept;
  }
  if (kept == 0) throw ContractError("cross_entropy: every position is ignored, loss undefined");

  auto xd = logits.data();
  std::vector<T> probs(n * v, T(0));
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore_id) continue;
    const T* row = xd.data() + i * v;
    const T mx = *std::max_element(row, row + v);
    T z = T(0);
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - mx);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    loss -= row[targets[i]] - mx - std::log(z);
  }
  const T inv = T(1) / static_cast<T>(kept);
  loss *= inv;
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  auto ln = logits.node();
  return make_result<T>({}, {loss}, {&logits},
                        [ln, n, v, inv, ignore_id, tgt = std::move(tgt),
                         probs = std::move(probs)](detail::Node<T>& o) {
                          auto& g = ln->ensure_grad();
                          const T scale_factor = o.grad[0] * inv;
                          for (std::size_t i = 0; i < n; ++i) {
                            if (tgt[i] == ignore_id) continue;
                            for (std::size_t j = 0; j < v; ++j)
                              g[i * v + j] += scale_factor * probs[i * v + j];
                            g[i * v + static_cast<std::size_t>(tgt[i])] -= scale_factor;
                          }
                        });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids) {
  require_2d(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols(), n = ids.size();
  std::vector<T> out(n * d);
  auto td = table.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<TokenId> idv(ids.begin(), ids.end());
  auto tn = table.node();
  return make_result<T>({n, d}, std::move(out), {&table},
                        [tn, d, idv = std::move(idv)](detail::Node<T>& o) {
                          auto& g = tn->ensure_grad();
                          for (std::size_t i = 0; i < idv.size(); ++i) {
                            T* dst = g.data() + static_cast<std::size_t>(idv[i]) * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += o.grad[i * d + j];
                          }
                        });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_rows");
  const std::size_t c = x.cols();
  require(start + count <= x.rows(), "slice_rows: range out of bounds for " + shape_str(x.shape()));
  auto xd = x.data();
  std::vector<T> out(xd.begin() + start * c, xd.begin() + (start + count) * c);
  auto xn = x.node();
  return make_result<T>({count, c}, std::move(out), {&x}, [xn, start, c](detail::Node<T>& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[start * c + i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  require(start + count <= c, "slice_cols: range out of bounds for " + shape_str(x.shape()));
  auto xd = x.data();
  std::vector<T> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xd.data() + i * c + start, count, out.data() + i * count);
  auto xn = x.node();
  return make_result<T>({r, count}, std::move(out), {&x},
                        [xn, r, c, start, count](detail::Node<T>& o) {
                          auto& g = xn->ensure_grad();
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < count; ++j)
                              g[i * c + start + j] += o.grad[i * count + j];
                        });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require(p.cols() == c, "concat_rows: width mismatch");
    r += p.rows();
  }
  std::vector<T> out;
  out.reserve(r * c);
  bool any = false;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    any = any || p.requires_grad();
  }
  Tensor<T> result({r, c}, std::move(out));
  if (grad_enabled() && any) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts) node.parents.push_back(p.node());
    node.backward = [](detail::Node<T>& o) {
      std::size_t offset = 0;
      for (auto& p : o.parents) {
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[offset + i];
        }
        offset += p->data.size();
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  bool any = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    require(p.rows() == r, "concat_cols: height mismatch");
    c += p.cols();
    any = any || p.requires_grad();
  }
  std::vector<T> out(r * c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    auto pd = p.data();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(pd.data() + i * pc, pc, out.data() + i * c + offset);
    offset += pc;
  }
  Tensor<T> result({r, c}, std::move(out));
  if (grad_enabled() && any) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts) node.parents.push_back(p.node());
    node.backward = [r, c](detail::Node<T>& o) {
      std::size_t off = 0;
      for (auto& p : o.parents) {
        const std::size_t pc = p->shape[1];
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += o.grad[i * c + off + j];
        }
        off += pc;
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T tiny) {
  const std::size_t r = x.rows(), c = x.cols();
  auto xd = x.data();
  std::vector<T> out(r * c), norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    T ss = T(0);
    for (std::size_t j = 0; j < c; ++j) ss += xd[i * c + j] * xd[i * c + j];
    norms[i] = std::sqrt(ss + tiny);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xd[i * c + j] / norms[i];
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x},
                        [xn, r, c, norms = std::move(norms)](detail::Node<T>& o) {
                          auto& g = xn->ensure_grad();
                          for (std::size_t i = 0; i < r; ++i) {
                            const T* y = o.data.data() + i * c;
                            const T* dy = o.grad.data() + i * c;
                            T dot = T(0);
                            for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
                            for (std::size_t j = 0; j < c; ++j)
                              g[i * c + j] += (dy[j] - y[j] * dot) / norms[i];
                          }
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw ParameterError("dropout: rate must be in [0, 1)");
  std::bernoulli_distribution keep(1.0 - rate);
  const T inv = T(1) / static_cast<T>(1.0 - rate);
  std::vector<T> m(x.numel());
  for (auto& v : m) v = keep(*rng) ? inv : T(0);
  return mul(x, Tensor<T>(x.shape(), std::move(m)));
}

#define SFAT_INSTANTIATE_OPS(T)                                                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_bt(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> softmax_rows(const Tensor<T>&, std::span<const std::uint8_t>, T);         \
  template Tensor<T> softmax_with_temperature(const Tensor<T>&, T);                            \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                       \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>, TokenId);       \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>);                    \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                   \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64*);

SFAT_INSTANTIATE_OPS(float)
SFAT_INSTANTIATE_OPS(double)

}  // namespace sfat
