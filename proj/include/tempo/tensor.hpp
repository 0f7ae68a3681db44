#ifndef TEMPO_TENSOR_HPP
#define TEMPO_TENSOR_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <cblas.h>

#include "tempo/common.hpp"

namespace tempo {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// One value in the define-by-run graph. Nodes are created in topological
// order; backward walks them by descending id.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated only when requires_grad
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t id = next_node_id();
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // pushes this->grad into parents

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-d double tensor with an optional gradient buffer. Value semantics
// over a shared node; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)), v);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& x : d) x = rng.normal(0.0, stddev);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::int64_t size() const { return numel(n_->shape); }
  std::int64_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t ndim() const { return n_->shape.size(); }

  std::vector<double>& data() { return n_->value; }
  const std::vector<double>& data() const { return n_->value; }
  double operator[](std::int64_t i) const { return n_->value[static_cast<std::size_t>(i)]; }

  double item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return n_->value[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  bool is_leaf() const { return n_->leaf; }

  const std::vector<double>& grad() const {
    if (!n_->requires_grad)
      throw ContractError("grad() on tensor with requires_grad == false");
    const_cast<detail::Node*>(n_.get())->ensure_grad();
    return n_->grad;
  }

  void zero_grad() {
    if (n_->requires_grad) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  void set_requires_grad(bool rg) {
    n_->requires_grad = rg;
    if (rg)
      n_->ensure_grad();
    else
      n_->grad.clear();
  }

  // Copy of values with no graph history.
  Tensor detach() const {
    return Tensor::from(n_->shape, n_->value, false);
  }

  detail::NodePtr node() const { return n_; }

 private:
  detail::NodePtr n_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  for (auto& t : inputs) {
    if (t.node()->requires_grad) n->requires_grad = true;
    n->parents.push_back(t.node());
  }
  if (n->requires_grad) {
    n->ensure_grad();
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

inline void accumulate(Node& parent, const std::vector<double>& g) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace detail

// ---- backward -------------------------------------------------------------

// Reverse sweep from a scalar loss. Gradients on leaf tensors accumulate
// across calls until zeroed; interior adjoints are reset per sweep.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Collect reachable nodes.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  for (auto* n : order) {
    if (!n->leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto* n : order) {
    if (n->backprop) n->backprop(*n);
  }
}

// ---- elementwise ----------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    detail::accumulate(*n.parents[0], n.grad);
    detail::accumulate(*n.parents[1], n.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    detail::accumulate(*n.parents[0], n.grad);
    auto& p = *n.parents[1];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto &pa = *n.parents[0], &pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& x : out) x *= c;
  return detail::make_op(a.shape(), std::move(out), {a}, [c](detail::Node& n) {
    auto& p = *n.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    }
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& x : out) x += c;
  return detail::make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    detail::accumulate(*n.parents[0], n.grad);
  });
}

// Trailing-axis broadcast add: a[...xD] + b[D]. The only broadcast form the
// engine supports.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (b.ndim() != 1 || a.ndim() == 0 || a.shape().back() != b.dim(0))
    throw DimensionError("add_rowvec: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  const std::int64_t d = b.dim(0);
  const std::int64_t rows = a.size() / d;
  std::vector<double> out(a.data());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < d; ++j) out[r * d + j] += b.data()[j];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [d, rows](detail::Node& n) {
    detail::accumulate(*n.parents[0], n.grad);
    auto& pb = *n.parents[1];
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < d; ++j) pb.grad[j] += n.grad[r * d + j];
    }
  });
}

// ---- matmul ---------------------------------------------------------------

namespace detail {
inline void dgemm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
                  const double* a, const double* b, double beta, double* c) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c,
              static_cast<int>(n));
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  detail::dgemm(false, false, m, n, k, a.data().data(), b.data().data(), 0.0, out.data());
  return detail::make_op({m, n}, std::move(out), {a, b}, [m, n, k](detail::Node& nd) {
    auto &pa = *nd.parents[0], &pb = *nd.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = g . B^T
      detail::dgemm(false, true, m, k, n, nd.grad.data(), pb.value.data(), 1.0, pa.grad.data());
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T . g
      detail::dgemm(true, false, k, n, m, pa.value.data(), nd.grad.data(), 1.0, pb.grad.data());
    }
  });
}

inline Tensor transpose2d(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose2d: need 2-d tensor, got " + shape_str(a.shape()));
  const std::int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_op({n, m}, std::move(out), {a}, [m, n](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) p.grad[i * n + j] += nd.grad[j * m + i];
    }
  });
}

// ---- reductions -----------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  return detail::make_op({}, {s}, {a}, [](detail::Node& n) {
    auto& p = *n.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (auto& g : p.grad) g += n.grad[0];
    }
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Mean over the leading axis of a [m x n] tensor, producing [n].
inline Tensor mean_rows(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("mean_rows: need 2-d tensor, got " + shape_str(a.shape()));
  const std::int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& x : out) x *= inv;
  return detail::make_op({n}, std::move(out), {a}, [m, n, inv](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) p.grad[i * n + j] += inv * nd.grad[j];
    }
  });
}

// ---- shape ops ------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return detail::make_op(std::move(shape), a.data(), {a}, [](detail::Node& n) {
    detail::accumulate(*n.parents[0], n.grad);
  });
}

inline Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t count) {
  if (a.ndim() != 2) throw DimensionError("slice_rows: need 2-d tensor");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  if (r0 < 0 || count < 1 || r0 + count > m)
    throw DimensionError("slice_rows: rows [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + count) + ") out of " + std::to_string(m));
  std::vector<double> out(a.data().begin() + r0 * n, a.data().begin() + (r0 + count) * n);
  return detail::make_op({count, n}, std::move(out), {a}, [r0, n](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i)
        p.grad[static_cast<std::size_t>(r0 * n) + i] += nd.grad[i];
    }
  });
}

inline Tensor gather_rows(const Tensor& a, std::vector<std::int64_t> rows) {
  if (a.ndim() != 2) throw DimensionError("gather_rows: need 2-d tensor");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  for (auto r : rows)
    if (r < 0 || r >= m)
      throw DimensionError("gather_rows: row " + std::to_string(r) + " out of " +
                           std::to_string(m));
  const std::int64_t k = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(k * n));
  for (std::int64_t i = 0; i < k; ++i)
    std::copy_n(a.data().begin() + rows[static_cast<std::size_t>(i)] * n, n,
                out.begin() + i * n);
  return detail::make_op({k, n}, std::move(out), {a},
                         [rows = std::move(rows), n](detail::Node& nd) {
                           auto& p = *nd.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < rows.size(); ++i)
                             for (std::int64_t j = 0; j < n; ++j)
                               p.grad[static_cast<std::size_t>(rows[i] * n + j)] +=
                                   nd.grad[i * static_cast<std::size_t>(n) +
                                           static_cast<std::size_t>(j)];
                         });
}

inline Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t count) {
  if (a.ndim() != 2) throw DimensionError("slice_cols: need 2-d tensor");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  if (c0 < 0 || count < 1 || c0 + count > n)
    throw DimensionError("slice_cols: cols out of range");
  std::vector<double> out(static_cast<std::size_t>(m * count));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < count; ++j) out[i * count + j] = a.data()[i * n + c0 + j];
  return detail::make_op({m, count}, std::move(out), {a}, [m, n, c0, count](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (p.requires_grad) {
      p.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < count; ++j)
          p.grad[i * n + c0 + j] += nd.grad[i * count + j];
    }
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty input");
  const std::int64_t n = parts[0].ndim() == 2 ? parts[0].dim(1) : -1;
  if (n < 0) throw DimensionError("concat_rows: need 2-d tensors");
  std::int64_t m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(1) != n) throw DimensionError("concat_rows: column mismatch");
    m += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<std::int64_t> row_counts;
  for (const auto& p : parts) row_counts.push_back(p.dim(0));
  return detail::make_op({m, n}, std::move(out), parts, [row_counts, n](detail::Node& nd) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      auto& p = *nd.parents[k];
      const std::int64_t len = row_counts[k] * n;
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::int64_t i = 0; i < len; ++i) p.grad[i] += nd.grad[off + i];
      }
      off += len;
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty input");
  const std::int64_t m = parts[0].ndim() == 2 ? parts[0].dim(0) : -1;
  if (m < 0) throw DimensionError("concat_cols: need 2-d tensors");
  std::int64_t n = 0;
  std::vector<std::int64_t> col_counts;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != m) throw DimensionError("concat_cols: row mismatch");
    n += p.dim(1);
    col_counts.push_back(p.dim(1));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  std::int64_t coff = 0;
  for (const auto& p : parts) {
    const std::int64_t pc = p.dim(1);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < pc; ++j) out[i * n + coff + j] = p.data()[i * pc + j];
    coff += pc;
  }
  return detail::make_op({m, n}, std::move(out), parts, [col_counts, m, n](detail::Node& nd) {
    std::int64_t coff2 = 0;
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      auto& p = *nd.parents[k];
      const std::int64_t pc = col_counts[k];
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < pc; ++j) p.grad[i * pc + j] += nd.grad[i * n + coff2 + j];
      }
      coff2 += pc;
    }
  });
}

}  // namespace tempo

#endif  // TEMPO_TENSOR_HPP
