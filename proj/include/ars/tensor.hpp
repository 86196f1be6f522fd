#ifndef ARS_TENSOR_HPP
#define ARS_TENSOR_HPP

// Minimal dense-tensor arithmetic with reverse-mode differentiation on a
// dynamic (define-by-run) tape. Tensors are 1-D or 2-D row-major buffers;
// the batch dimension comes first. A tape and its tensors belong to one
// worker at a time; tensors with no active tape are immutable and shareable.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "ars/common.hpp"

namespace ars {

template <class T>
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;  // lazily allocated, same size as v
    bool rg = false;   // participates in backward
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor make(std::vector<int> shape, std::vector<T> values,
                     bool requires_grad = false) {
    std::size_t expect = 1;
    for (int d : shape) {
      if (d <= 0) throw DimError("tensor: nonpositive dimension");
      expect *= static_cast<std::size_t>(d);
    }
    if (expect != values.size())
      throw DimError("tensor: shape/value size mismatch");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->v = std::move(values);
    n->rg = requires_grad;
    return Tensor(n);
  }
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    std::size_t sz = 1;
    for (int d : shape) sz *= static_cast<std::size_t>(d);
    return make(std::move(shape), std::vector<T>(sz, T(0)), requires_grad);
  }
  static Tensor full(std::vector<int> shape, T value) {
    std::size_t sz = 1;
    for (int d : shape) sz *= static_cast<std::size_t>(d);
    return make(std::move(shape), std::vector<T>(sz, value));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  std::vector<T>& values() const { return n_->v; }
  std::vector<T>& grad() const { return n_->g; }
  bool requires_grad() const { return n_->rg; }
  void set_requires_grad(bool b) const { n_->rg = b; }
  std::size_t numel() const { return n_->v.size(); }

  int rows() const { return n_->shape.size() == 2 ? n_->shape[0] : 1; }
  int cols() const { return n_->shape.back(); }

  T item() const {
    if (numel() != 1) throw ContractError("item: tensor is not scalar");
    return n_->v[0];
  }
  void ensure_grad() const {
    if (n_->g.size() != n_->v.size()) n_->g.assign(n_->v.size(), T(0));
  }
  void zero_grad() const { n_->g.clear(); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < n_->shape.size(); ++i)
      os << (i ? "," : "") << n_->shape[i];
    os << "]";
    return os.str();
  }
  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

template <class T>
class Tape {
 public:
  void record(std::function<void()> op) { ops_.push_back(std::move(op)); }

  // Seeds d(loss)/d(loss)=1 and replays the tape in reverse. Every
  // requires_grad tensor that contributed to the loss ends up with a
  // populated grad; repeated uses accumulate additively.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss is not scalar");
    if (done_) throw ContractError("backward: tape already consumed");
    done_ = true;
    loss.ensure_grad();
    loss.grad()[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  std::size_t size() const { return ops_.size(); }

  static Tape*& current() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

  // RAII activation; tapes never nest.
  struct Scope {
    explicit Scope(Tape& t) {
      prev_ = current();
      current() = &t;
    }
    ~Scope() { current() = prev_; }
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> ops_;
  bool done_ = false;
};

namespace detail {

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
#ifndef NDEBUG
  for (T x : t.values())
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string(op) + ": non-finite output");
#else
  (void)t;
  (void)op;
#endif
}

// Marks the output and records the backward closure when a tape is active
// and any input wants gradients.
template <class T>
void trace(bool any_rg, const Tensor<T>& out, std::function<void()> bwd) {
  auto* tape = Tape<T>::current();
  if (!tape || !any_rg) return;
  out.set_requires_grad(true);
  out.ensure_grad();
  tape->record(std::move(bwd));
}

template <class T>
bool rg(const Tensor<T>& t) {
  return Tape<T>::current() && t.requires_grad();
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimError("add: shape mismatch " + a.shape_str() + " vs " +
                   b.shape_str());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  detail::check_finite(out, "add");
  detail::trace<T>(detail::rg(a) || detail::rg(b), out, [a, b, out] {
    if (a.requires_grad()) {
      a.ensure_grad();
      for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += out.grad()[i];
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      for (std::size_t i = 0; i < b.numel(); ++i) b.grad()[i] += out.grad()[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimError("sub: shape mismatch " + a.shape_str() + " vs " +
                   b.shape_str());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  detail::trace<T>(detail::rg(a) || detail::rg(b), out, [a, b, out] {
    if (a.requires_grad()) {
      a.ensure_grad();
      for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += out.grad()[i];
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      for (std::size_t i = 0; i < b.numel(); ++i) b.grad()[i] -= out.grad()[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimError("mul: shape mismatch " + a.shape_str() + " vs " +
                   b.shape_str());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  detail::check_finite(out, "mul");
  detail::trace<T>(detail::rg(a) || detail::rg(b), out, [a, b, out] {
    if (a.requires_grad()) {
      a.ensure_grad();
      for (std::size_t i = 0; i < a.numel(); ++i)
        a.grad()[i] += out.grad()[i] * b.values()[i];
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      for (std::size_t i = 0; i < b.numel(); ++i)
        b.grad()[i] += out.grad()[i] * a.values()[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = c * a.values()[i];
  detail::trace<T>(detail::rg(a), out, [a, c, out] {
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i)
      a.grad()[i] += c * out.grad()[i];
  });
  return out;
}

template <class T>
Tensor<T> one_minus(const Tensor<T>& a) {
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.values()[i] = T(1) - a.values()[i];
  detail::trace<T>(detail::rg(a), out, [a, out] {
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] -= out.grad()[i];
  });
  return out;
}

// x:[r,c] + b:[1,c], broadcast over rows
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.cols() != b.cols() || b.rows() != 1)
    throw DimError("add_bias: shape mismatch " + x.shape_str() + " vs " +
                   b.shape_str());
  const int r = x.rows(), c = x.cols();
  auto out = Tensor<T>::zeros(x.shape());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.values()[i * c + j] = x.values()[i * c + j] + b.values()[j];
  detail::trace<T>(detail::rg(x) || detail::rg(b), out, [x, b, out, r, c] {
    if (x.requires_grad()) {
      x.ensure_grad();
      for (std::size_t i = 0; i < x.numel(); ++i) x.grad()[i] += out.grad()[i];
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) b.grad()[j] += out.grad()[i * c + j];
    }
  });
  return out;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() > 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw DimError("matmul: incompatible shapes " + a.shape_str() + " x " +
                   b.shape_str());
  const int r = a.rows(), k = a.cols(), c = b.cols();
  auto out = Tensor<T>::zeros(a.shape().size() == 1 ? std::vector<int>{c}
                                                    : std::vector<int>{r, c});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* ov = out.values().data();
  for (int i = 0; i < r; ++i)
    for (int p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = bv + p * c;
      T* orow = ov + i * c;
      for (int j = 0; j < c; ++j) orow[j] += aip * brow[j];
    }
  detail::check_finite(out, "matmul");
  detail::trace<T>(detail::rg(a) || detail::rg(b), out, [a, b, out, r, k, c] {
    const T* og = out.grad().data();
    if (a.requires_grad()) {
      a.ensure_grad();
      const T* bv = b.values().data();
      T* ag = a.grad().data();
      for (int i = 0; i < r; ++i)
        for (int p = 0; p < k; ++p) {
          T acc = T(0);
          const T* brow = bv + p * c;
          const T* orow = og + i * c;
          for (int j = 0; j < c; ++j) acc += orow[j] * brow[j];
          ag[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      const T* av = a.values().data();
      T* bg = b.grad().data();
      for (int i = 0; i < r; ++i)
        for (int p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          if (aip == T(0)) continue;
          T* brow = bg + p * c;
          const T* orow = og + i * c;
          for (int j = 0; j < c; ++j) brow[j] += aip * orow[j];
        }
    }
  });
  return out;
}

template <class T>
Tensor<T> tanh_(const Tensor<T>& a) {
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.values()[i] = std::tanh(a.values()[i]);
  detail::trace<T>(detail::rg(a), out, [a, out] {
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const T y = out.values()[i];
      a.grad()[i] += out.grad()[i] * (T(1) - y * y);
    }
  });
  return out;
}

template <class T>
Tensor<T> sigmoid_(const Tensor<T>& a) {
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T x = a.values()[i];
    out.values()[i] =
        x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                  : std::exp(x) / (T(1) + std::exp(x));
  }
  detail::trace<T>(detail::rg(a), out, [a, out] {
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const T y = out.values()[i];
      a.grad()[i] += out.grad()[i] * y * (T(1) - y);
    }
  });
  return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimError("concat: empty input list");
  const int r = xs[0].rows();
  int total = 0;
  bool any = false;
  for (const auto& x : xs) {
    if (x.rows() != r) throw DimError("concat: row mismatch");
    total += x.cols();
    any = any || detail::rg(x);
  }
  auto out = Tensor<T>::zeros({r, total});
  int off = 0;
  for (const auto& x : xs) {
    const int c = x.cols();
    for (int i = 0; i < r; ++i)
      std::copy_n(x.values().data() + i * c, c,
                  out.values().data() + i * total + off);
    off += c;
  }
  detail::trace<T>(any, out, [xs, out, r, total] {
    int off = 0;
    for (const auto& x : xs) {
      const int c = x.cols();
      if (x.requires_grad()) {
        x.ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            x.grad()[i * c + j] += out.grad()[i * total + off + j];
      }
      off += c;
    }
  });
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
  if (start < 0 || len <= 0 || start + len > x.cols())
    throw DimError("slice: range out of bounds for " + x.shape_str());
  const int r = x.rows(), c = x.cols();
  auto out = Tensor<T>::zeros({r, len});
  for (int i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + start, len,
                out.values().data() + i * len);
  detail::trace<T>(detail::rg(x), out, [x, out, start, len, r, c] {
    x.ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < len; ++j)
        x.grad()[i * c + start + j] += out.grad()[i * len + j];
  });
  return out;
}

// Row-wise softmax with max-subtraction. Optional 0/1 mask of the same
// shape; masked entries get weight 0 and the row normalizes over the rest.
template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, const Tensor<T>& mask = {}) {
  const int r = x.rows(), c = x.cols();
  if (mask.defined() && mask.shape() != x.shape())
    throw DimError("softmax: mask shape mismatch");
  auto out = Tensor<T>::zeros(x.shape());
  for (int i = 0; i < r; ++i) {
    const T* xr = x.values().data() + i * c;
    const T* mr = mask.defined() ? mask.values().data() + i * c : nullptr;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < c; ++j)
      if (!mr || mr[j] != T(0)) mx = std::max(mx, xr[j]);
    if (!std::isfinite(static_cast<double>(mx)))
      throw ContractError("softmax: all positions masked in row");
    T z = T(0);
    T* orow = out.values().data() + i * c;
    for (int j = 0; j < c; ++j) {
      orow[j] = (!mr || mr[j] != T(0)) ? std::exp(xr[j] - mx) : T(0);
      z += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= z;
  }
  detail::trace<T>(detail::rg(x), out, [x, out, r, c] {
    x.ensure_grad();
    for (int i = 0; i < r; ++i) {
      const T* y = out.values().data() + i * c;
      const T* gy = out.grad().data() + i * c;
      T dot = T(0);
      for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (int j = 0; j < c; ++j)
        x.grad()[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

template <class T>
Tensor<T> log_softmax_lastdim(const Tensor<T>& x) {
  const int r = x.rows(), c = x.cols();
  auto out = Tensor<T>::zeros(x.shape());
  for (int i = 0; i < r; ++i) {
    const T* xr = x.values().data() + i * c;
    T mx = *std::max_element(xr, xr + c);
    T z = T(0);
    for (int j = 0; j < c; ++j) z += std::exp(xr[j] - mx);
    const T lz = std::log(z) + mx;
    for (int j = 0; j < c; ++j) out.values()[i * c + j] = xr[j] - lz;
  }
  detail::trace<T>(detail::rg(x), out, [x, out, r, c] {
    x.ensure_grad();
    for (int i = 0; i < r; ++i) {
      const T* l = out.values().data() + i * c;
      const T* gy = out.grad().data() + i * c;
      T gsum = T(0);
      for (int j = 0; j < c; ++j) gsum += gy[j];
      for (int j = 0; j < c; ++j)
        x.grad()[i * c + j] += gy[j] - std::exp(l[j]) * gsum;
    }
  });
  return out;
}

// table:[V,e], ids length B -> [B,e]
template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2)
    throw DimError("embedding: table must be 2-D");
  const int V = table.rows(), e = table.cols();
  for (int id : ids)
    if (id < 0 || id >= V)
      throw InputError("embedding: id " + std::to_string(id) +
                       " out of range 0.." + std::to_string(V - 1));
  auto out = Tensor<T>::zeros({static_cast<int>(ids.size()), e});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.values().data() + ids[i] * e, e,
                out.values().data() + i * e);
  detail::trace<T>(detail::rg(table), out, [table, ids, out, e] {
    table.ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < e; ++j)
        table.grad()[ids[i] * e + j] += out.grad()[i * e + j];
  });
  return out;
}

// [r,c] -> [r,1] mean over the last dimension
template <class T>
Tensor<T> mean_lastdim(const Tensor<T>& x) {
  const int r = x.rows(), c = x.cols();
  auto out = Tensor<T>::zeros({r, 1});
  for (int i = 0; i < r; ++i) {
    T s = T(0);
    for (int j = 0; j < c; ++j) s += x.values()[i * c + j];
    out.values()[i] = s / T(c);
  }
  detail::trace<T>(detail::rg(x), out, [x, out, r, c] {
    x.ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        x.grad()[i * c + j] += out.grad()[i] / T(c);
  });
  return out;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros({1});
  out.values()[0] =
      std::accumulate(x.values().begin(), x.values().end(), T(0));
  detail::trace<T>(detail::rg(x), out, [x, out] {
    x.ensure_grad();
    for (std::size_t i = 0; i < x.numel(); ++i) x.grad()[i] += out.grad()[0];
  });
  return out;
}

// x:[r,c], ids length r -> [r,1], out[i] = x[i, ids[i]]
template <class T>
Tensor<T> pick(const Tensor<T>& x, const std::vector<int>& ids) {
  const int r = x.rows(), c = x.cols();
  if (static_cast<int>(ids.size()) != r)
    throw DimError("pick: id count != rows");
  for (int id : ids)
    if (id < 0 || id >= c) throw InputError("pick: id out of range");
  auto out = Tensor<T>::zeros({r, 1});
  for (int i = 0; i < r; ++i) out.values()[i] = x.values()[i * c + ids[i]];
  detail::trace<T>(detail::rg(x), out, [x, ids, out, c] {
    x.ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      x.grad()[i * c + ids[i]] += out.grad()[i];
  });
  return out;
}

// a:[r,1] broadcast-multiplied over the columns of x:[r,c]
template <class T>
Tensor<T> cmul_bcast(const Tensor<T>& a, const Tensor<T>& x) {
  const int r = x.rows(), c = x.cols();
  if (a.rows() != r || a.cols() != 1)
    throw DimError("cmul_bcast: expected [rows,1] scale, got " + a.shape_str());
  auto out = Tensor<T>::zeros(x.shape());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.values()[i * c + j] = a.values()[i] * x.values()[i * c + j];
  detail::trace<T>(detail::rg(a) || detail::rg(x), out, [a, x, out, r, c] {
    if (a.requires_grad()) {
      a.ensure_grad();
      for (int i = 0; i < r; ++i) {
        T acc = T(0);
        for (int j = 0; j < c; ++j)
          acc += out.grad()[i * c + j] * x.values()[i * c + j];
        a.grad()[i] += acc;
      }
    }
    if (x.requires_grad()) {
      x.ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          x.grad()[i * c + j] += out.grad()[i * c + j] * a.values()[i];
    }
  });
  return out;
}

// Central-difference validation of reverse-mode gradients. f maps a tensor
// to a scalar tensor built from the primitives above. Returns the max over
// coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Meaningful only in double precision.
inline double finite_difference_check(
    const std::function<Tensor<double>(const Tensor<double>&)>& f,
    const Tensor<double>& point, double step) {
  Tensor<double> p = Tensor<double>::make(point.shape(), point.values(), true);
  Tape<double> tape;
  {
    typename Tape<double>::Scope scope(tape);
    auto loss = f(p);
    if (loss.numel() != 1) throw ContractError("finite_difference_check: f is not scalar");
    if (!std::isfinite(loss.item())) throw NumericError("finite_difference_check: non-finite f");
    tape.backward(loss);
  }
  p.ensure_grad();
  double worst = 0;
  Tensor<double> q = Tensor<double>::make(point.shape(), point.values());
  for (std::size_t i = 0; i < q.numel(); ++i) {
    const double x0 = q.values()[i];
    q.values()[i] = x0 + step;
    const double fp = f(q).item();
    q.values()[i] = x0 - step;
    const double fm = f(q).item();
    q.values()[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_check: non-finite f");
    const double numeric = (fp - fm) / (2 * step);
    const double analytic = p.grad()[i];
    const double denom =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace ars

#endif
