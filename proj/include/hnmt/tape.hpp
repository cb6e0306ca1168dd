#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/tensor.hpp"

namespace hnmt {

namespace detail {

// C (m x n) = or += op(A) * op(B), row-major. Loop orders keep the innermost
// stride contiguous for the layouts we actually hit (NN, NT, TN).
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // B is (n x k); C[i,j] = dot(A.row(i), B.row(j))
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    // A is (k x m); C[i,j] += A[p,i] * B[p,j]
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    throw ContractError("gemm: doubly-transposed product not supported");
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// Reverse-mode differentiation record. Primitives compute the forward value
// and, when any input requires a gradient, append a pullback closure. The
// record is strictly append-only, so replaying it in reverse is a valid
// topological order. One tape per thread of execution.
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t recorded_steps() const { return steps_.size(); }

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() > 2 || b.ndim() > 2 || a.cols() != b.rows())
      throw ShapeError("matmul: incompatible shapes " + format_shape(a.shape()) + " and " +
                       format_shape(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = make_out({m, n}, a, b);
    detail::gemm(false, false, m, n, k, a.data(), b.data(), out.data(), false);
    if (out.requires_grad())
      record([a = a, b = b, out = out, m, n, k]() mutable {
        if (!out.has_grad()) return;
        const double* g = out.grad().data();
        if (a.requires_grad()) detail::gemm(false, true, m, k, n, g, b.data(), a.grad().data(), true);
        if (b.requires_grad()) detail::gemm(true, false, k, n, m, a.data(), g, b.grad().data(), true);
      });
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
      throw ShapeError("add: mismatched shapes " + format_shape(a.shape()) + " and " +
                       format_shape(b.shape()));
    Tensor out = make_out(a.shape(), a, b);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    if (out.requires_grad())
      record([a = a, b = b, out = out]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        if (a.requires_grad()) axpy(g, a.grad());
        if (b.requires_grad()) axpy(g, b.grad());
      });
    return out;
  }

  // bias broadcast across columns: out[i,j] = m[i,j] + bias[i]
  Tensor add_bias(const Tensor& m, const Tensor& bias) {
    if (bias.ndim() != 1 || bias.rows() != m.rows())
      throw ShapeError("add_bias: bias " + format_shape(bias.shape()) +
                       " does not match matrix " + format_shape(m.shape()));
    Tensor out = make_out(m.shape(), m, bias);
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i) {
      const double bv = bias.at(i);
      const double* src = m.data() + i * c;
      double* dst = out.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] = src[j] + bv;
    }
    if (out.requires_grad())
      record([m = m, bias = bias, out = out, r, c]() mutable {
        if (!out.has_grad()) return;
        const double* g = out.grad().data();
        if (m.requires_grad()) axpy(out.grad(), m.grad());
        if (bias.requires_grad()) {
          auto& gb = bias.grad();
          for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j];
            gb[i] += acc;
          }
        }
      });
    return out;
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
      throw ShapeError("mul: mismatched shapes " + format_shape(a.shape()) + " and " +
                       format_shape(b.shape()));
    Tensor out = make_out(a.shape(), a, b);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = a.at(i) * b.at(i);
    if (out.requires_grad())
      record([a = a, b = b, out = out]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.at(i);
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.at(i);
        }
      });
    return out;
  }

  Tensor scale(const Tensor& a, double c) {
    Tensor out = make_out(a.shape(), a, a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = a.at(i) * c;
    if (out.requires_grad())
      record([a = a, out = out, c]() mutable {
        if (!out.has_grad() || !a.requires_grad()) return;
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
      });
    return out;
  }

  // concatenation along axis 0; for 2-D inputs the column counts must agree
  Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.ndim() != b.ndim() || a.cols() != b.cols())
      throw ShapeError("concat: incompatible shapes " + format_shape(a.shape()) + " and " +
                       format_shape(b.shape()));
    std::vector<std::size_t> shape = a.shape();
    shape[0] = a.rows() + b.rows();
    Tensor out = make_out(shape, a, b);
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    if (out.requires_grad())
      record([a = a, b = b, out = out]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          const std::size_t off = a.size();
          for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[off + i];
        }
      });
    return out;
  }

  Tensor sigmoid(const Tensor& x) {
    Tensor out = make_out(x.shape(), x, x);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = detail::stable_sigmoid(x.at(i));
    if (out.requires_grad())
      record([x = x, out = out]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = out.at(i);
          gx[i] += g[i] * s * (1.0 - s);
        }
      });
    return out;
  }

  Tensor tanh(const Tensor& x) {
    Tensor out = make_out(x.shape(), x, x);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::tanh(x.at(i));
    if (out.requires_grad())
      record([x = x, out = out]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double t = out.at(i);
          gx[i] += g[i] * (1.0 - t * t);
        }
      });
    return out;
  }

  // row-wise softmax; a 1-D tensor is one row
  Tensor softmax(const Tensor& x) {
    Tensor out = make_out(x.shape(), x, x);
    const std::size_t r = x.ndim() >= 2 ? x.rows() : 1;
    const std::size_t c = x.ndim() >= 2 ? x.cols() : x.size();
    for (std::size_t i = 0; i < r; ++i) softmax_row(x.data() + i * c, out.data() + i * c, c);
    if (out.requires_grad())
      record([x = x, out = out, r, c]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const double* g = out.grad().data();
        const double* s = out.data();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * s[i * c + j];
          for (std::size_t j = 0; j < c; ++j)
            gx[i * c + j] += s[i * c + j] * (g[i * c + j] - dot);
        }
      });
    return out;
  }

  // row slice [r0, r1)
  Tensor rows(const Tensor& x, std::size_t r0, std::size_t r1) {
    if (r0 >= r1 || r1 > x.rows())
      throw ShapeError("rows: slice [" + std::to_string(r0) + ", " + std::to_string(r1) +
                       ") out of range for " + format_shape(x.shape()));
    const std::size_t c = x.cols();
    std::vector<std::size_t> shape = x.shape();
    shape[0] = r1 - r0;
    Tensor out = make_out(shape, x, x);
    std::copy(x.data() + r0 * c, x.data() + r1 * c, out.data());
    if (out.requires_grad())
      record([x = x, out = out, r0, c]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[r0 * c + i] += g[i];
      });
    return out;
  }

  Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose: need 2-D, got " + format_shape(x.shape()));
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = make_out({c, r}, x, x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
    if (out.requires_grad())
      record([x = x, out = out, r, c]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
      });
    return out;
  }

  Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    Tensor out = make_out(shape, x, x);
    if (out.size() != x.size())
      throw ShapeError("reshape: cannot view " + format_shape(x.shape()) + " as " +
                       format_shape(shape));
    std::copy(x.data(), x.data() + x.size(), out.data());
    if (out.requires_grad())
      record([x = x, out = out]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        axpy(out.grad(), x.grad());
      });
    return out;
  }

  // gather: out.row(i) = table.row(ids[i]); the embedding primitive
  Tensor embedding_lookup(const Tensor& table, std::vector<int> ids) {
    check_ids(table, ids);
    const std::size_t d = table.cols();
    Tensor out = make_out({ids.size(), d}, table, table);
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(table.data() + static_cast<std::size_t>(ids[i]) * d,
                table.data() + (static_cast<std::size_t>(ids[i]) + 1) * d, out.data() + i * d);
    if (out.requires_grad())
      record([table = table, out = out, ids = std::move(ids), d]() mutable {
        if (!out.has_grad() || !table.requires_grad()) return;
        const auto& g = out.grad();
        auto& gt = table.grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
          for (std::size_t j = 0; j < d; ++j)
            gt[static_cast<std::size_t>(ids[i]) * d + j] += g[i * d + j];
      });
    return out;
  }

  // gather transposed: out.col(j) = table.row(ids[j]); batch-friendly layout
  Tensor embed_columns(const Tensor& table, std::vector<int> ids) {
    check_ids(table, ids);
    const std::size_t d = table.cols();
    const std::size_t b = ids.size();
    Tensor out = make_out({d, b}, table, table);
    for (std::size_t j = 0; j < b; ++j) {
      const double* row = table.data() + static_cast<std::size_t>(ids[j]) * d;
      for (std::size_t i = 0; i < d; ++i) out.at(i, j) = row[i];
    }
    if (out.requires_grad())
      record([table = table, out = out, ids = std::move(ids), d, b]() mutable {
        if (!out.has_grad() || !table.requires_grad()) return;
        const auto& g = out.grad();
        auto& gt = table.grad();
        for (std::size_t j = 0; j < b; ++j) {
          double* grow = gt.data() + static_cast<std::size_t>(ids[j]) * d;
          for (std::size_t i = 0; i < d; ++i) grow[i] += g[i * b + j];
        }
      });
    return out;
  }

  // per-column select: out[:,j] = keep[j] != 0 ? a[:,j] : b[:,j]
  Tensor col_blend(std::vector<double> keep, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || keep.size() != a.cols())
      throw ShapeError("col_blend: mask size " + std::to_string(keep.size()) +
                       " vs shapes " + format_shape(a.shape()) + " and " +
                       format_shape(b.shape()));
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = make_out(a.shape(), a, b);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.at(i, j) = keep[j] != 0.0 ? a.at(i, j) : b.at(i, j);
    if (out.requires_grad())
      record([a = a, b = b, out = out, keep = std::move(keep), r, c]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double gv = g[i * c + j];
            if (gv == 0.0) continue;
            if (keep[j] != 0.0) {
              if (a.requires_grad()) a.grad()[i * c + j] += gv;
            } else {
              if (b.requires_grad()) b.grad()[i * c + j] += gv;
            }
          }
      });
    return out;
  }

  Tensor sum(const Tensor& x) {
    Tensor out = make_out({1}, x, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
    out.at(0) = acc;
    if (out.requires_grad())
      record([x = x, out = out]() mutable {
        if (!out.has_grad() || !x.requires_grad()) return;
        const double g = out.grad()[0];
        auto& gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
      });
    return out;
  }

  // mean negative log-softmax probability of the targets over non-pad
  // positions; logits are [T, V], targets length T
  Tensor cross_entropy(const Tensor& logits, std::vector<int> targets, int pad_id) {
    if (logits.ndim() != 2 || targets.size() != logits.rows())
      throw ShapeError("cross_entropy: logits " + format_shape(logits.shape()) + " vs " +
                       std::to_string(targets.size()) + " targets");
    const std::size_t t_len = logits.rows(), v = logits.cols();
    std::vector<double> probs(t_len * v);
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      if (targets[t] == pad_id) continue;
      if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= v)
        throw ContractError("cross_entropy: target id " + std::to_string(targets[t]) +
                            " outside vocabulary of size " + std::to_string(v));
      softmax_row(logits.data() + t * v, probs.data() + t * v, v);
      acc -= std::log(std::max(probs[t * v + static_cast<std::size_t>(targets[t])], 1e-300));
      ++counted;
    }
    if (counted == 0) throw DataError("cross_entropy: degenerate all-pad target sequence");
    Tensor out = make_out({1}, logits, logits);
    out.at(0) = acc / static_cast<double>(counted);
    if (out.requires_grad())
      record([logits = logits, out = out, targets = std::move(targets), probs = std::move(probs), pad_id, v,
              counted]() mutable {
        if (!out.has_grad() || !logits.requires_grad()) return;
        const double g = out.grad()[0] / static_cast<double>(counted);
        auto& gl = logits.grad();
        for (std::size_t t = 0; t < targets.size(); ++t) {
          if (targets[t] == pad_id) continue;
          for (std::size_t j = 0; j < v; ++j) gl[t * v + j] += g * probs[t * v + j];
          gl[t * v + static_cast<std::size_t>(targets[t])] -= g;
        }
      });
    return out;
  }

  // summed negative log-likelihood over the non-pad columns of one decoding
  // step; logits are [V, B]. Returns the sum; `counted` reports how many
  // columns contributed so the caller can normalize once per batch.
  Tensor cross_entropy_columns(const Tensor& logits, std::vector<int> targets, int pad_id,
                               std::size_t* counted_out = nullptr) {
    if (logits.ndim() != 2 || targets.size() != logits.cols())
      throw ShapeError("cross_entropy_columns: logits " + format_shape(logits.shape()) + " vs " +
                       std::to_string(targets.size()) + " targets");
    const std::size_t v = logits.rows(), b = logits.cols();
    std::vector<double> probs(v * b, 0.0);
    std::vector<double> col(v);
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t j = 0; j < b; ++j) {
      if (targets[j] == pad_id) continue;
      if (targets[j] < 0 || static_cast<std::size_t>(targets[j]) >= v)
        throw ContractError("cross_entropy_columns: target id " + std::to_string(targets[j]) +
                            " outside vocabulary of size " + std::to_string(v));
      for (std::size_t i = 0; i < v; ++i) col[i] = logits.at(i, j);
      softmax_row(col.data(), col.data(), v);
      for (std::size_t i = 0; i < v; ++i) probs[i * b + j] = col[i];
      acc -= std::log(std::max(col[static_cast<std::size_t>(targets[j])], 1e-300));
      ++counted;
    }
    if (counted_out) *counted_out = counted;
    Tensor out = make_out({1}, logits, logits);
    out.at(0) = acc;
    if (counted > 0 && out.requires_grad())
      record([logits = logits, out = out, targets = std::move(targets), probs = std::move(probs), pad_id, v,
              b]() mutable {
        if (!out.has_grad() || !logits.requires_grad()) return;
        const double g = out.grad()[0];
        auto& gl = logits.grad();
        for (std::size_t j = 0; j < b; ++j) {
          if (targets[j] == pad_id) continue;
          for (std::size_t i = 0; i < v; ++i) gl[i * b + j] += g * probs[i * b + j];
          gl[static_cast<std::size_t>(targets[j]) * b + j] -= g;
        }
      });
    return out;
  }

  // Seeds d(loss)/d(loss) = 1, replays the record in reverse, then clears it.
  // Every requires-grad tensor reachable from the loss ends up with its
  // gradient accumulated in place.
  void backward(const Tensor& loss_in) {
    Tensor loss = loss_in;  // same storage, non-const handle
    if (!loss.defined() || loss.size() != 1)
      throw ContractError("backward: loss must be a defined scalar");
    loss.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

  void clear() { steps_.clear(); }

private:
  bool recording_;
  std::vector<std::function<void()>> steps_;

  void record(std::function<void()> pull) {
    if (recording_) steps_.push_back(std::move(pull));
  }

  Tensor make_out(std::vector<std::size_t> shape, const Tensor& a, const Tensor& b) const {
    Tensor out(std::move(shape));
    if (recording_ && (a.requires_grad() || b.requires_grad())) out.set_requires_grad(true);
    return out;
  }

  static void axpy(const std::vector<double>& g, std::vector<double>& dst) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  static void softmax_row(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - mx);
      z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  }

  static void check_ids(const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2)
      throw ShapeError("embedding table must be 2-D, got " + format_shape(table.shape()));
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary range [0, " +
                            std::to_string(table.rows()) + ")");
  }
};

}  // namespace hnmt
