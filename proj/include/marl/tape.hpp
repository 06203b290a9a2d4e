#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "marl/common.hpp"
#include "marl/parallel.hpp"
#include "marl/scratch.hpp"
#include "marl/tensor.hpp"

namespace marl {

// Reverse-mode tape over dense tensors. A Tape owns every intermediate value
// of one forward pass; backward() replays the recorded nodes in reverse,
// visiting each exactly once. Single-owner, single-threaded object (kernels
// may fan work out internally, but two tapes never share state).
//
// Gradients are allocated lazily by backward(); a tape used only for
// inference costs no gradient memory.
template <typename T>
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  size_t size() const { return nodes_.size(); }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Tensor<T>& grad(Var v) const {
    MARL_CHECK(!node(v).grad.data.empty(), "gradient not computed; call backward() first");
    return node(v).grad;
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  Var leaf(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Checkpoint/rewind: drops every node recorded after the mark. Lets an
  // inference loop bind parameters once and reuse them across many small
  // forward passes.
  size_t mark() const { return nodes_.size(); }
  void rewind(size_t m) {
    MARL_CHECK(m <= nodes_.size(), "rewind past the end of the tape");
    nodes_.resize(m);
  }

  // ---- primitive kernels ------------------------------------------------

  // [m,k] x [k,n] -> [m,n]
  Var matmul(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0),
               "matmul shape mismatch: ", shape_str(A.shape), " x ", shape_str(B.shape));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    gemm_acc(A.ptr(), B.ptr(), out.ptr(), m, k, n);
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y, m, k, n] {
        const T* dY = node(y).grad.ptr();
        const T* Ap = node(a).value.ptr();
        const T* Bp = node(b).value.ptr();
        if (node(a).requires_grad) {
          T* dA = node(a).grad.ptr();
          // dA[i,kk] += dot(dY[i,:], B[kk,:])
          parallel_for(m, 2 * k * n, [&](int64_t i) {
            const T* dy = dY + i * n;
            for (int kk = 0; kk < k; ++kk)
              dA[i * k + kk] += dotv(dy, Bp + size_t(kk) * n, n);
          });
        }
        if (node(b).requires_grad) {
          T* dB = node(b).grad.ptr();
          // dB[kk,:] += sum_i A[i,kk] * dY[i,:], streaming A row-major once.
          parallel_chunks(k, 2 * m * n, [&](int64_t lo, int64_t hi) {
            for (int i = 0; i < m; ++i) {
              const T* ar = Ap + size_t(i) * k;
              const T* dy = dY + size_t(i) * n;
              for (int64_t kk = lo; kk < hi; ++kk) {
                const T av = ar[kk];
                if (av == T(0)) continue;
                T* db = dB + kk * n;
                for (int j = 0; j < n; ++j) db[j] += av * dy[j];
              }
            }
          });
        }
      };
    }
    return y;
  }

  // [m,k] x [n,k]^T -> [m,n]
  Var matmul_nt(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1),
               "matmul_nt shape mismatch: ", shape_str(A.shape), " x ", shape_str(B.shape));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(0);
    Tensor<T> out({m, n});
    gemm_nt(A.ptr(), B.ptr(), out.ptr(), m, k, n);
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y, m, k, n] {
        const T* dY = node(y).grad.ptr();
        const T* Ap = node(a).value.ptr();
        const T* Bp = node(b).value.ptr();
        if (node(a).requires_grad) {
          T* dA = node(a).grad.ptr();
          // dA[i,:] += sum_j dY[i,j] * B[j,:]
          parallel_for(m, 2 * k * n, [&](int64_t i) {
            T* da = dA + i * k;
            for (int j = 0; j < n; ++j) {
              const T g = dY[i * n + j];
              const T* br = Bp + size_t(j) * k;
              for (int kk = 0; kk < k; ++kk) da[kk] += g * br[kk];
            }
          });
        }
        if (node(b).requires_grad) {
          T* dB = node(b).grad.ptr();
          // dB[j,:] += sum_i dY[i,j] * A[i,:]
          parallel_for(n, 2 * m * k, [&](int64_t j) {
            T* db = dB + j * k;
            for (int i = 0; i < m; ++i) {
              const T g = dY[size_t(i) * n + j];
              const T* ar = Ap + size_t(i) * k;
              for (int kk = 0; kk < k; ++kk) db[kk] += g * ar[kk];
            }
          });
        }
      };
    }
    return y;
  }

  // Same-padded stride-1 2-D convolution with bias.
  // x [B,Cin,H,W], w [Cout,Cin,kh,kw] (kh,kw odd), b [Cout] -> [B,Cout,H,W]
  Var conv2d(Var x, Var w, Var b) {
    const Tensor<T>& X = value(x);
    const Tensor<T>& W = value(w);
    const Tensor<T>& Bv = value(b);
    MARL_CHECK(X.rank() == 4 && W.rank() == 4 && Bv.rank() == 1,
               "conv2d expects x[B,C,H,W], w[Co,Ci,kh,kw], b[Co]; got ",
               shape_str(X.shape), " ", shape_str(W.shape), " ", shape_str(Bv.shape));
    MARL_CHECK(X.dim(1) == W.dim(1) && W.dim(0) == Bv.dim(0),
               "conv2d channel mismatch: ", shape_str(X.shape), " vs ", shape_str(W.shape));
    MARL_CHECK(W.dim(2) % 2 == 1 && W.dim(3) % 2 == 1, "conv2d kernel must be odd-sized");
    const int batch = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
    const int cout = W.dim(0), kh = W.dim(2), kw = W.dim(3);
    const int hw = h * wd, ck = cin * kh * kw;

    // ck-major im2col buffer (one contiguous H*W row per kernel tap); the
    // backward closure keeps it alive, inference lets it go after the call.
    auto col = detail::make_scratch<T>(size_t(batch) * ck * hw);
    Tensor<T> out({batch, cout, h, wd});
    T* outp = out.ptr();
    const T* xp = X.ptr();
    const T* wp = W.ptr();
    const T* bp = Bv.ptr();
    T* colp = col.get();
    parallel_for(batch, int64_t(2) * cout * hw * ck, [&](int64_t bi) {
      T* cb = colp + bi * ck * hw;
      im2col(xp + bi * cin * hw, cb, cin, h, wd, kh, kw);
      T* ob = outp + bi * cout * hw;
      for (int co = 0; co < cout; ++co) {
        const T* wr = wp + size_t(co) * ck;
        T* orow = ob + size_t(co) * hw;
        for (int p = 0; p < hw; ++p) orow[p] = bp[co];
        for (int q = 0; q < ck; ++q) {
          const T av = wr[q];
          if (av == T(0)) continue;
          const T* cr = cb + size_t(q) * hw;
          for (int p = 0; p < hw; ++p) orow[p] += av * cr[p];
        }
      }
    });
    Var y = push_op(std::move(out), {x, w, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, w, b, y, col, batch, cin, h, wd, cout, kh, kw] {
        const int hw = h * wd, ck = cin * kh * kw;
        const T* dY = node(y).grad.ptr();
        const T* colp = col.get();
        if (node(w).requires_grad) {
          T* dW = node(w).grad.ptr();
          // Each thread owns full co rows (fixed reduction order over b,p for
          // any thread count); the batch loop stays outermost so the col slab
          // of one image is reused across that thread's channels.
          parallel_chunks(cout, int64_t(2) * batch * hw * ck, [&](int64_t lo, int64_t hi) {
            for (int bi = 0; bi < batch; ++bi) {
              const T* cb = colp + size_t(bi) * ck * hw;
              for (int64_t co = lo; co < hi; ++co) {
                const T* dyb = dY + (size_t(bi) * cout + co) * hw;
                T* dwr = dW + co * ck;
                for (int q = 0; q < ck; ++q) dwr[q] += dotv(dyb, cb + size_t(q) * hw, hw);
              }
            }
          });
        }
        if (node(b).requires_grad) {
          T* dB = node(b).grad.ptr();
          for (int co = 0; co < cout; ++co) {
            T s = 0;
            for (int bi = 0; bi < batch; ++bi) {
              const T* dyb = dY + (size_t(bi) * cout + co) * hw;
              for (int p = 0; p < hw; ++p) s += dyb[p];
            }
            dB[co] += s;
          }
        }
        if (node(x).requires_grad) {
          T* dX = node(x).grad.ptr();
          const T* wp = node(w).value.ptr();
          parallel_for(batch, int64_t(2) * cout * hw * ck, [&](int64_t bi) {
            std::vector<T> dcol(size_t(ck) * hw, T(0));
            const T* dyb = dY + bi * cout * hw;
            for (int q = 0; q < ck; ++q) {
              T* dcr = dcol.data() + size_t(q) * hw;
              for (int co = 0; co < cout; ++co) {
                const T g = wp[size_t(co) * ck + q];
                if (g == T(0)) continue;
                const T* dyrow = dyb + size_t(co) * hw;
                for (int p = 0; p < hw; ++p) dcr[p] += g * dyrow[p];
              }
            }
            col2im_acc(dcol.data(), dX + bi * cin * hw, cin, h, wd, kh, kw);
          });
        }
      };
    }
    return y;
  }

  Var relu(Var x) {
    Tensor<T> out = value(x);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y] {
        const Tensor<T>& xin = node(x).value;
        const T* dY = node(y).grad.ptr();
        T* dX = node(x).grad.ptr();
        for (int64_t i = 0; i < xin.size(); ++i)
          if (xin.data[size_t(i)] > T(0)) dX[i] += dY[i];
      };
    }
    return y;
  }

  // Row-wise layer normalization with learnable gain/bias.
  // x [m,d], gain [d], bias [d].
  Var layer_norm(Var x, Var gain, Var bias, T eps) {
    const Tensor<T>& X = value(x);
    const Tensor<T>& G = value(gain);
    const Tensor<T>& Bv = value(bias);
    MARL_CHECK(X.rank() == 2 && G.rank() == 1 && Bv.rank() == 1 &&
                   G.dim(0) == X.dim(1) && Bv.dim(0) == X.dim(1),
               "layer_norm shape mismatch: ", shape_str(X.shape), " gain ",
               shape_str(G.shape), " bias ", shape_str(Bv.shape));
    const int m = X.dim(0), d = X.dim(1);
    Tensor<T> out({m, d});
    auto rstd = std::make_shared<std::vector<T>>(size_t(m));
    auto mean = std::make_shared<std::vector<T>>(size_t(m));
    const T* xp = X.ptr();
    const T* gp = G.ptr();
    const T* bp = Bv.ptr();
    T* op = out.ptr();
    for (int i = 0; i < m; ++i) {
      const T* xr = xp + size_t(i) * d;
      T mu = 0;
      for (int j = 0; j < d; ++j) mu += xr[j];
      mu /= T(d);
      T var = 0;
      for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= T(d);
      const T rs = T(1) / std::sqrt(var + eps);
      (*mean)[size_t(i)] = mu;
      (*rstd)[size_t(i)] = rs;
      T* orow = op + size_t(i) * d;
      for (int j = 0; j < d; ++j) orow[j] = (xr[j] - mu) * rs * gp[j] + bp[j];
    }
    Var y = push_op(std::move(out), {x, gain, bias});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, gain, bias, y, mean, rstd, m, d] {
        const T* dY = node(y).grad.ptr();
        const T* xp = node(x).value.ptr();
        const T* gp = node(gain).value.ptr();
        for (int i = 0; i < m; ++i) {
          const T mu = (*mean)[size_t(i)];
          const T rs = (*rstd)[size_t(i)];
          const T* xr = xp + size_t(i) * d;
          const T* dyr = dY + size_t(i) * d;
          T sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (int j = 0; j < d; ++j) {
            const T xhat = (xr[j] - mu) * rs;
            const T dxhat = dyr[j] * gp[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          if (node(x).requires_grad) {
            T* dxr = node(x).grad.ptr() + size_t(i) * d;
            for (int j = 0; j < d; ++j) {
              const T xhat = (xr[j] - mu) * rs;
              const T dxhat = dyr[j] * gp[j];
              dxr[j] += rs * (dxhat - sum_dxhat / T(d) - xhat * sum_dxhat_xhat / T(d));
            }
          }
          if (node(gain).requires_grad) {
            T* dg = node(gain).grad.ptr();
            for (int j = 0; j < d; ++j) dg[j] += dyr[j] * (xr[j] - mu) * rs;
          }
          if (node(bias).requires_grad) {
            T* db = node(bias).grad.ptr();
            for (int j = 0; j < d; ++j) db[j] += dyr[j];
          }
        }
      };
    }
    return y;
  }

  // Softmax over the last dimension.
  Var softmax_rows(Var x) { return softmax_impl(x, /*canonical=*/false); }

  // Softmax whose normalizer is summed in value-sorted order, making the
  // result independent of row/key ordering (exact permutation equivariance
  // for attention weights). Use for reductions across agents.
  Var softmax_rows_canonical(Var x) { return softmax_impl(x, /*canonical=*/true); }

  Var log_softmax_rows(Var x) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.rank() >= 1, "log_softmax on empty tensor");
    const int n = X.shape.back();
    const int64_t rows = X.size() / n;
    MARL_CHECK(n >= 1, "log_softmax over empty last dim");
    Tensor<T> out(X.shape);
    const T* xp = X.ptr();
    T* op = out.ptr();
    for (int64_t i = 0; i < rows; ++i) {
      const T* xr = xp + i * n;
      T* orow = op + i * n;
      T mx = xr[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
      T z = 0;
      for (int j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
      const T lz = std::log(z) + mx;
      for (int j = 0; j < n; ++j) orow[j] = xr[j] - lz;
    }
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, rows, n] {
        const T* dY = node(y).grad.ptr();
        const T* yv = node(y).value.ptr();
        T* dX = node(x).grad.ptr();
        for (int64_t i = 0; i < rows; ++i) {
          const T* dyr = dY + i * n;
          const T* yr = yv + i * n;
          T s = 0;
          for (int j = 0; j < n; ++j) s += dyr[j];
          for (int j = 0; j < n; ++j) dX[i * n + j] += dyr[j] - std::exp(yr[j]) * s;
        }
      };
    }
    return y;
  }

  // Batched scores: q [G,N,d], k [G,N,d] -> [G,N,N] (q_g k_g^T per group).
  Var bmm_nt(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.rank() == 3 && B.rank() == 3 && A.shape == B.shape,
               "bmm_nt shape mismatch: ", shape_str(A.shape), " x ", shape_str(B.shape));
    const int g = A.dim(0), n = A.dim(1), d = A.dim(2);
    Tensor<T> out({g, n, n});
    const T* ap = A.ptr();
    const T* bp = B.ptr();
    T* op = out.ptr();
    parallel_for(g, int64_t(2) * n * n * d, [&](int64_t gi) {
      const T* ag = ap + gi * n * d;
      const T* bg = bp + gi * n * d;
      T* og = op + gi * n * n;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          T s = 0;
          for (int q = 0; q < d; ++q) s += ag[i * d + q] * bg[j * d + q];
          og[i * n + j] = s;
        }
    });
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y, g, n, d] {
        const T* dY = node(y).grad.ptr();
        const T* ap = node(a).value.ptr();
        const T* bp = node(b).value.ptr();
        for (int gi = 0; gi < g; ++gi) {
          const T* dyg = dY + size_t(gi) * n * n;
          if (node(a).requires_grad) {
            T* da = node(a).grad.ptr() + size_t(gi) * n * d;
            const T* bg = bp + size_t(gi) * n * d;
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j) {
                const T gv = dyg[i * n + j];
                for (int q = 0; q < d; ++q) da[i * d + q] += gv * bg[j * d + q];
              }
          }
          if (node(b).requires_grad) {
            T* db = node(b).grad.ptr() + size_t(gi) * n * d;
            const T* ag = ap + size_t(gi) * n * d;
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j) {
                const T gv = dyg[i * n + j];
                for (int q = 0; q < d; ++q) db[j * d + q] += gv * ag[i * d + q];
              }
          }
        }
      };
    }
    return y;
  }

  // Batched attention mix: w [G,N,N], v [G,N,d] -> [G,N,d]. Addends are
  // accumulated in value-sorted order (see softmax_rows_canonical).
  Var bmm_weighted_canonical(Var w, Var v) {
    const Tensor<T>& W = value(w);
    const Tensor<T>& V = value(v);
    MARL_CHECK(W.rank() == 3 && V.rank() == 3 && W.dim(0) == V.dim(0) &&
                   W.dim(1) == W.dim(2) && W.dim(2) == V.dim(1),
               "attention mix shape mismatch: ", shape_str(W.shape), " x ", shape_str(V.shape));
    const int g = W.dim(0), n = W.dim(1), d = V.dim(2);
    Tensor<T> out({g, n, d});
    const T* wp = W.ptr();
    const T* vp = V.ptr();
    T* op = out.ptr();
    std::vector<T> buf(static_cast<size_t>(n));
    for (int gi = 0; gi < g; ++gi) {
      const T* wg = wp + size_t(gi) * n * n;
      const T* vg = vp + size_t(gi) * n * d;
      T* og = op + size_t(gi) * n * d;
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) {
          for (int j = 0; j < n; ++j) buf[size_t(j)] = wg[i * n + j] * vg[j * d + c];
          og[i * d + c] = sorted_sum(buf.data(), n);
        }
    }
    Var y = push_op(std::move(out), {w, v});
    if (node(y).requires_grad) {
      node(y).backward = [this, w, v, y, g, n, d] {
        const T* dY = node(y).grad.ptr();
        const T* wp = node(w).value.ptr();
        const T* vp = node(v).value.ptr();
        for (int gi = 0; gi < g; ++gi) {
          const T* dyg = dY + size_t(gi) * n * d;
          if (node(w).requires_grad) {
            T* dw = node(w).grad.ptr() + size_t(gi) * n * n;
            const T* vg = vp + size_t(gi) * n * d;
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j) {
                T s = 0;
                for (int c = 0; c < d; ++c) s += dyg[i * d + c] * vg[j * d + c];
                dw[i * n + j] += s;
              }
          }
          if (node(v).requires_grad) {
            T* dv = node(v).grad.ptr() + size_t(gi) * n * d;
            const T* wg = wp + size_t(gi) * n * n;
            for (int j = 0; j < n; ++j)
              for (int i = 0; i < n; ++i) {
                const T wv = wg[i * n + j];
                for (int c = 0; c < d; ++c) dv[j * d + c] += wv * dyg[i * d + c];
              }
          }
        }
      };
    }
    return y;
  }

  Var add(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.shape == B.shape, "add shape mismatch: ", shape_str(A.shape), " vs ",
               shape_str(B.shape));
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.size(); ++i) out.data[size_t(i)] += B.data[size_t(i)];
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y] {
        const Tensor<T>& dY = node(y).grad;
        if (node(a).requires_grad) acc(node(a).grad, dY);
        if (node(b).requires_grad) acc(node(b).grad, dY);
      };
    }
    return y;
  }

  // x [m,n] + b [n] broadcast over rows.
  Var add_bias(Var x, Var b) {
    const Tensor<T>& X = value(x);
    const Tensor<T>& Bv = value(b);
    MARL_CHECK(X.rank() >= 1 && Bv.rank() == 1 && X.shape.back() == Bv.dim(0),
               "add_bias shape mismatch: ", shape_str(X.shape), " + ", shape_str(Bv.shape));
    const int n = X.shape.back();
    const int64_t rows = X.size() / n;
    Tensor<T> out = X;
    for (int64_t i = 0; i < rows; ++i)
      for (int j = 0; j < n; ++j) out.data[size_t(i * n + j)] += Bv.data[size_t(j)];
    Var y = push_op(std::move(out), {x, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, b, y, rows, n] {
        const T* dY = node(y).grad.ptr();
        if (node(x).requires_grad) acc(node(x).grad, node(y).grad);
        if (node(b).requires_grad) {
          T* db = node(b).grad.ptr();
          for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < n; ++j) db[j] += dY[i * n + j];
        }
      };
    }
    return y;
  }

  Var mul(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.shape == B.shape, "mul shape mismatch: ", shape_str(A.shape), " vs ",
               shape_str(B.shape));
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.size(); ++i) out.data[size_t(i)] *= B.data[size_t(i)];
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y] {
        const T* dY = node(y).grad.ptr();
        const int64_t n = node(y).value.size();
        if (node(a).requires_grad) {
          T* da = node(a).grad.ptr();
          const T* bp = node(b).value.ptr();
          for (int64_t i = 0; i < n; ++i) da[i] += dY[i] * bp[i];
        }
        if (node(b).requires_grad) {
          T* db = node(b).grad.ptr();
          const T* ap = node(a).value.ptr();
          for (int64_t i = 0; i < n; ++i) db[i] += dY[i] * ap[i];
        }
      };
    }
    return y;
  }

  // Elementwise multiply by a constant tensor (no gradient through c).
  Var mul_const(Var x, Tensor<T> c) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.shape == c.shape, "mul_const shape mismatch: ", shape_str(X.shape),
               " vs ", shape_str(c.shape));
    Tensor<T> out = X;
    for (int64_t i = 0; i < out.size(); ++i) out.data[size_t(i)] *= c.data[size_t(i)];
    auto cp = std::make_shared<Tensor<T>>(std::move(c));
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, cp] {
        const T* dY = node(y).grad.ptr();
        T* dx = node(x).grad.ptr();
        const T* c = cp->ptr();
        for (int64_t i = 0; i < node(y).value.size(); ++i) dx[i] += dY[i] * c[i];
      };
    }
    return y;
  }

  Var add_const(Var x, Tensor<T> c) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.shape == c.shape, "add_const shape mismatch: ", shape_str(X.shape),
               " vs ", shape_str(c.shape));
    Tensor<T> out = X;
    for (int64_t i = 0; i < out.size(); ++i) out.data[size_t(i)] += c.data[size_t(i)];
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y] {
        if (node(x).requires_grad) acc(node(x).grad, node(y).grad);
      };
    }
    return y;
  }

  Var scale(Var x, T c) {
    Tensor<T> out = value(x);
    for (auto& v : out.data) v *= c;
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, c] {
        const T* dY = node(y).grad.ptr();
        T* dx = node(x).grad.ptr();
        for (int64_t i = 0; i < node(y).value.size(); ++i) dx[i] += dY[i] * c;
      };
    }
    return y;
  }

  // Concatenate along the last dimension: [m,d1] ++ [m,d2] -> [m,d1+d2].
  Var concat_cols(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.rank() == 2 && B.rank() == 2 && A.dim(0) == B.dim(0),
               "concat_cols shape mismatch: ", shape_str(A.shape), " ++ ", shape_str(B.shape));
    const int m = A.dim(0), d1 = A.dim(1), d2 = B.dim(1);
    Tensor<T> out({m, d1 + d2});
    for (int i = 0; i < m; ++i) {
      std::copy_n(A.ptr() + size_t(i) * d1, d1, out.ptr() + size_t(i) * (d1 + d2));
      std::copy_n(B.ptr() + size_t(i) * d2, d2, out.ptr() + size_t(i) * (d1 + d2) + d1);
    }
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y, m, d1, d2] {
        const T* dY = node(y).grad.ptr();
        if (node(a).requires_grad) {
          T* da = node(a).grad.ptr();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d1; ++j) da[size_t(i) * d1 + j] += dY[size_t(i) * (d1 + d2) + j];
        }
        if (node(b).requires_grad) {
          T* db = node(b).grad.ptr();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d2; ++j)
              db[size_t(i) * d2 + j] += dY[size_t(i) * (d1 + d2) + d1 + j];
        }
      };
    }
    return y;
  }

  // Concatenate along the channel dimension: [B,C1,H,W] ++ [B,C2,H,W].
  Var concat_channels(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    MARL_CHECK(A.rank() == 4 && B.rank() == 4 && A.dim(0) == B.dim(0) &&
                   A.dim(2) == B.dim(2) && A.dim(3) == B.dim(3),
               "concat_channels shape mismatch: ", shape_str(A.shape), " ++ ",
               shape_str(B.shape));
    const int batch = A.dim(0), c1 = A.dim(1), c2 = B.dim(1), hw = A.dim(2) * A.dim(3);
    Tensor<T> out({batch, c1 + c2, A.dim(2), A.dim(3)});
    for (int bi = 0; bi < batch; ++bi) {
      std::copy_n(A.ptr() + size_t(bi) * c1 * hw, size_t(c1) * hw,
                  out.ptr() + size_t(bi) * (c1 + c2) * hw);
      std::copy_n(B.ptr() + size_t(bi) * c2 * hw, size_t(c2) * hw,
                  out.ptr() + size_t(bi) * (c1 + c2) * hw + size_t(c1) * hw);
    }
    Var y = push_op(std::move(out), {a, b});
    if (node(y).requires_grad) {
      node(y).backward = [this, a, b, y, batch, c1, c2, hw] {
        const T* dY = node(y).grad.ptr();
        if (node(a).requires_grad) {
          T* da = node(a).grad.ptr();
          for (int bi = 0; bi < batch; ++bi)
            for (int64_t i = 0; i < int64_t(c1) * hw; ++i)
              da[size_t(bi) * c1 * hw + i] += dY[size_t(bi) * (c1 + c2) * hw + i];
        }
        if (node(b).requires_grad) {
          T* db = node(b).grad.ptr();
          for (int bi = 0; bi < batch; ++bi)
            for (int64_t i = 0; i < int64_t(c2) * hw; ++i)
              db[size_t(bi) * c2 * hw + i] +=
                  dY[size_t(bi) * (c1 + c2) * hw + size_t(c1) * hw + i];
        }
      };
    }
    return y;
  }

  Var reshape(Var x, Shape s) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(shape_numel(s) == X.size(), "reshape numel mismatch: ", shape_str(X.shape),
               " -> ", shape_str(s));
    Tensor<T> out(std::move(s), X.data);
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y] {
        T* dx = node(x).grad.ptr();
        const T* dY = node(y).grad.ptr();
        for (int64_t i = 0; i < node(y).value.size(); ++i) dx[i] += dY[i];
      };
    }
    return y;
  }

  // y[i] = x[i, idx[i]]
  Var gather_cols(Var x, std::vector<int> idx) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.rank() == 2 && int64_t(idx.size()) == X.dim(0),
               "gather_cols expects x[m,n] and m indices");
    const int m = X.dim(0), n = X.dim(1);
    for (int i = 0; i < m; ++i)
      MARL_CHECK(idx[size_t(i)] >= 0 && idx[size_t(i)] < n, "gather index ", idx[size_t(i)],
                 " out of range [0,", n, ") at row ", i);
    Tensor<T> out({m});
    for (int i = 0; i < m; ++i) out.data[size_t(i)] = X.at(i, idx[size_t(i)]);
    auto ip = std::make_shared<std::vector<int>>(std::move(idx));
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, ip, m, n] {
        const T* dY = node(y).grad.ptr();
        T* dx = node(x).grad.ptr();
        for (int i = 0; i < m; ++i) dx[size_t(i) * n + (*ip)[size_t(i)]] += dY[i];
      };
    }
    return y;
  }

  // [m,n] -> [m]
  Var reduce_sum_rows(Var x) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.rank() == 2, "reduce_sum_rows expects a 2-D tensor");
    const int m = X.dim(0), n = X.dim(1);
    Tensor<T> out({m});
    for (int i = 0; i < m; ++i) {
      T s = 0;
      for (int j = 0; j < n; ++j) s += X.at(i, j);
      out.data[size_t(i)] = s;
    }
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, m, n] {
        const T* dY = node(y).grad.ptr();
        T* dx = node(x).grad.ptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) dx[size_t(i) * n + j] += dY[i];
      };
    }
    return y;
  }

  Var reduce_sum_all(Var x) {
    const Tensor<T>& X = value(x);
    T s = 0;
    for (const T& v : X.data) s += v;
    Var y = push_op(Tensor<T>::scalar(s), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y] {
        const T g = node(y).grad.data[0];
        T* dx = node(x).grad.ptr();
        for (int64_t i = 0; i < node(x).value.size(); ++i) dx[i] += g;
      };
    }
    return y;
  }

  Var reduce_mean_all(Var x) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.size() > 0, "mean of empty tensor");
    const T inv = T(1) / T(X.size());
    T s = 0;
    for (const T& v : X.data) s += v;
    Var y = push_op(Tensor<T>::scalar(s * inv), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, inv] {
        const T g = node(y).grad.data[0] * inv;
        T* dx = node(x).grad.ptr();
        for (int64_t i = 0; i < node(x).value.size(); ++i) dx[i] += g;
      };
    }
    return y;
  }

  // Mean binary cross-entropy with logits against a constant {0,1} target.
  Var bce_with_logits_mean(Var x, Tensor<T> targets) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.shape == targets.shape, "bce shape mismatch: ", shape_str(X.shape),
               " vs ", shape_str(targets.shape));
    const int64_t n = X.size();
    MARL_CHECK(n > 0, "bce on empty tensor");
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
      const T xv = X.data[size_t(i)], t = targets.data[size_t(i)];
      s += std::max(xv, T(0)) - xv * t + std::log1p(std::exp(-std::abs(xv)));
    }
    auto tp = std::make_shared<Tensor<T>>(std::move(targets));
    Var y = push_op(Tensor<T>::scalar(s / T(n)), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, tp, n] {
        const T g = node(y).grad.data[0] / T(n);
        T* dx = node(x).grad.ptr();
        const T* xv = node(x).value.ptr();
        const T* t = tp->ptr();
        for (int64_t i = 0; i < n; ++i) {
          const T sig = T(1) / (T(1) + std::exp(-xv[i]));
          dx[i] += g * (sig - t[i]);
        }
      };
    }
    return y;
  }

  // ---- reverse pass -----------------------------------------------------

  void backward(Var loss) {
    MARL_CHECK(loss.valid() && size_t(loss.id) < nodes_.size(), "backward on invalid var");
    MARL_CHECK(node(loss).value.size() == 1,
               "backward requires a scalar loss; got shape ",
               shape_str(node(loss).value.shape));
    for (auto& n : nodes_) {
      n.grad = Tensor<T>(n.value.shape);  // zero-filled; unused outputs stay zero
    }
    nodes_[size_t(loss.id)].grad.data[0] = T(1);
    for (int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.backward && n.requires_grad) n.backward();
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;

  Node& node(Var v) { return nodes_[size_t(v.id)]; }
  const Node& node(Var v) const { return nodes_[size_t(v.id)]; }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{int32_t(nodes_.size() - 1)};
  }

  Var push_op(Tensor<T> value, std::initializer_list<Var> inputs) {
    Node n;
    n.value = std::move(value);
    for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
    return push(std::move(n));
  }

  static void acc(Tensor<T>& dst, const Tensor<T>& src) {
    for (int64_t i = 0; i < dst.size(); ++i) dst.data[size_t(i)] += src.data[size_t(i)];
  }

  static T sorted_sum(T* buf, int n) {
    std::sort(buf, buf + n);
    T s = 0;
    for (int i = 0; i < n; ++i) s += buf[i];
    return s;
  }

  // Dot product with a fixed-width lane reduction. The accumulation tree is
  // the same for every call, so results are deterministic, and the lanes are
  // independent, so the loop vectorizes under strict FP semantics.
  static T dotv(const T* a, const T* b, int n) {
    constexpr int kLanes = std::is_same_v<T, float> ? 16 : 8;
    T lane[kLanes] = {};
    int i = 0;
    for (; i + kLanes <= n; i += kLanes)
      for (int l = 0; l < kLanes; ++l) lane[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) lane[i % kLanes] += a[i] * b[i];
    T s = 0;
    for (int l = 0; l < kLanes; ++l) s += lane[l];
    return s;
  }

  Var softmax_impl(Var x, bool canonical) {
    const Tensor<T>& X = value(x);
    MARL_CHECK(X.rank() >= 1, "softmax on empty tensor");
    const int n = X.shape.back();
    MARL_CHECK(n >= 1, "softmax over empty last dim");
    const int64_t rows = X.size() / n;
    Tensor<T> out(X.shape);
    const T* xp = X.ptr();
    T* op = out.ptr();
    std::vector<T> buf(static_cast<size_t>(n));
    for (int64_t i = 0; i < rows; ++i) {
      const T* xr = xp + i * n;
      T* orow = op + i * n;
      T mx = xr[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
      for (int j = 0; j < n; ++j) orow[j] = std::exp(xr[j] - mx);
      T z;
      if (canonical) {
        std::copy_n(orow, n, buf.data());
        z = sorted_sum(buf.data(), n);
      } else {
        z = 0;
        for (int j = 0; j < n; ++j) z += orow[j];
      }
      for (int j = 0; j < n; ++j) orow[j] /= z;
    }
    Var y = push_op(std::move(out), {x});
    if (node(y).requires_grad) {
      node(y).backward = [this, x, y, rows, n] {
        const T* dY = node(y).grad.ptr();
        const T* yv = node(y).value.ptr();
        T* dX = node(x).grad.ptr();
        for (int64_t i = 0; i < rows; ++i) {
          T s = 0;
          for (int j = 0; j < n; ++j) s += dY[i * n + j] * yv[i * n + j];
          for (int j = 0; j < n; ++j)
            dX[i * n + j] += yv[i * n + j] * (dY[i * n + j] - s);
        }
      };
    }
    return y;
  }

  // C[m,n] = A[m,k] B[k,n], accumulating over k in index order per element.
  static void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    parallel_for(m, int64_t(2) * k * n, [&](int64_t i) {
      T* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] = 0;
      const T* arow = a + i * k;
      for (int kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        if (av == T(0)) continue;
        const T* brow = b + size_t(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    });
  }

  // C[m,n] = A[m,k] B[n,k]^T
  static void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    parallel_for(m, int64_t(2) * k * n, [&](int64_t i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] = dotv(arow, b + size_t(j) * k, k);
    });
  }

  // Zero-padded patch extraction, ck-major: col[(ci,dy,dx)] is a full H*W
  // plane holding the input shifted by (dy,dx). Row segments are contiguous.
  static void im2col(const T* x, T* col, int c, int h, int w, int kh, int kw) {
    const int ph = kh / 2, pw = kw / 2;
    T* dst = col;
    for (int ci = 0; ci < c; ++ci)
      for (int dy = -ph; dy <= ph; ++dy)
        for (int dx = -pw; dx <= pw; ++dx) {
          const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
          for (int y0 = 0; y0 < h; ++y0) {
            T* row = dst + size_t(y0) * w;
            const int yy = y0 + dy;
            if (yy < 0 || yy >= h || x_lo >= x_hi) {
              std::fill_n(row, w, T(0));
              continue;
            }
            const T* src = x + (size_t(ci) * h + yy) * w + dx;
            for (int x0 = 0; x0 < x_lo; ++x0) row[x0] = T(0);
            std::copy(src + x_lo, src + x_hi, row + x_lo);
            for (int x0 = x_hi; x0 < w; ++x0) row[x0] = T(0);
          }
          dst += size_t(h) * w;
        }
  }

  static void col2im_acc(const T* col, T* dx, int c, int h, int w, int kh, int kw) {
    const int ph = kh / 2, pw = kw / 2;
    const T* src = col;
    for (int ci = 0; ci < c; ++ci)
      for (int dy = -ph; dy <= ph; ++dy)
        for (int dx2 = -pw; dx2 <= pw; ++dx2) {
          const int x_lo = std::max(0, -dx2), x_hi = std::min(w, w - dx2);
          for (int y0 = 0; y0 < h; ++y0) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= h || x_lo >= x_hi) continue;
            const T* row = src + size_t(y0) * w;
            T* out = dx + (size_t(ci) * h + yy) * w + dx2;
            for (int x0 = x_lo; x0 < x_hi; ++x0) out[x0] += row[x0];
          }
          src += size_t(h) * w;
        }
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace marl
