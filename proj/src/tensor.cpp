#include "gsabt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gsabt/kernels.hpp"

namespace gsabt {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace {

thread_local Tape* g_active_tape = nullptr;
bool g_finite_checks = true;

using NodePtr = std::shared_ptr<detail::Node>;

const kern::Kernels& kk() { return kern::active(); }

void validate_shape(const Shape& s, const char* what) {
  for (std::size_t d : s)
    if (d == 0)
      throw ShapeError(std::string(what) + ": zero-sized dimension in " +
                       shape_str(s));
}

}  // namespace

Tensor make_op_output(Shape shape, bool track) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value.assign(shape_size(n->shape), real(0));
  n->requires_grad = track;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape, "zeros");
  Tensor t = make_op_output(std::move(shape), requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, real v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node_->value.begin(), t.node_->value.end(), v);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data,
                         bool requires_grad) {
  validate_shape(shape, "from_data");
  if (shape_size(shape) != data.size())
    throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(data.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

real Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item(): tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<const real> Tensor::grad() const {
  if (node_->grad.empty())
    throw Error("grad(): no gradient present (not tracked or no backward run)");
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

std::string Tensor::dump() const {
  std::ostringstream os;
  os << "shape";
  for (std::size_t d : shape()) os << ' ' << d;
  os << '\n';
  char buf[40];
  for (real v : node_->value) {
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    os << buf << '\n';
  }
  return os.str();
}

// ---- tape ----

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }

void Tape::record(std::shared_ptr<detail::Node> out, std::function<void()> fn,
                  real kink_distance) {
  entries_.push_back({std::move(out), std::move(fn), kink_distance});
}

real Tape::min_kink_distance() const {
  real m = kNoKink;
  for (const Entry& e : entries_) m = std::min(m, e.kink);
  return m;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw Error("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  if (entries_.empty()) throw Error("backward: tape is empty");
  if (!loss.requires_grad())
    throw Error("backward: loss is not tracked by this tape");
  // Intermediate grads are zeroed per replay; leaf grads persist and
  // accumulate across calls.
  for (Entry& e : entries_) {
    e.out->ensure_grad();
    std::fill(e.out->grad.begin(), e.out->grad.end(), real(0));
  }
  loss.node()->grad[0] = real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

// ---- op plumbing ----

namespace {

bool want_track(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Finite scan; mode 0 = strictly finite, 1 = -inf allowed (mask sentinel).
void check_finite(const Tensor& t, const char* op, int mode = 0) {
  if (!g_finite_checks) return;
  for (real v : t.data()) {
    if (std::isnan(v) ||
        (std::isinf(v) && (mode == 0 || v > real(0))))
      throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                         shape_str(t.shape()));
  }
}

void record(std::initializer_list<const Tensor*> inputs, const Tensor& out,
            std::function<void()> fn, real kink = kNoKink) {
  for (const Tensor* t : inputs)
    if (t->requires_grad()) t->node()->ensure_grad();
  out.node()->ensure_grad();
  g_active_tape->record(out.node(), std::move(fn), kink);
}

}  // namespace

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const bool track = want_track({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  kk().add(a.data().data(), b.data().data(), out.mutable_data().data(),
           a.size());
  check_finite(out, "add");
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record({&a, &b}, out, [an, bn, on] {
      if (an->requires_grad)
        kk().axpy(real(1), on->grad.data(), an->grad.data(), on->grad.size());
      if (bn->requires_grad)
        kk().axpy(real(1), on->grad.data(), bn->grad.data(), on->grad.size());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const bool track = want_track({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  kk().sub(a.data().data(), b.data().data(), out.mutable_data().data(),
           a.size());
  check_finite(out, "sub");
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record({&a, &b}, out, [an, bn, on] {
      if (an->requires_grad)
        kk().axpy(real(1), on->grad.data(), an->grad.data(), on->grad.size());
      if (bn->requires_grad)
        kk().axpy(real(-1), on->grad.data(), bn->grad.data(), on->grad.size());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const bool track = want_track({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  kk().mul(a.data().data(), b.data().data(), out.mutable_data().data(),
           a.size());
  check_finite(out, "mul");
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record({&a, &b}, out, [an, bn, on] {
      if (an->requires_grad)
        kk().mul_acc(on->grad.data(), bn->value.data(), an->grad.data(),
                     on->grad.size());
      if (bn->requires_grad)
        kk().mul_acc(on->grad.data(), an->value.data(), bn->grad.data(),
                     on->grad.size());
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, real s) {
  const bool track = want_track({&a});
  Tensor out = make_op_output(a.shape(), track);
  kk().scale(a.data().data(), s, out.mutable_data().data(), a.size());
  check_finite(out, "scalar_mul");
  if (track) {
    auto an = a.node(), on = out.node();
    record({&a}, out, [an, on, s] {
      kk().axpy(s, on->grad.data(), an->grad.data(), on->grad.size());
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 ||
      x.shape().back() != bias.dim(0))
    throw ShapeError("add_bias: shape mismatch " + shape_str(x.shape()) +
                     " vs bias " + shape_str(bias.shape()));
  const std::size_t n = bias.dim(0);
  const std::size_t rows = x.size() / n;
  const bool track = want_track({&x, &bias});
  Tensor out = make_op_output(x.shape(), track);
  for (std::size_t r = 0; r < rows; ++r)
    kk().add(x.data().data() + r * n, bias.data().data(),
             out.mutable_data().data() + r * n, n);
  check_finite(out, "add_bias");
  if (track) {
    auto xn = x.node(), bn = bias.node(), on = out.node();
    record({&x, &bias}, out, [xn, bn, on, rows, n] {
      if (xn->requires_grad)
        kk().axpy(real(1), on->grad.data(), xn->grad.data(), on->grad.size());
      if (bn->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          kk().axpy(real(1), on->grad.data() + r * n, bn->grad.data(), n);
    });
  }
  return out;
}

namespace {

struct MatDims {
  std::size_t batch, m, k, n;
  bool shared_b;  // b is rank-2, shared across the batch
};

MatDims matmul_dims(const Tensor& a, const Tensor& b, bool b_transposed,
                    const char* op) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError(std::string(op) + ": operands must be rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  MatDims d{};
  d.m = a.dim(a.rank() - 2);
  d.k = a.dim(a.rank() - 1);
  const std::size_t bk = b_transposed ? b.dim(b.rank() - 1)
                                      : b.dim(b.rank() - 2);
  const std::size_t bn = b_transposed ? b.dim(b.rank() - 2)
                                      : b.dim(b.rank() - 1);
  d.n = bn;
  d.batch = a.size() / (d.m * d.k);
  d.shared_b = b.rank() == 2;
  bool batch_ok = true;
  if (!d.shared_b) {
    if (a.rank() != b.rank()) {
      batch_ok = false;
    } else {
      for (std::size_t i = 0; i + 2 < a.rank(); ++i)
        if (a.dim(i) != b.dim(i)) batch_ok = false;
    }
  }
  if (bk != d.k || !batch_ok)
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  return d;
}

Shape matmul_out_shape(const Tensor& a, std::size_t n) {
  Shape s = a.shape();
  s.back() = n;
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b, /*b_transposed=*/false, "matmul");
  const bool track = want_track({&a, &b});
  Tensor out = make_op_output(matmul_out_shape(a, d.n), track);
  const real* ap = a.data().data();
  const real* bp = b.data().data();
  real* cp = out.mutable_data().data();
  if (d.shared_b) {
    // collapse batch into rows: [batch*m, k] x [k, n]
    kk().gemm_nn(ap, bp, cp, d.batch * d.m, d.k, d.n);
  } else {
    for (std::size_t i = 0; i < d.batch; ++i)
      kk().gemm_nn(ap + i * d.m * d.k, bp + i * d.k * d.n, cp + i * d.m * d.n,
                   d.m, d.k, d.n);
  }
  check_finite(out, "matmul");
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record({&a, &b}, out, [an, bn, on, d] {
      const real* g = on->grad.data();
      if (an->requires_grad) {
        real* ga = an->grad.data();
        if (d.shared_b) {
          kk().gemm_nt(g, bn->value.data(), ga, d.batch * d.m, d.n, d.k);
        } else {
          for (std::size_t i = 0; i < d.batch; ++i)
            kk().gemm_nt(g + i * d.m * d.n, bn->value.data() + i * d.k * d.n,
                         ga + i * d.m * d.k, d.m, d.n, d.k);
        }
      }
      if (bn->requires_grad) {
        real* gb = bn->grad.data();
        if (d.shared_b) {
          kk().gemm_tn(an->value.data(), g, gb, d.batch * d.m, d.k, d.n);
        } else {
          for (std::size_t i = 0; i < d.batch; ++i)
            kk().gemm_tn(an->value.data() + i * d.m * d.k, g + i * d.m * d.n,
                         gb + i * d.k * d.n, d.m, d.k, d.n);
        }
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b, /*b_transposed=*/true, "matmul_nt");
  const bool track = want_track({&a, &b});
  Tensor out = make_op_output(matmul_out_shape(a, d.n), track);
  const real* ap = a.data().data();
  const real* bp = b.data().data();
  real* cp = out.mutable_data().data();
  if (d.shared_b) {
    kk().gemm_nt(ap, bp, cp, d.batch * d.m, d.k, d.n);
  } else {
    for (std::size_t i = 0; i < d.batch; ++i)
      kk().gemm_nt(ap + i * d.m * d.k, bp + i * d.n * d.k, cp + i * d.m * d.n,
                   d.m, d.k, d.n);
  }
  check_finite(out, "matmul_nt");
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record({&a, &b}, out, [an, bn, on, d] {
      const real* g = on->grad.data();
      if (an->requires_grad) {
        real* ga = an->grad.data();
        if (d.shared_b) {
          kk().gemm_nn(g, bn->value.data(), ga, d.batch * d.m, d.n, d.k);
        } else {
          for (std::size_t i = 0; i < d.batch; ++i)
            kk().gemm_nn(g + i * d.m * d.n, bn->value.data() + i * d.n * d.k,
                         ga + i * d.m * d.k, d.m, d.n, d.k);
        }
      }
      if (bn->requires_grad) {
        real* gb = bn->grad.data();
        if (d.shared_b) {
          kk().gemm_tn(g, an->value.data(), gb, d.batch * d.m, d.n, d.k);
        } else {
          for (std::size_t i = 0; i < d.batch; ++i)
            kk().gemm_tn(g + i * d.m * d.n, an->value.data() + i * d.m * d.k,
                         gb + i * d.n * d.k, d.m, d.n, d.k);
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  kk().relu(x.data().data(), out.mutable_data().data(), x.size());
  check_finite(out, "relu");
  if (track) {
    real kink = kNoKink;
    for (real v : x.data()) kink = std::min(kink, std::abs(v));
    auto xn = x.node(), on = out.node();
    record({&x}, out,
           [xn, on] {
             kk().relu_bwd(xn->value.data(), on->grad.data(), xn->grad.data(),
                           on->grad.size());
           },
           kink);
  }
  return out;
}

Tensor abs(const Tensor& x) {
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  real* o = out.mutable_data().data();
  const real* xp = x.data().data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = std::abs(xp[i]);
  check_finite(out, "abs");
  if (track) {
    real kink = kNoKink;
    for (real v : x.data()) kink = std::min(kink, std::abs(v));
    auto xn = x.node(), on = out.node();
    record({&x}, out,
           [xn, on] {
             const real* g = on->grad.data();
             real* gx = xn->grad.data();
             const real* v = xn->value.data();
             for (std::size_t i = 0; i < on->grad.size(); ++i) {
               if (v[i] > real(0)) gx[i] += g[i];
               else if (v[i] < real(0)) gx[i] -= g[i];
               // derivative at 0 pinned to 0
             }
           },
           kink);
  }
  return out;
}

Tensor dropout(const Tensor& x, real p, bool training, Rng& rng) {
  if (!(p >= real(0) && p < real(1)))
    throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
  if (!training || p == real(0)) return x;
  const real keep_scale = real(1) / (real(1) - p);
  auto mask = std::make_shared<std::vector<real>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    (*mask)[i] = rng.uniform() < static_cast<double>(p) ? real(0) : keep_scale;
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  kk().mul(x.data().data(), mask->data(), out.mutable_data().data(), x.size());
  check_finite(out, "dropout");
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out, [xn, on, mask] {
      kk().mul_acc(on->grad.data(), mask->data(), xn->grad.data(),
                   on->grad.size());
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax_rows: rank-0 input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  const real* xp = x.data().data();
  real* op = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const real* row = xp + r * n;
    real* orow = op + r * n;
    const real m = kk().vmax(row, n);
    if (std::isinf(m) && m < real(0))
      throw NumericError("softmax_rows: row " + std::to_string(r) +
                         " is entirely -inf (empty attention row)");
    if (std::isnan(m) || (std::isinf(m) && m > real(0)))
      throw NumericError("softmax_rows: non-finite input in row " +
                         std::to_string(r));
    real s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - m);  // exp(-inf) == 0 exactly
      s += orow[j];
    }
    kk().scale(orow, real(1) / s, orow, n);
  }
  check_finite(out, "softmax_rows");
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out, [xn, on, rows, n] {
      for (std::size_t r = 0; r < rows; ++r) {
        const real* y = on->value.data() + r * n;
        const real* g = on->grad.data() + r * n;
        const real d = kk().dot(y, g, n);
        kk().softmax_bwd_apply(y, g, d, xn->grad.data() + r * n, n);
      }
    });
  }
  return out;
}

Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& keep,
                   real fill) {
  if (keep.empty() || x.size() % keep.size() != 0)
    throw ShapeError("masked_fill: mask length " + std::to_string(keep.size()) +
                     " does not tile tensor of " + std::to_string(x.size()) +
                     " elements");
  const std::size_t tile = keep.size();
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  const real* xp = x.data().data();
  real* op = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i)
    op[i] = keep[i % tile] ? xp[i] : fill;
  check_finite(out, "masked_fill", /*mode=*/std::isinf(fill) ? 1 : 0);
  if (track) {
    auto xn = x.node(), on = out.node();
    auto keep_copy = std::make_shared<std::vector<std::uint8_t>>(keep);
    record({&x}, out, [xn, on, keep_copy, tile] {
      const real* g = on->grad.data();
      real* gx = xn->grad.data();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if ((*keep_copy)[i % tile]) gx[i] += g[i];
    });
  }
  return out;
}

Tensor top_u_sparsify(const Tensor& x, std::size_t u,
                      std::vector<std::uint8_t>* survivors_out) {
  if (u == 0) throw ConfigError("top_u_sparsify: u must be >= 1");
  if (x.rank() < 1) throw ShapeError("top_u_sparsify: rank-0 input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const std::size_t keep_n = std::min(u, n);
  const bool track = want_track({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto keep = std::make_shared<std::vector<std::uint8_t>>(x.size(), 0);
  const real* xp = x.data().data();
  real* op = out.mutable_data().data();
  const real ninf = -std::numeric_limits<real>::infinity();
  std::vector<std::size_t> idx(n);
  real kink = kNoKink;
  for (std::size_t r = 0; r < rows; ++r) {
    const real* row = xp + r * n;
    real* orow = op + r * n;
    if (keep_n == n) {
      std::copy(row, row + n, orow);
      std::fill(keep->begin() + r * n, keep->begin() + (r + 1) * n, 1);
      continue;
    }
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // value descending, column index ascending on ties
    std::sort(idx.begin(), idx.end(), [row](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    std::fill(orow, orow + n, ninf);
    for (std::size_t j = 0; j < keep_n; ++j) {
      orow[idx[j]] = row[idx[j]];
      (*keep)[r * n + idx[j]] = 1;
    }
    kink = std::min(kink, row[idx[keep_n - 1]] - row[idx[keep_n]]);
  }
  check_finite(out, "top_u_sparsify", /*mode=*/1);
  if (survivors_out != nullptr) *survivors_out = *keep;
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out,
           [xn, on, keep] {
             const real* g = on->grad.data();
             real* gx = xn->grad.data();
             for (std::size_t i = 0; i < on->grad.size(); ++i)
               if ((*keep)[i]) gx[i] += g[i];
           },
           kink);
  }
  return out;
}

Tensor concat(std::size_t axis, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  std::size_t axis_total = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != s0.size())
      throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && t.dim(i) != s0[i])
        throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) +
                         " vs " + shape_str(s0));
    axis_total += t.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[axis] = axis_total;
  bool track = false;
  for (const Tensor& t : parts)
    if (g_active_tape != nullptr && t.requires_grad()) track = true;
  Tensor out = make_op_output(out_shape, track);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  real* op = out.mutable_data().data();
  const std::size_t out_stride = axis_total * inner;
  std::size_t off = 0;
  struct Placement {
    NodePtr node;
    std::size_t offset, chunk;
    bool needs_grad;
  };
  std::vector<Placement> placed;
  for (const Tensor& t : parts) {
    const std::size_t chunk = t.dim(axis) * inner;
    const real* tp = t.data().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(tp + o * chunk, tp + (o + 1) * chunk,
                op + o * out_stride + off);
    if (track && t.requires_grad()) t.node()->ensure_grad();
    placed.push_back({t.node(), off, chunk, t.requires_grad()});
    off += chunk;
  }
  check_finite(out, "concat");
  if (track) {
    auto on = out.node();
    g_active_tape->record(on, [on, placed, outer, out_stride] {
      const real* g = on->grad.data();
      for (const auto& p : placed) {
        if (!p.needs_grad) continue;
        real* gp = p.node->grad.data();
        for (std::size_t o = 0; o < outer; ++o)
          kk().axpy(real(1), g + o * out_stride + p.offset, gp + o * p.chunk,
                    p.chunk);
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + len > s[axis] || len == 0)
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") invalid for axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  Shape out_shape = s;
  out_shape[axis] = len;
  const bool track = want_track({&x});
  Tensor out = make_op_output(out_shape, track);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_stride = s[axis] * inner;
  const std::size_t out_stride = len * inner;
  const real* xp = x.data().data() + start * inner;
  real* op = out.mutable_data().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(xp + o * in_stride, xp + o * in_stride + out_stride,
              op + o * out_stride);
  if (track) {
    auto xn = x.node(), on = out.node();
    const std::size_t head = start * inner;
    record({&x}, out, [xn, on, outer, in_stride, out_stride, head] {
      const real* g = on->grad.data();
      real* gx = xn->grad.data() + head;
      for (std::size_t o = 0; o < outer; ++o)
        kk().axpy(real(1), g + o * out_stride, gx + o * in_stride, out_stride);
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  const bool track = want_track({&x});
  Tensor out = make_op_output(std::move(shape), track);
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out, [xn, on] {
      kk().axpy(real(1), on->grad.data(), xn->grad.data(), on->grad.size());
    });
  }
  return out;
}

namespace {

// dst[i] = src[perm_map(i)] walk: iterate output linear order, tracking the
// source index with mixed-radix counters.
void permute_walk(const real* src, real* dst, const Shape& out_shape,
                  const std::vector<std::size_t>& src_strides, bool accumulate) {
  const std::size_t rank = out_shape.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src_idx = 0;
  const std::size_t total = shape_size(out_shape);
  for (std::size_t o = 0; o < total; ++o) {
    if (accumulate) dst[o] += src[src_idx];
    else dst[o] = src[src_idx];
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        src_idx += src_strides[ax];
        break;
      }
      counter[ax] = 0;
      src_idx -= src_strides[ax] * (out_shape[ax] - 1);
    }
  }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  if (perm.size() != s.size())
    throw ShapeError("permute: perm rank mismatch for " + shape_str(s));
  std::vector<bool> seen(s.size(), false);
  for (std::size_t p : perm) {
    if (p >= s.size() || seen[p]) throw ShapeError("permute: invalid axis set");
    seen[p] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
  // stride of input axis perm[i] in the input layout
  std::vector<std::size_t> in_strides(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;)
    in_strides[i - 1] = in_strides[i] * s[i];
  std::vector<std::size_t> src_strides(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) src_strides[i] = in_strides[perm[i]];
  const bool track = want_track({&x});
  Tensor out = make_op_output(out_shape, track);
  permute_walk(x.data().data(), out.mutable_data().data(), out_shape,
               src_strides, false);
  if (track) {
    auto xn = x.node(), on = out.node();
    // backward: walk the same mapping, accumulating grad into source slots
    record({&x}, out, [xn, on, out_shape, src_strides] {
      const std::size_t rank = out_shape.size();
      std::vector<std::size_t> counter(rank, 0);
      std::size_t src_idx = 0;
      const real* g = on->grad.data();
      real* gx = xn->grad.data();
      const std::size_t total = on->grad.size();
      for (std::size_t o = 0; o < total; ++o) {
        gx[src_idx] += g[o];
        for (std::size_t ax = rank; ax-- > 0;) {
          if (++counter[ax] < out_shape[ax]) {
            src_idx += src_strides[ax];
            break;
          }
          counter[ax] = 0;
          src_idx -= src_strides[ax] * (out_shape[ax] - 1);
        }
      }
    });
  }
  return out;
}

Tensor flip(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size())
    throw ShapeError("flip: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t d = s[axis];
  const bool track = want_track({&x});
  Tensor out = make_op_output(s, track);
  const real* xp = x.data().data();
  real* op = out.mutable_data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < d; ++i)
      std::copy(xp + (o * d + i) * inner, xp + (o * d + i + 1) * inner,
                op + (o * d + (d - 1 - i)) * inner);
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out, [xn, on, outer, d, inner] {
      const real* g = on->grad.data();
      real* gx = xn->grad.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < d; ++i)
          kk().axpy(real(1), g + (o * d + (d - 1 - i)) * inner,
                    gx + (o * d + i) * inner, inner);
    });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t dilation, bool causal_pad) {
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1)
    throw ShapeError("conv1d: expected x[B,C,T], w[O,C,K], bias[O]; got " +
                     shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                     shape_str(bias.shape()));
  const std::size_t B = x.dim(0), cin = x.dim(1), T = x.dim(2);
  const std::size_t cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != cin || bias.dim(0) != cout)
    throw ShapeError("conv1d: channel mismatch x" + shape_str(x.shape()) +
                     " w" + shape_str(w.shape()));
  if (dilation == 0 || K == 0) throw ShapeError("conv1d: K and dilation must be >= 1");
  const std::size_t reach = dilation * (K - 1);
  std::size_t t_out;
  if (causal_pad) {
    t_out = T;
    if (reach >= T) {
      static bool warned = false;
      if (!warned) {
        std::fprintf(stderr,
                     "warning: conv1d receptive reach %zu >= sequence length %zu; "
                     "outer taps read only padding\n",
                     reach, T);
        warned = true;
      }
    }
  } else {
    if (reach >= T)
      throw ShapeError("conv1d: valid convolution needs T > dilation*(K-1)");
    t_out = T - reach;
  }
  const bool track = want_track({&x, &w, &bias});
  Tensor out = make_op_output({B, cout, t_out}, track);

  // Contraction runs over channels, which dwarf the window length here, so
  // the loops work in a time-major scratch layout: one gemm per (batch, tap)
  // with the tap's time shift applied as a row offset.
  const real* xp = x.data().data();
  const real* wp = w.data().data();
  const real* bp = bias.data().data();
  real* op = out.mutable_data().data();

  // w[o,c,j] -> per-tap [c,o] matrices
  std::vector<real> w_tap(K * cin * cout);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t j = 0; j < K; ++j)
        w_tap[(j * cin + c) * cout + o] = wp[(o * cin + c) * K + j];

  std::vector<real> xt(T * cin), yt(t_out * cout);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t t = 0; t < T; ++t)
        xt[t * cin + c] = xp[(b * cin + c) * T + t];
    for (std::size_t t = 0; t < t_out; ++t)
      std::copy(bp, bp + cout, yt.begin() + t * cout);
    for (std::size_t j = 0; j < K; ++j) {
      const std::size_t sh = dilation * j;
      const real* wj = w_tap.data() + j * cin * cout;
      if (causal_pad) {
        if (sh < T)
          kk().gemm_nn(xt.data(), wj, yt.data() + sh * cout, T - sh, cin, cout);
      } else {
        kk().gemm_nn(xt.data() + (reach - sh) * cin, wj, yt.data(), t_out, cin,
                     cout);
      }
    }
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t t = 0; t < t_out; ++t)
        op[(b * cout + o) * t_out + t] = yt[t * cout + o];
  }
  check_finite(out, "conv1d");
  if (track) {
    auto xn = x.node(), wn = w.node(), bn = bias.node(), on = out.node();
    record({&x, &w, &bias}, out, [xn, wn, bn, on, B, cin, cout, T, K, dilation,
                                  causal_pad, reach, t_out] {
      const real* g = on->grad.data();
      // w[o,c,j] -> per-tap [o,c]
      std::vector<real> w_oc(K * cout * cin);
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t j = 0; j < K; ++j)
            w_oc[(j * cout + o) * cin + c] = wn->value[(o * cin + c) * K + j];
      std::vector<real> gt(t_out * cout), xt(T * cin), dxt(T * cin);
      std::vector<real> dwj(cout * cin);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
          const real* grow = g + (b * cout + o) * t_out;
          if (bn->requires_grad) bn->grad[o] += kk().sum(grow, t_out);
          for (std::size_t t = 0; t < t_out; ++t) gt[t * cout + o] = grow[t];
        }
        if (xn->requires_grad || wn->requires_grad)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t t = 0; t < T; ++t)
              xt[t * cin + c] = xn->value[(b * cin + c) * T + t];
        if (xn->requires_grad) std::fill(dxt.begin(), dxt.end(), real(0));
        for (std::size_t j = 0; j < K; ++j) {
          const std::size_t sh = dilation * j;
          if (causal_pad && sh >= T) continue;
          const std::size_t rows = causal_pad ? T - sh : t_out;
          const std::size_t g_off = causal_pad ? sh * cout : 0;
          const std::size_t x_off = causal_pad ? 0 : (reach - sh) * cin;
          if (xn->requires_grad)
            kk().gemm_nn(gt.data() + g_off, w_oc.data() + j * cout * cin,
                         dxt.data() + x_off, rows, cout, cin);
          if (wn->requires_grad) {
            std::fill(dwj.begin(), dwj.end(), real(0));
            kk().gemm_tn(gt.data() + g_off, xt.data() + x_off, dwj.data(), rows,
                         cout, cin);
            for (std::size_t o = 0; o < cout; ++o)
              for (std::size_t c = 0; c < cin; ++c)
                wn->grad[(o * cin + c) * K + j] += dwj[o * cin + c];
          }
        }
        if (xn->requires_grad)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t t = 0; t < T; ++t)
              xn->grad[(b * cin + c) * T + t] += dxt[t * cin + c];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool track = want_track({&x});
  Tensor out = make_op_output({1}, track);
  out.mutable_data()[0] = kk().sum(x.data().data(), x.size());
  check_finite(out, "sum");
  if (track) {
    auto xn = x.node(), on = out.node();
    record({&x}, out, [xn, on] {
      const real g = on->grad[0];
      real* gx = xn->grad.data();
      for (std::size_t i = 0; i < xn->grad.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

}  // namespace ops

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<real> v(shape_size(shape));
  for (real& x : v) x = static_cast<real>(rng.uniform(-bound, bound));
  return Tensor::from_data(std::move(shape), std::move(v), /*requires_grad=*/true);
}

}  // namespace gsabt
