#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gsabt/errors.hpp"
#include "gsabt/real.hpp"
#include "gsabt/rng.hpp"

// Dense row-major tensors with define-by-run reverse-mode differentiation.
// A Tensor is a cheap shared handle to its storage node. Ops record a
// backward closure onto the thread-local active Tape (see TapeScope) whenever
// any input is tracked; with no active tape they are plain forward math.
// Forward values are checked finite after every op; -inf is tolerated only
// where it acts as a softmax mask sentinel.

namespace gsabt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until first needed
  bool requires_grad = false;
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const real> data() const { return node_->value; }
  // Direct writes are for leaves (parameters, inputs) between passes; writing
  // to an intermediate invalidates any tape that references it.
  std::span<real> mutable_data() { return node_->value; }

  real item() const;  // scalar tensors only

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  // Debug text dump: one shape line, then row-major values at 17 significant
  // digits, one per line.
  std::string dump() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
  friend Tensor make_op_output(Shape shape, bool track);
};

constexpr real kNoKink = std::numeric_limits<real>::infinity();

// Ordered record of a forward pass. backward() replays the recorded ops in
// exact reverse order, accumulating into leaf gradients. Re-running
// backward() accumulates again (intermediate gradients are re-zeroed, leaves
// are not). One tape is single-threaded; independent tapes may run on
// different threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Smallest distance to a non-differentiable point (relu/abs kink, top-u
  // tie) seen by any recorded op. Gradient checks resample inputs when this
  // is below their margin.
  real min_kink_distance() const;

  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }

  void record(std::shared_ptr<detail::Node> out, std::function<void()> fn,
              real kink_distance = kNoKink);

 private:
  struct Entry {
    std::shared_ptr<detail::Node> out;
    std::function<void()> backward;
    real kink;
  };
  std::vector<Entry> entries_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Toggle the per-op finite scan (default on).
void set_finite_checks(bool on);
bool finite_checks_enabled();

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, real s);
// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a[..., m, k] * b[k, n] (shared weights), or a[..., m, k] * b[..., k, n]
// with identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., m, k] * b[..., n, k]^T -> [..., m, n]; b may also be rank-2 [n, k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor dropout(const Tensor& x, real p, bool training, Rng& rng);

// Row softmax over the last axis. -inf entries map to exact 0; a row of all
// -inf raises NumericError (degenerate attention row).
Tensor softmax_rows(const Tensor& x);

// keep tiles over x (its length must divide x.size()); entries with keep==0
// are replaced by fill and block gradient flow.
Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& keep,
                   real fill);

// Per row of the last axis, keep the min(u, n) largest entries (ties broken
// toward the lowest column) and set the rest to -inf. survivors_out, when
// given, receives one byte per element (1 = kept).
Tensor top_u_sparsify(const Tensor& x, std::size_t u,
                      std::vector<std::uint8_t>* survivors_out = nullptr);

Tensor concat(std::size_t axis, const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor flip(const Tensor& x, std::size_t axis);

// x[B, C_in, T], w[C_out, C_in, K], bias[C_out]. causal_pad=true left-pads
// time by (K-1)*dilation zeros so the output keeps length T and y[t] sees
// only inputs at times <= t; causal_pad=false is a valid convolution with
// output length T - dilation*(K-1).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t dilation, bool causal_pad);

Tensor sum(const Tensor& x);  // -> scalar

}  // namespace ops

// Uniform init in +-sqrt(6 / (fan_in + fan_out)); biases are zeros elsewhere.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng);

}  // namespace gsabt
